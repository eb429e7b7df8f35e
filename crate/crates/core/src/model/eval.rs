//! Likelihood evaluation: scaled forward-backward recursions over the latent
//! chain, expected frequencies, and the joint pattern × path table.

use thiserror::Error;

use super::params::ParameterSet;
use crate::panel::{lattice_size, PanelTable, Pattern};
use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("group {group} out of range (H = {groups})")]
    GroupOutOfRange { group: usize, groups: usize },
    #[error("pattern {pattern:?} does not match T = {occasions}, J = {categories}")]
    PatternOutOfRange {
        pattern: Vec<u16>,
        occasions: usize,
        categories: usize,
    },
    #[error("pattern {0:?} has zero likelihood under the parameters; posteriors undefined")]
    ZeroLikelihood(Vec<u16>),
    #[error("non-finite value in forward recursion for pattern {0:?}")]
    NonFinite(Vec<u16>),
    #[error("table is {table} but parameters are {params}")]
    DimensionMismatch { table: String, params: String },
}

fn check_indices<F: Real>(
    params: &ParameterSet<F>,
    group: usize,
    pattern: &Pattern,
) -> Result<(), EvalError> {
    let d = params.dims();
    if group >= d.groups {
        return Err(EvalError::GroupOutOfRange {
            group,
            groups: d.groups,
        });
    }
    if pattern.len() != d.occasions || pattern.0.iter().any(|&c| c as usize >= d.categories) {
        return Err(EvalError::PatternOutOfRange {
            pattern: pattern.0.clone(),
            occasions: d.occasions,
            categories: d.categories,
        });
    }
    Ok(())
}

/// Posterior distribution of the latent chain given one response pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct Posterior<F> {
    pub likelihood: F,
    pub log_likelihood: F,
    /// `state[t][a]` = P(class a at occasion t | pattern)
    pub state: Vec<Vec<F>>,
    /// `pair[s][a][b]` = P(class a at s, class b at s + 1 | pattern)
    pub pair: Vec<Vec<Vec<F>>>,
}

/// Reusable buffers for scaled forward-backward passes.
///
/// The forward variables are renormalized at every occasion and the scale
/// factors are kept, so `log L = Σ_t ln c_t` stays finite for long chains.
#[derive(Clone, Debug)]
pub struct ForwardBackward<F> {
    classes: usize,
    occasions: usize,
    alpha: Vec<F>,
    beta: Vec<F>,
    scale: Vec<F>,
    emit: Vec<F>,
}

impl<F: Real> ForwardBackward<F> {
    pub fn new(classes: usize, occasions: usize) -> Self {
        ForwardBackward {
            classes,
            occasions,
            alpha: vec![F::zero(); classes * occasions],
            beta: vec![F::zero(); classes * occasions],
            scale: vec![F::zero(); occasions],
            emit: vec![F::zero(); classes * occasions],
        }
    }

    /// Forward pass only. Returns `ln L`, `-inf` when the pattern is
    /// impossible under the parameters.
    pub fn forward(&mut self, params: &ParameterSet<F>, group: usize, pattern: &Pattern) -> F {
        let a_n = self.classes;
        let y = pattern.categories();
        for t in 0..self.occasions {
            for a in 0..a_n {
                self.emit[t * a_n + a] = params.rho(t, group, a, y[t] as usize);
            }
        }
        let mut log_l = F::zero();
        let mut c = F::zero();
        for a in 0..a_n {
            let v = params.delta(group, a) * self.emit[a];
            self.alpha[a] = v;
            c = c + v;
        }
        if c <= F::zero() {
            self.scale[0] = F::zero();
            return F::neg_infinity();
        }
        self.scale[0] = c;
        log_l = log_l + c.ln();
        for a in 0..a_n {
            self.alpha[a] = self.alpha[a] / c;
        }
        for t in 1..self.occasions {
            let mut c = F::zero();
            for b in 0..a_n {
                let mut acc = F::zero();
                for a in 0..a_n {
                    acc = acc + self.alpha[(t - 1) * a_n + a] * params.tau(t - 1, group, a, b);
                }
                let v = acc * self.emit[t * a_n + b];
                self.alpha[t * a_n + b] = v;
                c = c + v;
            }
            if c <= F::zero() {
                self.scale[t] = F::zero();
                return F::neg_infinity();
            }
            self.scale[t] = c;
            log_l = log_l + c.ln();
            for b in 0..a_n {
                self.alpha[t * a_n + b] = self.alpha[t * a_n + b] / c;
            }
        }
        log_l
    }

    /// Backward pass; requires a preceding successful [`Self::forward`] on
    /// the same inputs.
    pub fn backward(&mut self, params: &ParameterSet<F>, group: usize) {
        let a_n = self.classes;
        let last = self.occasions - 1;
        for a in 0..a_n {
            self.beta[last * a_n + a] = F::one();
        }
        for t in (0..last).rev() {
            let c = self.scale[t + 1];
            for a in 0..a_n {
                let mut acc = F::zero();
                for b in 0..a_n {
                    acc = acc
                        + params.tau(t, group, a, b)
                            * self.emit[(t + 1) * a_n + b]
                            * self.beta[(t + 1) * a_n + b];
                }
                self.beta[t * a_n + a] = acc / c;
            }
        }
    }

    #[inline]
    pub fn state_posterior(&self, occasion: usize, class: usize) -> F {
        let i = occasion * self.classes + class;
        self.alpha[i] * self.beta[i]
    }

    /// P(class `from` at `transition`, class `to` at `transition + 1` | y).
    #[inline]
    pub fn pair_posterior(
        &self,
        params: &ParameterSet<F>,
        group: usize,
        transition: usize,
        from: usize,
        to: usize,
    ) -> F {
        let a_n = self.classes;
        let next = (transition + 1) * a_n + to;
        self.alpha[transition * a_n + from]
            * params.tau(transition, group, from, to)
            * self.emit[next]
            * self.beta[next]
            / self.scale[transition + 1]
    }
}

/// p(pattern | group): the sum over all `A^T` latent paths, evaluated by
/// the forward recursion. Zero for patterns the model excludes.
pub fn cell_probability<F: Real>(
    params: &ParameterSet<F>,
    group: usize,
    pattern: &Pattern,
) -> Result<F, EvalError> {
    check_indices(params, group, pattern)?;
    let d = params.dims();
    let mut fb = ForwardBackward::new(d.classes, d.occasions);
    let log_l = fb.forward(params, group, pattern);
    if log_l == F::neg_infinity() {
        return Ok(F::zero());
    }
    Ok(fb.scale.iter().fold(F::one(), |acc, &c| acc * c))
}

pub fn log_cell_probability<F: Real>(
    params: &ParameterSet<F>,
    group: usize,
    pattern: &Pattern,
) -> Result<F, EvalError> {
    check_indices(params, group, pattern)?;
    let d = params.dims();
    Ok(ForwardBackward::new(d.classes, d.occasions).forward(params, group, pattern))
}

/// Likelihood of one pattern plus the posterior law of the latent states
/// and of adjacent state pairs.
pub fn forward_backward<F: Real>(
    params: &ParameterSet<F>,
    group: usize,
    pattern: &Pattern,
) -> Result<Posterior<F>, EvalError> {
    check_indices(params, group, pattern)?;
    let d = *params.dims();
    let mut fb = ForwardBackward::new(d.classes, d.occasions);
    let log_l = fb.forward(params, group, pattern);
    if log_l == F::neg_infinity() {
        return Err(EvalError::ZeroLikelihood(pattern.0.clone()));
    }
    if !log_l.is_finite() {
        return Err(EvalError::NonFinite(pattern.0.clone()));
    }
    fb.backward(params, group);
    let state = (0..d.occasions)
        .map(|t| (0..d.classes).map(|a| fb.state_posterior(t, a)).collect())
        .collect();
    let pair = (0..d.transitions())
        .map(|s| {
            (0..d.classes)
                .map(|a| {
                    (0..d.classes)
                        .map(|b| fb.pair_posterior(params, group, s, a, b))
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(Posterior {
        likelihood: fb.scale.iter().fold(F::one(), |acc, &c| acc * c),
        log_likelihood: log_l,
        state,
        pair,
    })
}

/// All `J^T` cell probabilities of one group in lexicographic pattern order.
pub fn pattern_distribution<F: Real>(params: &ParameterSet<F>, group: usize) -> Vec<F> {
    let d = params.dims();
    let mut fb = ForwardBackward::new(d.classes, d.occasions);
    crate::panel::lattice(d.categories, d.occasions)
        .map(|p| {
            let ll = fb.forward(params, group, &p);
            if ll == F::neg_infinity() {
                F::zero()
            } else {
                fb.scale.iter().fold(F::one(), |acc, &c| acc * c)
            }
        })
        .collect()
}

/// Model-expected cell counts `n_h · p(pattern | h)` over the full lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpectedTable<F> {
    pub categories: usize,
    pub occasions: usize,
    /// `values[h][lattice index]`
    pub values: Vec<Vec<F>>,
}

impl<F: Real> ExpectedTable<F> {
    pub fn get(&self, group: usize, pattern: &Pattern) -> F {
        self.values[group][pattern.lattice_index(self.categories)]
    }

    pub fn group_sum(&self, group: usize) -> F {
        self.values[group].iter().copied().sum()
    }
}

pub fn expected_frequencies<F: Real>(
    params: &ParameterSet<F>,
    table: &PanelTable,
) -> Result<ExpectedTable<F>, EvalError> {
    check_table(params, table)?;
    let d = params.dims();
    let values = (0..d.groups)
        .map(|g| {
            let n = F::of_count(table.group_total(g));
            pattern_distribution(params, g)
                .into_iter()
                .map(|p| n * p)
                .collect()
        })
        .collect();
    Ok(ExpectedTable {
        categories: d.categories,
        occasions: d.occasions,
        values,
    })
}

pub(crate) fn check_table<F: Real>(
    params: &ParameterSet<F>,
    table: &PanelTable,
) -> Result<(), EvalError> {
    let d = params.dims();
    if d.groups != table.n_groups()
        || d.categories != table.n_categories()
        || d.occasions != table.occasions()
    {
        return Err(EvalError::DimensionMismatch {
            table: format!(
                "H={} J={} T={}",
                table.n_groups(),
                table.n_categories(),
                table.occasions()
            ),
            params: format!("H={} J={} T={}", d.groups, d.categories, d.occasions),
        });
    }
    Ok(())
}

/// Joint probability of (manifest pattern, latent path) for one group,
/// a dense `J^T × A^T` matrix in lexicographic order on both axes.
#[derive(Clone, Debug, PartialEq)]
pub struct JointTable<F> {
    pub categories: usize,
    pub classes: usize,
    pub occasions: usize,
    values: Vec<F>,
}

impl<F: Real> JointTable<F> {
    pub fn n_patterns(&self) -> usize {
        lattice_size(self.categories, self.occasions)
    }

    pub fn n_paths(&self) -> usize {
        lattice_size(self.classes, self.occasions)
    }

    #[inline]
    pub fn get(&self, pattern: usize, path: usize) -> F {
        self.values[pattern * self.n_paths() + path]
    }

    pub fn pattern_margin(&self) -> Vec<F> {
        let paths = self.n_paths();
        self.values.chunks(paths).map(|r| r.iter().copied().sum()).collect()
    }

    pub fn path_margin(&self) -> Vec<F> {
        let paths = self.n_paths();
        let mut out = vec![F::zero(); paths];
        for row in self.values.chunks(paths) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o = *o + v;
            }
        }
        out
    }

    pub fn total(&self) -> F {
        self.values.iter().copied().sum()
    }

    /// Iterates `(pattern, path, probability)` over every entry.
    pub fn entries(&self) -> impl Iterator<Item = (Pattern, Pattern, F)> + '_ {
        let paths = self.n_paths();
        self.values.iter().enumerate().map(move |(i, &v)| {
            (
                Pattern::from_lattice_index(i / paths, self.categories, self.occasions),
                Pattern::from_lattice_index(i % paths, self.classes, self.occasions),
                v,
            )
        })
    }
}

/// Builds the pattern × path table. Size grows as `(J·A)^T`; intended for
/// the short panels this model is used on.
pub fn joint_pattern_table<F: Real>(
    params: &ParameterSet<F>,
    group: usize,
) -> Result<JointTable<F>, EvalError> {
    let d = *params.dims();
    if group >= d.groups {
        return Err(EvalError::GroupOutOfRange {
            group,
            groups: d.groups,
        });
    }
    let n_pat = d.patterns();
    let n_path = d.paths();
    let mut values = vec![F::zero(); n_pat * n_path];
    let mut path_cells = vec![0u16; d.occasions];
    for path_ix in 0..n_path {
        let path = Pattern::from_lattice_index(path_ix, d.classes, d.occasions);
        path_cells.copy_from_slice(path.categories());
        let mut prior = params.delta(group, path_cells[0] as usize);
        for s in 0..d.transitions() {
            prior = prior
                * params.tau(
                    s,
                    group,
                    path_cells[s] as usize,
                    path_cells[s + 1] as usize,
                );
        }
        if prior == F::zero() {
            continue;
        }
        for pat_ix in 0..n_pat {
            let pattern = Pattern::from_lattice_index(pat_ix, d.categories, d.occasions);
            let mut v = prior;
            for (t, &y) in pattern.categories().iter().enumerate() {
                v = v * params.rho(t, group, path_cells[t] as usize, y as usize);
            }
            values[pat_ix * n_path + path_ix] = v;
        }
    }
    Ok(JointTable {
        categories: d.categories,
        classes: d.classes,
        occasions: d.occasions,
        values,
    })
}
