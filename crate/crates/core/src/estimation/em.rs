//! One EM iteration under a constraint set.

use thiserror::Error;

use crate::model::{eval::check_table, Block, EvalError, ForwardBackward, ModelSpec, ParameterSet, RowRef};
use crate::panel::{PanelTable, Pattern};
use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum EmError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("observed pattern {pattern:?} in group {group} has zero likelihood")]
    ZeroLikelihood { group: usize, pattern: Vec<u16> },
}

/// Frequency-weighted posterior counts, laid out like the parameter
/// blocks they re-estimate.
#[derive(Clone, Debug)]
pub struct ExpectedCounts<F> {
    pub delta: Vec<F>,
    pub rho: Vec<F>,
    pub tau: Vec<F>,
    /// Log-likelihood of the parameters the counts were computed at.
    pub log_likelihood: F,
}

impl<F: Real> ExpectedCounts<F> {
    fn zeros(params: &ParameterSet<F>) -> Self {
        let d = params.dims();
        ExpectedCounts {
            delta: vec![F::zero(); d.delta_len()],
            rho: vec![F::zero(); d.rho_len()],
            tau: vec![F::zero(); d.tau_len()],
            log_likelihood: F::zero(),
        }
    }

    pub fn block(&self, block: Block) -> &[F] {
        match block {
            Block::Delta => &self.delta,
            Block::Rho => &self.rho,
            Block::Tau => &self.tau,
        }
    }
}

/// E-step: accumulates `n · P(latent | pattern)` over every observed cell.
pub fn e_step<F: Real>(
    params: &ParameterSet<F>,
    table: &PanelTable,
) -> Result<ExpectedCounts<F>, EmError> {
    check_table(params, table)?;
    let d = *params.dims();
    let (a_n, j_n) = (d.classes, d.categories);
    let mut fb = ForwardBackward::new(d.classes, d.occasions);
    let mut counts = ExpectedCounts::zeros(params);
    let mut ll = F::zero();
    for g in 0..d.groups {
        for (pattern, n) in table.cells(g) {
            let ll_cell = fb.forward(params, g, pattern);
            if !ll_cell.is_finite() {
                return Err(EmError::ZeroLikelihood {
                    group: g,
                    pattern: pattern.0.clone(),
                });
            }
            fb.backward(params, g);
            let w = F::of_count(n);
            ll = ll + w * ll_cell;
            accumulate(&mut counts, params, &fb, g, pattern, w, a_n, j_n);
        }
    }
    counts.log_likelihood = ll;
    Ok(counts)
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn accumulate<F: Real>(
    counts: &mut ExpectedCounts<F>,
    params: &ParameterSet<F>,
    fb: &ForwardBackward<F>,
    g: usize,
    pattern: &Pattern,
    w: F,
    a_n: usize,
    j_n: usize,
) {
    let d = params.dims();
    let h_n = d.groups;
    for a in 0..a_n {
        counts.delta[g * a_n + a] = counts.delta[g * a_n + a] + w * fb.state_posterior(0, a);
    }
    for (t, &y) in pattern.categories().iter().enumerate() {
        for a in 0..a_n {
            let ix = ((t * h_n + g) * a_n + a) * j_n + y as usize;
            counts.rho[ix] = counts.rho[ix] + w * fb.state_posterior(t, a);
        }
    }
    for s in 0..d.transitions() {
        for a in 0..a_n {
            let base = ((s * h_n + g) * a_n + a) * a_n;
            for b in 0..a_n {
                counts.tau[base + b] = counts.tau[base + b] + w * fb.pair_posterior(params, g, s, a, b);
            }
        }
    }
}

/// M-step: each tie class is re-estimated from its members' pooled counts;
/// fixed cells keep their constants and the remaining mass is shared by
/// the free cells in proportion to their counts.
///
/// Returns the new parameters and the classes whose free cells received no
/// expected mass (left unchanged).
pub fn m_step<F: Real>(
    spec: &ModelSpec,
    params: &ParameterSet<F>,
    counts: &ExpectedCounts<F>,
) -> (ParameterSet<F>, Vec<RowRef>) {
    let dims = spec.dims();
    let mut next = params.clone();
    let mut starved = Vec::new();
    for class in spec.row_classes() {
        if class.is_fully_fixed() {
            continue;
        }
        let width = class.fixed.len();
        let mut pooled = vec![F::zero(); width];
        for &row in &class.members {
            let off = dims.row_offset(row);
            let src = &counts.block(row.block())[off..off + width];
            for (p, &c) in pooled.iter_mut().zip(src) {
                *p = *p + c;
            }
        }
        let free_total: F = class.free_columns().map(|c| pooled[c]).sum();
        if free_total <= F::zero() {
            starved.push(class.representative());
            continue;
        }
        let free_mass = F::of(1.0 - class.fixed_mass());
        let mut row = vec![F::zero(); width];
        for (c, fixed) in class.fixed.iter().enumerate() {
            row[c] = match fixed {
                Some(v) => F::of(*v),
                None => free_mass * pooled[c] / free_total,
            };
        }
        for &member in &class.members {
            next.row_mut(member).copy_from_slice(&row);
        }
    }
    (next, starved)
}

/// Result of [`em_step`].
#[derive(Clone, Debug)]
pub struct EmStep<F> {
    pub params: ParameterSet<F>,
    /// Log-likelihood of the input parameters.
    pub log_likelihood: F,
    pub starved_rows: Vec<RowRef>,
}

/// One full EM update.
pub fn em_step<F: Real>(
    params: &ParameterSet<F>,
    table: &PanelTable,
    spec: &ModelSpec,
) -> Result<EmStep<F>, EmError> {
    let counts = e_step(params, table)?;
    let (next, starved_rows) = m_step(spec, params, &counts);
    Ok(EmStep {
        params: next,
        log_likelihood: counts.log_likelihood,
        starved_rows,
    })
}

/// Log-likelihood `Σ n ln p` of the table under the parameters
/// (conditional on group); `-inf` if an observed cell is impossible.
pub fn log_likelihood<F: Real>(params: &ParameterSet<F>, table: &PanelTable) -> Result<F, EvalError> {
    check_table(params, table)?;
    let d = params.dims();
    let mut fb = ForwardBackward::new(d.classes, d.occasions);
    let mut ll = F::zero();
    for g in 0..d.groups {
        for (pattern, n) in table.cells(g) {
            ll = ll + F::of_count(n) * fb.forward(params, g, pattern);
        }
    }
    Ok(ll)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dims, RowRef};

    #[test]
    fn deterministic_manifest_chain_is_a_fixed_point() {
        let dims = Dims::new(1, 2, 3, 2).unwrap();
        let spec = ModelSpec::builder(dims).manifest().build().unwrap();
        let mut p = ParameterSet::<f64>::uniform(dims);
        p.row_mut(RowRef::Delta { group: 0 }).copy_from_slice(&[1.0, 0.0]);
        for row in dims.rows() {
            match row {
                RowRef::Rho { class, .. } | RowRef::Tau { from: class, .. } => {
                    let r = p.row_mut(row);
                    r.fill(0.0);
                    r[class] = 1.0;
                }
                _ => {}
            }
        }
        let mut table = PanelTable::new(3, vec!["a".into(), "b".into()], vec!["g".into()]).unwrap();
        table.add(0, Pattern(vec![0, 0, 0]), 40).unwrap();
        let step = em_step(&p, &table, &spec).unwrap();
        assert_eq!(step.params, p);
        assert_eq!(step.log_likelihood, 0.0);
        // class 2's transition row never receives mass
        assert!(step.starved_rows.contains(&RowRef::Tau {
            transition: 0,
            group: 0,
            from: 1
        }));
    }

    #[test]
    fn fixed_cells_survive_and_rows_renormalize() {
        let dims = Dims::new(1, 3, 2, 2).unwrap();
        let row = RowRef::Rho {
            occasion: 0,
            group: 0,
            class: 0,
        };
        let spec = ModelSpec::builder(dims)
            .fix(crate::model::CellRef { row, col: 2 }, 0.25)
            .build()
            .unwrap();
        let mut p = ParameterSet::<f64>::uniform(dims);
        p.row_mut(row).copy_from_slice(&[0.5, 0.25, 0.25]);
        let mut table = PanelTable::new(2, vec!["1".into(), "2".into(), "3".into()], vec!["g".into()]).unwrap();
        table.add(0, Pattern(vec![0, 1]), 10).unwrap();
        table.add(0, Pattern(vec![2, 2]), 3).unwrap();
        table.add(0, Pattern(vec![1, 0]), 6).unwrap();
        let next = em_step(&p, &table, &spec).unwrap().params;
        let r = next.row(row);
        assert_eq!(r[2], 0.25);
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
