use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::spec::{Block, ConstraintSet, Dims, RowRef};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum ParamsError {
    #[error("{field} has shape that does not match the declared dimensions")]
    Shape { field: &'static str },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Dims(#[from] super::spec::SpecError),
}

/// Full probability parameterization of a latent Markov model.
///
/// Storage is flat per block; rows are addressed with [`RowRef`].
///
/// * `gamma[h]`: group proportions
/// * `delta[h][a]`: initial class proportions
/// * `rho[t][h][a][j]`: response probabilities
/// * `tau[s][h][a][b]`: transition probabilities from occasion `s` to `s + 1`
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet<F> {
    dims: Dims,
    gamma: Vec<F>,
    delta: Vec<F>,
    rho: Vec<F>,
    tau: Vec<F>,
}

impl<F: Real> ParameterSet<F> {
    /// Every row uniform; groups equally weighted.
    pub fn uniform(dims: Dims) -> Self {
        let h = F::of_count(dims.groups as u64);
        let a = F::of_count(dims.classes as u64);
        let j = F::of_count(dims.categories as u64);
        ParameterSet {
            dims,
            gamma: vec![F::one() / h; dims.groups],
            delta: vec![F::one() / a; dims.delta_len()],
            rho: vec![F::one() / j; dims.rho_len()],
            tau: vec![F::one() / a; dims.tau_len()],
        }
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn gamma(&self) -> &[F] {
        &self.gamma
    }

    pub fn set_gamma(&mut self, gamma: Vec<F>) {
        assert_eq!(gamma.len(), self.dims.groups);
        self.gamma = gamma;
    }

    /// Sets γ to the empirical group shares `n_h / N`.
    pub fn set_gamma_from_counts(&mut self, totals: &[u64]) {
        let n: u64 = totals.iter().sum();
        if n > 0 {
            self.gamma = totals
                .iter()
                .map(|&t| F::of_count(t) / F::of_count(n))
                .collect();
        }
    }

    pub fn block(&self, block: Block) -> &[F] {
        match block {
            Block::Delta => &self.delta,
            Block::Rho => &self.rho,
            Block::Tau => &self.tau,
        }
    }

    fn block_mut(&mut self, block: Block) -> &mut [F] {
        match block {
            Block::Delta => &mut self.delta,
            Block::Rho => &mut self.rho,
            Block::Tau => &mut self.tau,
        }
    }

    pub fn row(&self, row: RowRef) -> &[F] {
        let off = self.dims.row_offset(row);
        let len = self.dims.row_len(row);
        &self.block(row.block())[off..off + len]
    }

    pub fn row_mut(&mut self, row: RowRef) -> &mut [F] {
        let off = self.dims.row_offset(row);
        let len = self.dims.row_len(row);
        &mut self.block_mut(row.block())[off..off + len]
    }

    #[inline]
    pub fn delta(&self, group: usize, class: usize) -> F {
        self.delta[group * self.dims.classes + class]
    }

    #[inline]
    pub fn rho(&self, occasion: usize, group: usize, class: usize, category: usize) -> F {
        let d = &self.dims;
        self.rho[((occasion * d.groups + group) * d.classes + class) * d.categories + category]
    }

    #[inline]
    pub fn tau(&self, transition: usize, group: usize, from: usize, to: usize) -> F {
        let d = &self.dims;
        self.tau[((transition * d.groups + group) * d.classes + from) * d.classes + to]
    }

    /// Relabels latent classes: class `a` becomes class `perm[a]`.
    pub fn permute_classes(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        for row in self.dims.rows() {
            let src = self.row(row);
            let dst_row = row.permuted(perm);
            let permute_cols = matches!(row.block(), Block::Delta | Block::Tau);
            let dst = out.row_mut(dst_row);
            for (c, &v) in src.iter().enumerate() {
                let col = if permute_cols { perm[c] } else { c };
                dst[col] = v;
            }
        }
        out
    }

    pub fn cast<G: Real>(&self) -> ParameterSet<G> {
        let conv = |v: &Vec<F>| v.iter().map(|x| G::of(x.as_f64())).collect();
        ParameterSet {
            dims: self.dims,
            gamma: conv(&self.gamma),
            delta: conv(&self.delta),
            rho: conv(&self.rho),
            tau: conv(&self.tau),
        }
    }

    pub fn to_document(&self, constraints: Option<&ConstraintSet>) -> ParameterDocument<F> {
        let d = self.dims;
        let delta = (0..d.groups)
            .map(|g| self.row(RowRef::Delta { group: g }).to_vec())
            .collect();
        let rho = (0..d.occasions)
            .map(|t| {
                (0..d.groups)
                    .map(|g| {
                        (0..d.classes)
                            .map(|a| {
                                self.row(RowRef::Rho {
                                    occasion: t,
                                    group: g,
                                    class: a,
                                })
                                .to_vec()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let tau = (0..d.transitions())
            .map(|s| {
                (0..d.groups)
                    .map(|g| {
                        (0..d.classes)
                            .map(|a| {
                                self.row(RowRef::Tau {
                                    transition: s,
                                    group: g,
                                    from: a,
                                })
                                .to_vec()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        ParameterDocument {
            dims: d,
            gamma: self.gamma.clone(),
            delta,
            rho,
            tau,
            constraints: constraints.cloned(),
        }
    }

    pub fn from_document(doc: &ParameterDocument<F>) -> Result<Self, ParamsError> {
        let d = doc.dims;
        d.check()?;
        let shape = |ok: bool, field| if ok { Ok(()) } else { Err(ParamsError::Shape { field }) };
        shape(doc.gamma.len() == d.groups, "gamma")?;
        shape(
            doc.delta.len() == d.groups && doc.delta.iter().all(|r| r.len() == d.classes),
            "delta",
        )?;
        shape(
            doc.rho.len() == d.occasions
                && doc.rho.iter().all(|t| {
                    t.len() == d.groups
                        && t.iter().all(|g| {
                            g.len() == d.classes && g.iter().all(|r| r.len() == d.categories)
                        })
                }),
            "rho",
        )?;
        shape(
            doc.tau.len() == d.transitions()
                && doc.tau.iter().all(|t| {
                    t.len() == d.groups
                        && t.iter()
                            .all(|g| g.len() == d.classes && g.iter().all(|r| r.len() == d.classes))
                }),
            "tau",
        )?;
        let flat4 = |v: &Vec<Vec<Vec<Vec<F>>>>| -> Vec<F> {
            v.iter().flatten().flatten().flatten().copied().collect()
        };
        Ok(ParameterSet {
            dims: d,
            gamma: doc.gamma.clone(),
            delta: doc.delta.iter().flatten().copied().collect(),
            rho: flat4(&doc.rho),
            tau: flat4(&doc.tau),
        })
    }

    pub fn to_json(&self, constraints: Option<&ConstraintSet>) -> String {
        serde_json::to_string_pretty(&self.to_document(constraints)).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<(Self, Option<ConstraintSet>), ParamsError> {
        let doc: ParameterDocument<F> = serde_json::from_str(text)?;
        Ok((Self::from_document(&doc)?, doc.constraints))
    }
}

/// JSON shape of a parameter set: nested arrays indexed
/// `delta[h][a]`, `rho[t][h][a][j]`, `tau[s][h][a][b]`, all zero-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct ParameterDocument<F> {
    pub dims: Dims,
    pub gamma: Vec<F>,
    pub delta: Vec<Vec<F>>,
    pub rho: Vec<Vec<Vec<Vec<F>>>>,
    pub tau: Vec<Vec<Vec<Vec<F>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<ConstraintSet>,
}
