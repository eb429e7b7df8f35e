//! Standard errors from the observed information matrix.
//!
//! The parameter vector is minimal: one representative per tie class and,
//! within each row, the interior free cells except the last one (which
//! absorbs the remaining mass). The Hessian of the log-likelihood is
//! obtained by central differences of the exact score, which the E-step
//! provides through `∂ℓ/∂p_c = E[count_c | data] / p_c`. Variances are
//! mapped back to every cell of the row by the delta method.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::em::e_step;
use crate::model::{Block, CellRef, Dims, ModelSpec, ParameterSet};
use crate::panel::PanelTable;

/// Relative step of the central differences.
pub const RELATIVE_STEP: f64 = 1e-5;

/// Per-cell standard errors; `None` marks cells whose SE is not estimable
/// (boundary, fixed, or a singular information matrix).
#[derive(Clone, Debug, PartialEq)]
pub struct StandardErrors {
    dims: Dims,
    delta: Vec<Option<f64>>,
    rho: Vec<Option<f64>>,
    tau: Vec<Option<f64>>,
    /// Set when the information matrix could not be inverted.
    pub failure: Option<String>,
}

impl StandardErrors {
    fn empty(dims: Dims) -> Self {
        StandardErrors {
            dims,
            delta: vec![None; dims.delta_len()],
            rho: vec![None; dims.rho_len()],
            tau: vec![None; dims.tau_len()],
            failure: None,
        }
    }

    fn slot(&mut self, cell: CellRef) -> &mut Option<f64> {
        let ix = self.dims.row_offset(cell.row) + cell.col;
        match cell.row.block() {
            Block::Delta => &mut self.delta[ix],
            Block::Rho => &mut self.rho[ix],
            Block::Tau => &mut self.tau[ix],
        }
    }

    pub fn get(&self, cell: CellRef) -> Option<f64> {
        let ix = self.dims.row_offset(cell.row) + cell.col;
        match cell.row.block() {
            Block::Delta => self.delta[ix],
            Block::Rho => self.rho[ix],
            Block::Tau => self.tau[ix],
        }
    }

    pub fn from_document(doc: &StandardErrorDocument) -> Self {
        let classes = doc.delta.first().map_or(0, Vec::len);
        let categories = doc
            .rho
            .first()
            .and_then(|t| t.first())
            .and_then(|g| g.first())
            .map_or(0, Vec::len);
        let dims = Dims {
            groups: doc.delta.len(),
            categories,
            occasions: doc.rho.len(),
            classes,
        };
        let flat4 = |v: &Vec<Vec<Vec<Vec<Option<f64>>>>>| -> Vec<Option<f64>> {
            v.iter().flatten().flatten().flatten().copied().collect()
        };
        StandardErrors {
            dims,
            delta: doc.delta.iter().flatten().copied().collect(),
            rho: flat4(&doc.rho),
            tau: flat4(&doc.tau),
            failure: doc.failure.clone(),
        }
    }

    pub fn to_document(&self) -> StandardErrorDocument {
        let d = self.dims;
        let rows = |block: &Vec<Option<f64>>, width: usize| -> Vec<Vec<Option<f64>>> {
            block.chunks(width).map(|c| c.to_vec()).collect()
        };
        let nest = |rows: Vec<Vec<Option<f64>>>, outer: usize| -> Vec<Vec<Vec<Vec<Option<f64>>>>> {
            if rows.is_empty() || outer == 0 {
                return Vec::new();
            }
            let per_outer = rows.len() / outer;
            rows.chunks(per_outer)
                .map(|o| o.chunks(d.classes).map(|g| g.to_vec()).collect())
                .collect()
        };
        StandardErrorDocument {
            delta: rows(&self.delta, d.classes),
            rho: nest(rows(&self.rho, d.categories), d.occasions),
            tau: nest(rows(&self.tau, d.classes), d.transitions()),
            failure: self.failure.clone(),
        }
    }
}

/// JSON layout mirroring the parameter document; `null` = not estimable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardErrorDocument {
    pub delta: Vec<Vec<Option<f64>>>,
    pub rho: Vec<Vec<Vec<Vec<Option<f64>>>>>,
    pub tau: Vec<Vec<Vec<Vec<Option<f64>>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

struct FreeRow {
    class: usize,
    /// Interior free columns; the last one is eliminated.
    cols: Vec<usize>,
    mass: f64,
}

fn free_rows(spec: &ModelSpec, params: &ParameterSet<f64>) -> Vec<FreeRow> {
    spec.row_classes()
        .iter()
        .enumerate()
        .filter_map(|(k, class)| {
            let row = params.row(class.representative());
            let cols: Vec<usize> = class
                .free_columns()
                .filter(|&c| row[c] > 0.0 && row[c] < 1.0)
                .collect();
            if cols.len() < 2 {
                return None;
            }
            let mass = cols.iter().map(|&c| row[c]).sum();
            Some(FreeRow { class: k, cols, mass })
        })
        .collect()
}

fn theta_of(rows: &[FreeRow], spec: &ModelSpec, params: &ParameterSet<f64>) -> Vec<f64> {
    let mut theta = Vec::new();
    for fr in rows {
        let row = params.row(spec.row_classes()[fr.class].representative());
        theta.extend(fr.cols[..fr.cols.len() - 1].iter().map(|&c| row[c]));
    }
    theta
}

fn with_theta(
    rows: &[FreeRow],
    spec: &ModelSpec,
    base: &ParameterSet<f64>,
    theta: &[f64],
) -> ParameterSet<f64> {
    let mut p = base.clone();
    let mut k = 0;
    for fr in rows {
        let class = &spec.row_classes()[fr.class];
        let mut values = base.row(class.representative()).to_vec();
        let mut used = 0.0;
        for &c in &fr.cols[..fr.cols.len() - 1] {
            values[c] = theta[k];
            used += theta[k];
            k += 1;
        }
        values[*fr.cols.last().unwrap()] = fr.mass - used;
        for &m in &class.members {
            p.row_mut(m).copy_from_slice(&values);
        }
    }
    p
}

fn score(
    rows: &[FreeRow],
    spec: &ModelSpec,
    params: &ParameterSet<f64>,
    table: &PanelTable,
) -> Option<Vec<f64>> {
    let counts = e_step(params, table).ok()?;
    let dims = spec.dims();
    let mut grad = Vec::new();
    for fr in rows {
        let class = &spec.row_classes()[fr.class];
        let rep = params.row(class.representative());
        let mut pooled = vec![0.0; class.fixed.len()];
        for &m in &class.members {
            let off = dims.row_offset(m);
            for (c, slot) in pooled.iter_mut().enumerate() {
                *slot += counts.block(m.block())[off + c];
            }
        }
        let last = *fr.cols.last().unwrap();
        let tail = pooled[last] / rep[last];
        for &c in &fr.cols[..fr.cols.len() - 1] {
            grad.push(pooled[c] / rep[c] - tail);
        }
    }
    Some(grad)
}

/// Standard errors of a converged, boundary-snapped parameter set.
pub fn standard_errors(
    spec: &ModelSpec,
    params: &ParameterSet<f64>,
    table: &PanelTable,
) -> StandardErrors {
    let dims = *spec.dims();
    let mut out = StandardErrors::empty(dims);
    let rows = free_rows(spec, params);
    let theta = theta_of(&rows, spec, params);
    let n = theta.len();
    if n == 0 {
        return out;
    }

    let mut hessian = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let h = RELATIVE_STEP * theta[i].abs().max(1e-3);
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        plus[i] += h;
        minus[i] -= h;
        let (Some(gp), Some(gm)) = (
            score(&rows, spec, &with_theta(&rows, spec, params, &plus), table),
            score(&rows, spec, &with_theta(&rows, spec, params, &minus), table),
        ) else {
            out.failure = Some(format!("score undefined near parameter {i}"));
            return out;
        };
        for r in 0..n {
            hessian[(r, i)] = (gp[r] - gm[r]) / (2.0 * h);
        }
    }
    let information = -(&hessian + hessian.transpose()) * 0.5;
    let Some(chol) = information.clone().cholesky() else {
        out.failure = Some("observed information matrix is not positive definite".into());
        return out;
    };
    let cov = chol.inverse();

    let mut k = 0;
    for fr in &rows {
        let m = fr.cols.len() - 1;
        let block = cov.view((k, k), (m, m));
        let ones = DVector::<f64>::from_element(m, 1.0);
        let var_last = (ones.transpose() * block * &ones)[(0, 0)];
        let class = &spec.row_classes()[fr.class];
        for (i, &c) in fr.cols.iter().enumerate() {
            let var = if i < m { cov[(k + i, k + i)] } else { var_last };
            if var.is_finite() && var >= 0.0 {
                for &member in &class.members {
                    *out.slot(CellRef { row: member, col: c }) = Some(var.sqrt());
                }
            }
        }
        k += m;
    }
    out
}
