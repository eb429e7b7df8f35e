//! Boundary snapping and free-parameter accounting.

use crate::model::{CellRef, ModelSpec, ParameterSet};
use crate::scalar::Real;

/// Snaps free cells within `tol` of 0 or 1 onto the boundary and rescales
/// the remaining interior free cells of the row to restore the row sum.
/// Returns the snapped parameters and every snapped cell (all members of
/// each tie class).
pub fn snap_boundaries<F: Real>(
    spec: &ModelSpec,
    params: &ParameterSet<F>,
    tol: f64,
) -> (ParameterSet<F>, Vec<CellRef>) {
    let mut out = params.clone();
    let mut boundary = Vec::new();
    for class in spec.row_classes() {
        if class.is_fully_fixed() {
            continue;
        }
        let rep = class.representative();
        let mut row: Vec<f64> = params.row(rep).iter().map(|v| v.as_f64()).collect();
        let free_mass = 1.0 - class.fixed_mass();
        let mut snapped_cols = Vec::new();
        let mut one = None;
        for c in class.free_columns() {
            if row[c] < tol {
                row[c] = 0.0;
                snapped_cols.push(c);
            } else if row[c] > 1.0 - tol {
                one = Some(c);
            }
        }
        if let Some(c) = one {
            for k in class.free_columns() {
                row[k] = if k == c { 1.0 } else { 0.0 };
                if !snapped_cols.contains(&k) {
                    snapped_cols.push(k);
                }
            }
        } else if !snapped_cols.is_empty() {
            let interior: f64 = class
                .free_columns()
                .filter(|c| !snapped_cols.contains(c))
                .map(|c| row[c])
                .sum();
            if interior > 0.0 {
                let scale = free_mass / interior;
                for c in class.free_columns() {
                    if !snapped_cols.contains(&c) {
                        row[c] *= scale;
                    }
                }
            }
        }
        if snapped_cols.is_empty() {
            continue;
        }
        snapped_cols.sort_unstable();
        let values: Vec<F> = row.iter().map(|&v| F::of(v)).collect();
        for &member in &class.members {
            out.row_mut(member).copy_from_slice(&values);
            for &col in &snapped_cols {
                boundary.push(CellRef { row: member, col });
            }
        }
    }
    boundary.sort();
    (out, boundary)
}

/// Number of estimated parameters: for each tie class, the free cells
/// strictly inside `(tol, 1 − tol)` minus one, floored at zero. Fixed
/// cells, boundary cells and γ are not counted.
pub fn count_free_parameters<F: Real>(
    params: &ParameterSet<F>,
    spec: &ModelSpec,
    boundary_tol: f64,
) -> usize {
    spec.row_classes()
        .iter()
        .filter(|class| !class.is_fully_fixed())
        .map(|class| {
            let row = params.row(class.representative());
            let interior = class
                .free_columns()
                .filter(|&c| {
                    let v = row[c].as_f64();
                    v > boundary_tol && v < 1.0 - boundary_tol
                })
                .count();
            interior.saturating_sub(1)
        })
        .sum()
}

/// `Σ_h (J^T − 1) − free_parameters`.
pub fn degrees_of_freedom(spec: &ModelSpec, free_parameters: usize) -> i64 {
    spec.dims().saturated_parameters() as i64 - free_parameters as i64
}
