use std::fmt;

use super::params::ParameterSet;
use super::spec::{CellRef, ModelSpec};
use crate::scalar::Real;

/// First rule a parameter set breaks under a model spec.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Dimensions { expected: String, found: String },
    OutOfRange { cell: CellRef, value: f64 },
    RowSum { row: super::spec::RowRef, sum: f64 },
    GammaSum { sum: f64 },
    GammaRange { group: usize, value: f64 },
    TieBroken { cell: CellRef, value: f64, tied_to: CellRef, other: f64 },
    FixBroken { cell: CellRef, value: f64, fixed: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dimensions { expected, found } => {
                write!(f, "dimensions {found} do not match spec {expected}")
            }
            Violation::OutOfRange { cell, value } => write!(f, "{cell} = {value} outside [0, 1]"),
            Violation::RowSum { row, sum } => write!(f, "{row} sums to {sum}"),
            Violation::GammaSum { sum } => write!(f, "gamma sums to {sum}"),
            Violation::GammaRange { group, value } => {
                write!(f, "gamma[group {}] = {value} outside [0, 1]", group + 1)
            }
            Violation::TieBroken {
                cell,
                value,
                tied_to,
                other,
            } => write!(f, "{cell} = {value} differs from tied {tied_to} = {other}"),
            Violation::FixBroken { cell, value, fixed } => {
                write!(f, "{cell} = {value} but is fixed at {fixed}")
            }
        }
    }
}

impl std::error::Error for Violation {}

/// Checks every simplex, tie and fix. Reports the first violation in row
/// storage order.
pub fn validate<F: Real>(spec: &ModelSpec, params: &ParameterSet<F>) -> Result<(), Violation> {
    let dims = spec.dims();
    if dims != params.dims() {
        return Err(Violation::Dimensions {
            expected: format!("{dims:?}"),
            found: format!("{:?}", params.dims()),
        });
    }
    let tol = F::simplex_tolerance().as_f64();

    let mut gamma_sum = 0.0;
    for (group, g) in params.gamma().iter().enumerate() {
        let value = g.as_f64();
        if !(value >= -tol && value <= 1.0 + tol) {
            return Err(Violation::GammaRange { group, value });
        }
        gamma_sum += value;
    }
    if (gamma_sum - 1.0).abs() > tol * dims.groups as f64 {
        return Err(Violation::GammaSum { sum: gamma_sum });
    }

    for row in dims.rows() {
        let values = params.row(row);
        let mut sum = 0.0;
        for (col, v) in values.iter().enumerate() {
            let value = v.as_f64();
            if !(value >= -tol && value <= 1.0 + tol) {
                return Err(Violation::OutOfRange {
                    cell: CellRef { row, col },
                    value,
                });
            }
            sum += value;
        }
        if (sum - 1.0).abs() > tol * values.len() as f64 {
            return Err(Violation::RowSum { row, sum });
        }
        let class = spec.class_of(row);
        let rep = class.representative();
        for (col, v) in values.iter().enumerate() {
            let value = v.as_f64();
            if let Some(fixed) = class.fixed[col] {
                if (value - fixed).abs() > tol {
                    return Err(Violation::FixBroken {
                        cell: CellRef { row, col },
                        value,
                        fixed,
                    });
                }
            }
            if rep != row {
                let other = params.row(rep)[col].as_f64();
                if (value - other).abs() > tol {
                    return Err(Violation::TieBroken {
                        cell: CellRef { row, col },
                        value,
                        tied_to: CellRef { row: rep, col },
                        other,
                    });
                }
            }
        }
    }
    Ok(())
}
