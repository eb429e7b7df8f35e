use thiserror::Error;

use crate::model::{expected_frequencies, EvalError, ParameterSet};
use crate::panel::{PanelTable, Pattern};
use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum GofError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("model excludes observed cell {pattern:?} of group {group} (expected 0, observed {observed})")]
    ExcludesObservedCell {
        group: usize,
        pattern: Vec<u16>,
        observed: u64,
    },
    #[error("group {0} has no observations")]
    EmptyGroup(usize),
}

/// `G² = 2 Σ n ln(n / m̂)` over cells with `n > 0`.
pub fn g_squared<F: Real>(table: &PanelTable, params: &ParameterSet<F>) -> Result<f64, GofError> {
    let expected = expected_frequencies(params, table)?;
    let mut total = 0.0;
    for g in 0..table.n_groups() {
        if table.group_total(g) == 0 {
            return Err(GofError::EmptyGroup(g));
        }
        for (pattern, n) in table.cells(g) {
            let m = expected.get(g, pattern).as_f64();
            if m <= 0.0 {
                return Err(GofError::ExcludesObservedCell {
                    group: g,
                    pattern: pattern.0.clone(),
                    observed: n,
                });
            }
            let n = n as f64;
            total += n * (n / m).ln();
        }
    }
    Ok(2.0 * total)
}

/// Per-cell contributions, handy for reports: `(group, pattern, observed,
/// expected)` over the full lattice.
pub fn cell_residuals<F: Real>(
    table: &PanelTable,
    params: &ParameterSet<F>,
) -> Result<Vec<(usize, Pattern, u64, f64)>, GofError> {
    let expected = expected_frequencies(params, table)?;
    let mut out = Vec::new();
    for g in 0..table.n_groups() {
        for pattern in crate::panel::lattice(table.n_categories(), table.occasions()) {
            let n = table.count(g, &pattern);
            let m = expected.get(g, &pattern).as_f64();
            out.push((g, pattern, n, m));
        }
    }
    Ok(out)
}
