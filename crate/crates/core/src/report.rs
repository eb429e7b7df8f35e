//! JSON report documents and aligned plain-text tables.
//!
//! Non-finite statistics serialize as `null`; for G² that means the model
//! assigns zero probability to an observed cell.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::estimation::{FitDiagnostics, FitOptions, FitResult, StandardErrorDocument, StandardErrors};
use crate::inference::{BootstrapReport, ComparisonReport};
use crate::model::{ConstraintSet, Dims, ParameterDocument, ParameterSet, ParamsError, RowRef};
use crate::panel::PanelTable;
use crate::reliability::{stability_decomposition_with, ReliabilityDecomposition, TrueStateRule};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub artifact_version: String,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub seed: u64,
    pub data_digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub dims: Dims,
    pub manifest: bool,
    pub stationary: bool,
    pub constraints: ConstraintSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupReliability {
    pub group: String,
    pub n: u64,
    /// Observed share of constant patterns.
    pub data_stability: f64,
    pub decomposition: ReliabilityDecomposition,
    /// The same decomposition under the other true-state rule.
    pub alternative: ReliabilityDecomposition,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub provenance: Provenance,
    pub groups: Vec<String>,
    pub categories: Vec<String>,
    pub model: ModelSummary,
    pub options: FitOptions,
    pub converged: bool,
    pub log_likelihood: f64,
    pub g_squared: f64,
    pub free_parameters: usize,
    pub degrees_of_freedom: i64,
    pub parameters: ParameterDocument<f64>,
    pub standard_errors: Option<StandardErrorDocument>,
    pub reliability: Vec<GroupReliability>,
    pub diagnostics: FitDiagnostics,
}

impl FitReport {
    pub fn new<F: Real>(
        fit: &FitResult<F>,
        table: &PanelTable,
        options: &FitOptions,
        provenance: Provenance,
        rule: TrueStateRule,
    ) -> Self {
        let params: ParameterSet<f64> = fit.params.cast();
        let other = match rule {
            TrueStateRule::ExactPath => TrueStateRule::ConstancyCrossTab,
            TrueStateRule::ConstancyCrossTab => TrueStateRule::ExactPath,
        };
        let reliability = table
            .group_labels()
            .iter()
            .enumerate()
            .filter_map(|(g, label)| {
                Some(GroupReliability {
                    group: label.clone(),
                    n: table.group_total(g),
                    data_stability: table.manifest_stability(label).ok()?,
                    decomposition: stability_decomposition_with(&params, g, rule).ok()?,
                    alternative: stability_decomposition_with(&params, g, other).ok()?,
                })
            })
            .collect();
        FitReport {
            provenance,
            groups: table.group_labels().to_vec(),
            categories: table.category_labels().to_vec(),
            model: ModelSummary {
                dims: *fit.spec.dims(),
                manifest: fit.spec.is_manifest(),
                stationary: fit.spec.is_stationary(),
                constraints: fit.spec.constraints().clone(),
            },
            options: options.clone(),
            converged: fit.converged,
            log_likelihood: fit.log_likelihood,
            g_squared: fit.g_squared,
            free_parameters: fit.free_parameters,
            degrees_of_freedom: fit.degrees_of_freedom,
            parameters: params.to_document(None),
            standard_errors: fit.standard_errors.as_ref().map(StandardErrors::to_document),
            reliability,
            diagnostics: fit.diagnostics.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRunReport {
    /// Absolute fit is judged by the parametric bootstrap, not by the
    /// asymptotic χ² distribution.
    pub test: String,
    pub fit: FitReport,
    pub bootstrap: BootstrapReport,
    pub mean_replicate_g_squared: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRunReport {
    /// Nested models are compared with the asymptotic χ² difference test.
    pub test: String,
    pub restricted: FitReport,
    pub general: FitReport,
    pub comparison: ComparisonReport,
}

pub const BOOTSTRAP_TEST_LABEL: &str = "absolute fit: parametric bootstrap of G2";
pub const COMPARE_TEST_LABEL: &str = "nested comparison: chi-square test of the G2 difference";

/// Reads parameters from a bare parameter document or from the
/// `parameters` field of a fit report.
pub fn load_parameters(text: &str) -> Result<ParameterSet<f64>, ParamsError> {
    if let Ok((p, _)) = ParameterSet::<f64>::from_json(text) {
        return Ok(p);
    }
    #[derive(Deserialize)]
    struct Wrapped {
        parameters: ParameterDocument<f64>,
    }
    let w: Wrapped = serde_json::from_str(text)?;
    ParameterSet::from_document(&w.parameters)
}

fn cell(v: f64, se: Option<Option<f64>>) -> String {
    match se {
        None => format!("{v:.2}"),
        Some(Some(s)) => format!("{v:.2} ({s:.2})"),
        Some(None) => format!("{v:.2} (n.e.)"),
    }
}

/// Class proportions, occasion-1 response probabilities and transition
/// matrices per group, with standard errors in parentheses when given.
pub fn format_parameters(
    params: &ParameterSet<f64>,
    se: Option<&StandardErrors>,
    groups: &[String],
    categories: &[String],
) -> String {
    let d = *params.dims();
    let get = |row: RowRef, c: usize| se.map(|s| s.get(crate::model::CellRef { row, col: c }));
    let mut out = String::new();
    let _ = writeln!(out, "Class proportions and response probabilities (occasion 1)");
    let mut header = format!("{:<24}{:>6}{:>8}", "group", "class", "delta");
    for c in categories {
        let _ = write!(header, "{c:>16}");
    }
    let _ = writeln!(out, "{header}");
    for g in 0..d.groups {
        for a in 0..d.classes {
            let name = if a == 0 { groups[g].as_str() } else { "" };
            let _ = write!(out, "{:<24}{:>6}{:>8.2}", name, a + 1, params.delta(g, a));
            let row = RowRef::Rho {
                occasion: 0,
                group: g,
                class: a,
            };
            for j in 0..d.categories {
                let _ = write!(out, "{:>16}", cell(params.rho(0, g, a, j), get(row, j)));
            }
            let _ = writeln!(out);
        }
    }
    for s in 0..d.transitions() {
        let _ = writeln!(out, "\nTransition probabilities t{} -> t{}", s + 1, s + 2);
        let mut header = format!("{:<24}{:>6}", "group", "from");
        for b in 0..d.classes {
            let _ = write!(header, "{:>16}", format!("class {}", b + 1));
        }
        let _ = writeln!(out, "{header}");
        for g in 0..d.groups {
            for a in 0..d.classes {
                let name = if a == 0 { groups[g].as_str() } else { "" };
                let _ = write!(out, "{:<24}{:>6}", name, a + 1);
                let row = RowRef::Tau {
                    transition: s,
                    group: g,
                    from: a,
                };
                for b in 0..d.classes {
                    let _ = write!(out, "{:>16}", cell(params.tau(s, g, a, b), get(row, b)));
                }
                let _ = writeln!(out);
            }
        }
    }
    out
}

/// One-screen summary of a fit.
pub fn format_fit(report: &FitReport, se: Option<&StandardErrors>, params: &ParameterSet<f64>) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "converged: {}  LL = {:.4}  G2 = {:.2}  free = {}  df = {}",
        report.converged,
        report.log_likelihood,
        report.g_squared,
        report.free_parameters,
        report.degrees_of_freedom
    );
    out.push('\n');
    out.push_str(&format_parameters(params, se, &report.groups, &report.categories));
    out
}
