use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::gof::g_squared;
use super::simulate::{mix_seed, simulate};
use crate::estimation::{em_fit_with, FitOptions, FitResult, StartPlan};
use crate::panel::PanelTable;
use crate::scalar::Real;

/// Random fallback starts added to the warm start of each replicate refit.
pub const FALLBACK_STARTS: usize = 4;

/// Default replicate count.
pub const DEFAULT_REPLICATES: usize = 500;

#[derive(Debug, Error, PartialEq)]
pub enum BootstrapError {
    #[error("at least one bootstrap replicate is required")]
    NoReplicates,
    #[error("the fit to bootstrap did not converge")]
    NotConverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub index: usize,
    /// `+inf` when the refit excludes a simulated cell or failed.
    pub g_squared: f64,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub observed_lr: f64,
    pub replicates: Vec<Replicate>,
    /// `(#{replicate G² ≥ observed} + 1) / (B + 1)`.
    pub p_value: f64,
    /// Raw count of replicates at or above the observed statistic.
    pub exceedances: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    pub fallback_starts: usize,
    pub non_converged: usize,
}

impl BootstrapReport {
    pub fn mean_replicate_lr(&self) -> f64 {
        let finite: Vec<f64> = self
            .replicates
            .iter()
            .map(|r| r.g_squared)
            .filter(|g| g.is_finite())
            .collect();
        finite.iter().sum::<f64>() / finite.len().max(1) as f64
    }

    /// Replicate statistics as `replicate,g_squared,converged` CSV.
    pub fn replicates_csv(&self) -> String {
        let mut out = String::from("replicate,g_squared,converged\n");
        for r in &self.replicates {
            out.push_str(&format!("{},{},{}\n", r.index + 1, r.g_squared, r.converged));
        }
        out
    }
}

/// Parametric bootstrap of the G² statistic: `b` tables are simulated from
/// the fitted parameters with the original group sizes and refitted under
/// the same model.
///
/// Replicate `i` draws its data from `mix_seed(seed, i)`, so the report does
/// not depend on the order in which replicates run.
pub fn bootstrap_gof<F: Real>(
    fit: &FitResult<F>,
    table: &PanelTable,
    b: usize,
    seed: u64,
    options: &FitOptions,
) -> Result<BootstrapReport, BootstrapError> {
    if b == 0 {
        return Err(BootstrapError::NoReplicates);
    }
    if !fit.converged {
        return Err(BootstrapError::NotConverged);
    }
    let sizes = table.group_totals();
    let observed = fit.g_squared;
    let refit_options = FitOptions {
        starts: 1 + FALLBACK_STARTS,
        standard_errors: false,
        parallel: false,
        ..options.clone()
    };

    let run = |index: usize| -> Replicate {
        let data_seed = mix_seed(seed, index as u64);
        let simulated = match simulate(&fit.params, &sizes, data_seed, table) {
            Ok(t) => t,
            Err(e) => {
                return Replicate {
                    index,
                    g_squared: f64::INFINITY,
                    converged: false,
                    note: Some(e.to_string()),
                }
            }
        };
        let opts = FitOptions {
            seed: mix_seed(data_seed, u64::MAX),
            ..refit_options.clone()
        };
        let plan = StartPlan::warm(fit.params.clone(), FALLBACK_STARTS);
        match em_fit_with(&fit.spec, &simulated, &opts, plan) {
            Ok(refit) => {
                let (g2, note) = match g_squared(&simulated, &refit.params) {
                    Ok(g) => (g, None),
                    Err(e) => (f64::INFINITY, Some(e.to_string())),
                };
                Replicate {
                    index,
                    g_squared: g2,
                    converged: refit.converged,
                    note,
                }
            }
            Err(e) => Replicate {
                index,
                g_squared: f64::INFINITY,
                converged: false,
                note: Some(e.to_string()),
            },
        }
    };
    let replicates: Vec<Replicate> = if options.parallel {
        (0..b).into_par_iter().map(run).collect()
    } else {
        (0..b).map(run).collect()
    };

    let exceedances = replicates.iter().filter(|r| r.g_squared >= observed).count();
    let non_converged = replicates.iter().filter(|r| !r.converged).count();
    Ok(BootstrapReport {
        observed_lr: observed,
        p_value: (exceedances + 1) as f64 / (b + 1) as f64,
        exceedances,
        b,
        seed,
        fallback_starts: FALLBACK_STARTS,
        non_converged,
        replicates,
    })
}
