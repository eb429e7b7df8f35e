//! Multi-start EM fitting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::canon::canonicalize_labels;
use super::dof::{count_free_parameters, degrees_of_freedom, snap_boundaries};
use super::em::{e_step, log_likelihood, m_step, EmError};
use super::init::{identity_leaning_start, random_start, start_rng};
use super::se::{standard_errors, StandardErrors};
use crate::inference::gof::g_squared;
use crate::model::{validate, CellRef, ModelSpec, ParameterSet, RowRef};
use crate::panel::PanelTable;
use crate::scalar::Real;

/// Two starts whose final log-likelihoods differ by less than this are
/// considered tied; the lower start index wins.
pub const LL_TIE_TOLERANCE: f64 = 1e-6;

/// A decrease of the log-likelihood larger than this between EM iterations
/// is reported as a monotonicity failure.
pub const MONOTONICITY_SLACK: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("invalid fit options: {0}")]
    Options(String),
    #[error("table is H={table_groups} J={table_categories} T={table_occasions}, model is {model}")]
    DimensionMismatch {
        table_groups: usize,
        table_categories: usize,
        table_occasions: usize,
        model: String,
    },
    #[error("group {0:?} has no observations")]
    EmptyGroup(String),
    #[error("starting values violate the constraint set: {0}")]
    InfeasibleStart(String),
    #[error("every start failed: {0}")]
    AllStartsFailed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub starts: usize,
    pub max_iterations: usize,
    /// Stop once an iteration raises the log-likelihood by less than this.
    pub convergence: f64,
    /// Free cells closer than this to 0 or 1 are snapped onto the boundary.
    pub boundary_tol: f64,
    pub seed: u64,
    pub standard_errors: bool,
    pub parallel: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            starts: 32,
            max_iterations: 5000,
            convergence: 1e-9,
            boundary_tol: 1e-4,
            seed: 0,
            standard_errors: true,
            parallel: true,
        }
    }
}

impl FitOptions {
    pub fn check(&self) -> Result<(), FitError> {
        if self.starts < 1 {
            return Err(FitError::Options("starts must be at least 1".into()));
        }
        if self.max_iterations < 1 {
            return Err(FitError::Options("max_iterations must be at least 1".into()));
        }
        if !(self.convergence > 0.0) {
            return Err(FitError::Options("convergence must be positive".into()));
        }
        if !(self.boundary_tol > 0.0 && self.boundary_tol < 0.5) {
            return Err(FitError::Options("boundary_tol must lie in (0, 0.5)".into()));
        }
        Ok(())
    }
}

/// How the EM chains of one fit are started.
#[derive(Clone, Debug)]
pub struct StartPlan<F> {
    /// Explicit starting values, run first in order.
    pub initial: Vec<ParameterSet<F>>,
    pub identity_leaning: bool,
    pub random: usize,
}

impl<F: Real> StartPlan<F> {
    /// One identity-leaning start followed by `starts − 1` random starts.
    pub fn standard(starts: usize) -> Self {
        StartPlan {
            initial: Vec::new(),
            identity_leaning: true,
            random: starts.saturating_sub(1),
        }
    }

    pub fn warm(start: ParameterSet<F>, random: usize) -> Self {
        StartPlan {
            initial: vec![start],
            identity_leaning: false,
            random,
        }
    }

    fn len(&self) -> usize {
        self.initial.len() + usize::from(self.identity_leaning) + self.random
    }
}

#[derive(Clone, Debug)]
pub struct ChainOutcome<F> {
    pub params: ParameterSet<F>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest drop of the log-likelihood between consecutive iterations
    /// (0 when the sequence never decreased).
    pub max_decrease: f64,
    pub starved_rows: Vec<RowRef>,
}

/// Runs EM from `start` until the log-likelihood gain falls below
/// `options.convergence` or `max_iterations` is reached.
pub fn run_chain<F: Real>(
    spec: &ModelSpec,
    table: &PanelTable,
    start: ParameterSet<F>,
    options: &FitOptions,
) -> Result<ChainOutcome<F>, EmError> {
    let mut params = start;
    let mut previous: Option<f64> = None;
    let mut max_decrease = 0.0f64;
    let mut starved_rows = Vec::new();
    for iteration in 1..=options.max_iterations {
        let counts = e_step(&params, table)?;
        let ll = counts.log_likelihood.as_f64();
        if let Some(prev) = previous {
            max_decrease = max_decrease.max(prev - ll);
            if ll - prev < options.convergence {
                return Ok(ChainOutcome {
                    params,
                    log_likelihood: ll,
                    iterations: iteration,
                    converged: true,
                    max_decrease,
                    starved_rows,
                });
            }
        }
        previous = Some(ll);
        let (next, starved) = m_step(spec, &params, &counts);
        starved_rows = starved;
        params = next;
    }
    let ll = log_likelihood(&params, table)?.as_f64();
    if let Some(prev) = previous {
        max_decrease = max_decrease.max(prev - ll);
    }
    Ok(ChainOutcome {
        params,
        log_likelihood: ll,
        iterations: options.max_iterations,
        converged: false,
        max_decrease,
        starved_rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Index of the winning start.
    pub best_start: usize,
    pub iterations: usize,
    pub starts_run: usize,
    pub starts_converged: usize,
    /// Starts whose final log-likelihood ties the winner's.
    pub starts_at_best: usize,
    pub start_log_likelihoods: Vec<f64>,
    /// Largest log-likelihood decrease seen in any iteration of any start.
    pub max_ll_decrease: f64,
    pub monotone: bool,
    pub boundary_tol: f64,
    pub boundary_cells: Vec<CellRef>,
    pub starved_rows: Vec<RowRef>,
    /// Class relabelling applied (`old → new`).
    pub label_permutation: Vec<usize>,
    pub log_likelihood_before_snap: f64,
}

/// Converged fit of one model to one table.
#[derive(Clone, Debug)]
pub struct FitResult<F> {
    pub spec: ModelSpec,
    pub params: ParameterSet<F>,
    pub log_likelihood: f64,
    /// Likelihood-ratio statistic against the saturated model;
    /// `+inf` when the model excludes an observed cell.
    pub g_squared: f64,
    pub free_parameters: usize,
    pub degrees_of_freedom: i64,
    pub standard_errors: Option<StandardErrors>,
    pub converged: bool,
    pub diagnostics: FitDiagnostics,
    pub table_digest: String,
}

/// Fits `spec` to `table` from `options.starts` EM chains and keeps the
/// best one.
pub fn em_fit<F: Real>(
    spec: &ModelSpec,
    table: &PanelTable,
    options: &FitOptions,
) -> Result<FitResult<F>, FitError> {
    em_fit_with(spec, table, options, StartPlan::standard(options.starts))
}

pub fn em_fit_with<F: Real>(
    spec: &ModelSpec,
    table: &PanelTable,
    options: &FitOptions,
    plan: StartPlan<F>,
) -> Result<FitResult<F>, FitError> {
    options.check()?;
    let dims = *spec.dims();
    if dims.groups != table.n_groups()
        || dims.categories != table.n_categories()
        || dims.occasions != table.occasions()
    {
        return Err(FitError::DimensionMismatch {
            table_groups: table.n_groups(),
            table_categories: table.n_categories(),
            table_occasions: table.occasions(),
            model: format!("{dims:?}"),
        });
    }
    if plan.len() == 0 {
        return Err(FitError::Options("no starts requested".into()));
    }
    let totals = table.group_totals();
    for (g, &n) in totals.iter().enumerate() {
        if n == 0 {
            return Err(FitError::EmptyGroup(table.group_labels()[g].clone()));
        }
    }

    let mut starts: Vec<ParameterSet<F>> = plan.initial.clone();
    if plan.identity_leaning {
        starts.push(identity_leaning_start(spec));
    }
    let offset = starts.len();
    for r in 0..plan.random {
        let mut rng = start_rng(options.seed, (offset + r) as u64);
        starts.push(random_start(spec, &mut rng));
    }
    for s in starts.iter_mut() {
        s.set_gamma_from_counts(&totals);
        validate(spec, s).map_err(|v| FitError::InfeasibleStart(v.to_string()))?;
    }

    let run = |start: ParameterSet<F>| run_chain(spec, table, start, options);
    let outcomes: Vec<Result<ChainOutcome<F>, EmError>> = if options.parallel {
        starts.into_par_iter().map(run).collect()
    } else {
        starts.into_iter().map(run).collect()
    };

    let mut best: Option<usize> = None;
    let any_converged = outcomes.iter().any(|o| matches!(o, Ok(c) if c.converged));
    let mut first_error = None;
    for (i, outcome) in outcomes.iter().enumerate() {
        match outcome {
            Ok(c) if !any_converged || c.converged => {
                let better = match best {
                    None => true,
                    Some(b) => {
                        let cur = outcomes[b].as_ref().unwrap().log_likelihood;
                        c.log_likelihood > cur + LL_TIE_TOLERANCE
                    }
                };
                if better {
                    best = Some(i);
                }
            }
            Ok(_) => {}
            Err(e) => {
                first_error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    let Some(best) = best else {
        return Err(FitError::AllStartsFailed(first_error.unwrap_or_default()));
    };

    let start_lls: Vec<f64> = outcomes
        .iter()
        .map(|o| o.as_ref().map(|c| c.log_likelihood).unwrap_or(f64::NEG_INFINITY))
        .collect();
    let starts_converged = outcomes
        .iter()
        .filter(|o| matches!(o, Ok(c) if c.converged))
        .count();
    let max_decrease = outcomes
        .iter()
        .filter_map(|o| o.as_ref().ok())
        .map(|c| c.max_decrease)
        .fold(0.0f64, f64::max);
    let winner = outcomes.into_iter().nth(best).unwrap().unwrap();
    let best_ll = winner.log_likelihood;
    let starts_at_best = start_lls
        .iter()
        .filter(|&&ll| (ll - best_ll).abs() <= LL_TIE_TOLERANCE)
        .count();

    let (relabelled, perm) = canonicalize_labels(&winner.params);
    let (params, perm) = if validate(spec, &relabelled).is_ok() {
        (relabelled, perm)
    } else {
        (winner.params.clone(), (0..dims.classes).collect())
    };

    let (snapped, boundary_cells) = snap_boundaries(spec, &params, options.boundary_tol);
    let snapped_ll = log_likelihood(&snapped, table)
        .map(|v| v.as_f64())
        .unwrap_or(f64::NEG_INFINITY);
    let (params, boundary_cells, log_likelihood) = if snapped_ll.is_finite() {
        (snapped, boundary_cells, snapped_ll)
    } else {
        (params, Vec::new(), best_ll)
    };

    let g2 = g_squared(table, &params).unwrap_or(f64::INFINITY);
    let free_parameters = count_free_parameters(&params, spec, options.boundary_tol);
    let standard_errors = options
        .standard_errors
        .then(|| standard_errors(spec, &params.cast::<f64>(), table));

    Ok(FitResult {
        spec: spec.clone(),
        degrees_of_freedom: degrees_of_freedom(spec, free_parameters),
        free_parameters,
        log_likelihood,
        g_squared: g2,
        standard_errors,
        converged: winner.converged,
        diagnostics: FitDiagnostics {
            best_start: best,
            iterations: winner.iterations,
            starts_run: start_lls.len(),
            starts_converged,
            starts_at_best,
            start_log_likelihoods: start_lls,
            max_ll_decrease: max_decrease,
            monotone: max_decrease <= MONOTONICITY_SLACK,
            boundary_tol: options.boundary_tol,
            boundary_cells,
            starved_rows: winner.starved_rows,
            label_permutation: perm,
            log_likelihood_before_snap: best_ll,
        },
        params,
        table_digest: table.digest(),
    })
}
