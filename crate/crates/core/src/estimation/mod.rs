//! Maximum-likelihood estimation by EM under constraint sets.

pub mod canon;
pub mod dof;
pub mod em;
pub mod fit;
pub mod init;
pub mod se;

pub use canon::canonicalize_labels;
pub use dof::{count_free_parameters, degrees_of_freedom, snap_boundaries};
pub use em::{e_step, em_step, log_likelihood, m_step, EmError, EmStep, ExpectedCounts};
pub use fit::{
    em_fit, em_fit_with, run_chain, ChainOutcome, FitDiagnostics, FitError, FitOptions,
    FitResult, StartPlan,
};
pub use init::{identity_leaning_start, random_start, start_rng};
pub use se::{standard_errors, StandardErrorDocument, StandardErrors};
