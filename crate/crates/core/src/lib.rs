//! Maximum-likelihood estimation of multi-group latent Markov chain models
//! for categorical panel data.
//!
//! A group `h` of units is observed on `T` occasions on a `J`-category
//! scale. Each unit moves through `A` latent classes according to a
//! (possibly non-stationary) Markov chain with initial proportions `δ` and
//! transition matrices `τ`, and its observed rating at each occasion is
//! drawn from the response probabilities `ρ` of its current class.
//!
//! The crate provides
//!
//! * [`panel`]: grouped frequency tables of response patterns, CSV I/O;
//! * [`model`]: parameter storage, constraints (ties and fixes), the
//!   forward-backward evaluation of pattern probabilities and the joint
//!   pattern × latent-path table;
//! * [`estimation`]: constrained multi-start EM with label
//!   canonicalization, boundary handling, degrees of freedom and standard
//!   errors;
//! * [`inference`]: G², simulation, parametric bootstrap and nested model
//!   comparison;
//! * [`reliability`]: true/error decomposition of stability and change;
//! * [`replication`]: the bundled peer-review dataset and the end-to-end
//!   replication report.
//!
//! The probability code is generic over [`scalar::Real`] (`f32` or `f64`);
//! the aliases below fix the usual `f64` instantiation.

pub mod config;
pub mod estimation;
pub mod inference;
pub mod model;
pub mod panel;
pub mod reliability;
pub mod replication;
pub mod report;
pub mod scalar;

pub use scalar::Real;

/// Parameters in double precision.
pub type Params = model::ParameterSet<f64>;
/// Parameters in single precision.
pub type ParamsF32 = model::ParameterSet<f32>;
/// Fit result in double precision.
pub type Fit = estimation::FitResult<f64>;
/// Fit result in single precision.
pub type FitF32 = estimation::FitResult<f32>;
/// Posterior of one pattern in double precision.
pub type PatternPosterior = model::Posterior<f64>;
/// Joint pattern × path table in double precision.
pub type JointTable = model::JointTable<f64>;

/// Version string embedded in reports.
pub const ARTIFACT_VERSION: &str = concat!("latent-chain ", env!("CARGO_PKG_VERSION"));
