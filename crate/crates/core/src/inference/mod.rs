//! Goodness of fit, simulation, parametric bootstrap and nested-model
//! comparison.

pub mod bootstrap;
pub mod chisq;
pub mod compare;
pub mod gof;
pub mod simulate;

pub use bootstrap::{bootstrap_gof, BootstrapError, BootstrapReport, Replicate};
pub use chisq::{chi_square_sf, ChiSquareError};
pub use compare::{compare_nested, CompareError, ComparisonReport};
pub use gof::{g_squared, GofError};
pub use simulate::{blank_template, mix_seed, simulate};
