use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::chisq::chi_square_sf;
use crate::estimation::FitResult;

/// Negative ΔLR beyond this means the restricted model fit better than
/// the model containing it, i.e. an optimizer failure.
pub const NEGATIVE_DELTA_SLACK: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("the general model does not relax the restricted model's constraints")]
    NotNested,
    #[error("the two fits were computed on different tables")]
    DifferentData,
    #[error("restricted fit is better than the general fit by {0}; the restricted fit likely failed")]
    RestrictedFitFailed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub restricted_lr: f64,
    pub general_lr: f64,
    pub restricted_df: i64,
    pub general_df: i64,
    pub delta_lr: f64,
    pub delta_df: i64,
    pub chi_square_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Likelihood-ratio difference test of a restricted model against a
/// model that relaxes it, on the same table.
pub fn compare_nested<F>(
    restricted: &FitResult<F>,
    general: &FitResult<F>,
) -> Result<ComparisonReport, CompareError> {
    if !general.spec.relaxes(&restricted.spec) {
        return Err(CompareError::NotNested);
    }
    if general.table_digest != restricted.table_digest {
        return Err(CompareError::DifferentData);
    }
    let raw = restricted.g_squared - general.g_squared;
    if raw < -NEGATIVE_DELTA_SLACK {
        return Err(CompareError::RestrictedFitFailed(raw));
    }
    let delta_lr = raw.max(0.0);
    let delta_df = restricted.degrees_of_freedom - general.degrees_of_freedom;
    let (chi_square_p, warning) = if restricted.spec == general.spec {
        (1.0, Some("models are identical; nothing to test".to_string()))
    } else if delta_df <= 0 {
        (
            1.0,
            Some(format!(
                "restricted model does not have more degrees of freedom (Δdf = {delta_df})"
            )),
        )
    } else {
        (
            chi_square_sf(delta_lr, delta_df).expect("positive df, finite statistic"),
            None,
        )
    };
    Ok(ComparisonReport {
        restricted_lr: restricted.g_squared,
        general_lr: general.g_squared,
        restricted_df: restricted.degrees_of_freedom,
        general_df: general.degrees_of_freedom,
        delta_lr,
        delta_df,
        chi_square_p,
        warning,
    })
}
