use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ChiSquareError {
    #[error("degrees of freedom must be positive, got {0}")]
    DegreesOfFreedom(i64),
    #[error("statistic must be a non-negative number, got {0}")]
    Statistic(f64),
}

/// Upper tail `P(χ²_df ≥ x)`, the regularized upper incomplete gamma
/// function `Q(df/2, x/2)`.
pub fn chi_square_sf(x: f64, df: i64) -> Result<f64, ChiSquareError> {
    if df <= 0 {
        return Err(ChiSquareError::DegreesOfFreedom(df));
    }
    if x.is_nan() || x < 0.0 {
        return Err(ChiSquareError::Statistic(x));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(statrs::function::gamma::gamma_ur(df as f64 / 2.0, x / 2.0))
}
