//! Floating-point abstraction used by the probability and EM code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar the model is evaluated in.
///
/// Implemented for `f32` and `f64`. Everything that touches the likelihood
/// surface (forward recursions, EM sufficient statistics, simulation CDFs)
/// is written against this trait; the inference layer converts to `f64`
/// where it needs matrix algebra or special functions.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Tolerance for "row sums to one" and "tied cells are equal" checks.
    fn simplex_tolerance() -> Self {
        let floor = Self::from_f64(1e-12).unwrap();
        let scaled = Self::epsilon() * Self::from_f64(64.0).unwrap();
        if scaled > floor {
            scaled
        } else {
            floor
        }
    }

    #[inline]
    fn of(value: f64) -> Self {
        Self::from_f64(value).unwrap()
    }

    #[inline]
    fn of_count(value: u64) -> Self {
        Self::from_u64(value).unwrap()
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap()
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + Sum
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + Serialize
        + DeserializeOwned
        + 'static
{
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_tracks_precision() {
        assert_eq!(f64::simplex_tolerance(), 1e-12);
        assert!(f32::simplex_tolerance() > 1e-6);
    }
}
