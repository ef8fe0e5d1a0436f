//! Error-bound machinery for the sketch: hash family, dimensioning from
//! target (α, δ), and empirical validation of the frequency-estimate bounds
//! in both sequential and concurrent runs.

mod hash;
mod validate;

pub use hash::HashFamily;
pub use validate::{
    rates_consistent, validate_concurrent, validate_sequential, zipf_stream, ErrorReport,
    TrialOutcome, ValidateConfig, ZIPF_EXPONENT,
};

use thiserror::Error;

use crate::spec::SpecError;

#[derive(Debug, Error, PartialEq)]
pub enum BoundsError {
    #[error("alpha must be in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error("delta must be in (0, 1), got {0}")]
    BadDelta(f64),
    #[error("{0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Spec(#[from] SpecError),
}

/// Sketch dimensions for a target accuracy: w = ⌈e/α⌉ columns and
/// d = ⌈ln(1/δ)⌉ rows.
pub fn dims_for(alpha: f64, delta: f64) -> Result<(usize, usize), BoundsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(BoundsError::BadAlpha(alpha));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(BoundsError::BadDelta(delta));
    }
    // Nudge below the ceiling so exact boundaries (e.g. delta = 1/e, where
    // ln(1/delta) lands an ulp above 1) do not round up a full row.
    let w = (std::f64::consts::E / alpha - 1e-9).ceil() as usize;
    let d = ((1.0 / delta).ln() - 1e-9).ceil() as usize;
    Ok((w.max(1), d.max(1)))
}

#[cfg(test)]
mod dims_tests {
    use super::*;

    #[test]
    fn paper_scale_dimensions() {
        assert_eq!(dims_for(0.01, 0.01).unwrap(), (272, 5));
    }

    #[test]
    fn alpha_near_one_gives_minimal_width() {
        assert_eq!(dims_for(0.999, 0.5).unwrap().0, 3);
    }

    #[test]
    fn delta_one_over_e_gives_one_row() {
        assert_eq!(dims_for(0.5, 1.0 / std::f64::consts::E).unwrap().1, 1);
    }

    #[test]
    fn rejects_out_of_range_parameters() {
        assert_eq!(dims_for(0.0, 0.5).unwrap_err(), BoundsError::BadAlpha(0.0));
        assert_eq!(dims_for(0.5, 1.0).unwrap_err(), BoundsError::BadDelta(1.0));
    }
}
