use serde::{Deserialize, Serialize};

use super::MarkerError;

pub const L75_THRESHOLD: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum L75 {
    Value(f64),
    /// Accuracy never fell to the threshold within the tested grid.
    AboveRange,
}

impl L75 {
    pub fn value(self) -> Option<f64> {
        match self {
            L75::Value(v) => Some(v),
            L75::AboveRange => None,
        }
    }
}

impl std::fmt::Display for L75 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            L75::Value(v) => write!(f, "{v}"),
            L75::AboveRange => f.write_str("ABOVE_RANGE"),
        }
    }
}

/// Noise level where accuracy first falls to 75%, by linear interpolation
/// between grid points. `curve` is `(sigma, accuracy)` sorted by sigma and
/// must start at sigma 0.
pub fn l75(curve: &[(f64, f64)]) -> Result<L75, MarkerError> {
    let Some(&(s0, a0)) = curve.first() else {
        return Err(MarkerError::Empty("l75"));
    };
    if s0 != 0.0 || curve.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(MarkerError::Invalid("titration grid must start at 0 and increase".into()));
    }
    if a0 < L75_THRESHOLD {
        return Err(MarkerError::BelowBaseline(a0));
    }
    for w in curve.windows(2) {
        let ((sa, aa), (sb, ab)) = (w[0], w[1]);
        if ab < L75_THRESHOLD {
            return Ok(L75::Value(sa + (aa - L75_THRESHOLD) / (aa - ab) * (sb - sa)));
        }
    }
    Ok(L75::AboveRange)
}
