use super::graph::{Graph, Var};
use super::tensor::log_softmax;
use super::NumericsError;

const NORM_TOL: f64 = 1e-6;

/// Weighted `KL(oracle || softmax(logits))`. With a one-hot oracle this is the
/// weighted cross-entropy.
pub fn kl_bc_loss(g: &mut Graph, oracle_dist: &[f64], logits: Var, weight: f64) -> Result<Var, NumericsError> {
    check_dist(oracle_dist)?;
    if weight <= 0.0 || !weight.is_finite() {
        return Err(NumericsError::Invalid(format!("loss weight must be positive, got {weight}")));
    }
    g.softmax_kl(logits, oracle_dist, weight)
}

/// Scalar form of [`kl_bc_loss`] for analysis code.
pub fn kl_bc_value(oracle_dist: &[f64], logits: &[f64], weight: f64) -> Result<f64, NumericsError> {
    check_dist(oracle_dist)?;
    if oracle_dist.len() != logits.len() {
        return Err(NumericsError::ShapeMismatch {
            op: "kl_bc",
            left: vec![oracle_dist.len()],
            right: vec![logits.len()],
        });
    }
    let lq = log_softmax(logits);
    let kl: f64 = oracle_dist
        .iter()
        .zip(&lq)
        .filter(|(p, _)| **p > 0.0)
        .map(|(&p, &l)| p * (p.ln() - l))
        .sum();
    Ok(weight * kl)
}

/// Binary cross-entropy of a confidence against a correctness bit.
pub fn meta_bce_loss(g: &mut Graph, confidence: Var, correct: bool) -> Result<Var, NumericsError> {
    g.bce(confidence, if correct { 1.0 } else { 0.0 }, 1.0)
}

pub fn meta_bce_value(confidence: f64, correct: bool) -> f64 {
    let c = confidence.clamp(super::graph::BCE_CLAMP, 1.0 - super::graph::BCE_CLAMP);
    if correct {
        -c.ln()
    } else {
        -(1.0 - c).ln()
    }
}

fn check_dist(p: &[f64]) -> Result<(), NumericsError> {
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > NORM_TOL || p.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(NumericsError::NotNormalized(s));
    }
    Ok(())
}
