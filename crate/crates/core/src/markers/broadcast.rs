use super::MarkerError;

/// Participation coefficients of the slot-similarity graph at one time step.
/// Negative dot products are clamped to zero and slots with no positive
/// coupling count as non-participating (0).
pub fn participation(slots: &[&[f64]]) -> Result<Vec<f64>, MarkerError> {
    let k = slots.len();
    if k < 2 {
        return Err(MarkerError::TooFewSlots(k));
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().max(0.0);
    let mut adj = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let a = dot(slots[i], slots[j]);
            adj[i][j] = a;
            adj[j][i] = a;
        }
    }
    Ok(adj
        .iter()
        .map(|row| {
            let total: f64 = row.iter().sum();
            if total <= 0.0 {
                return 0.0;
            }
            1.0 - row.iter().map(|a| (a / (total + GBI_EPS)).powi(2)).sum::<f64>()
        })
        .collect())
}

pub const GBI_EPS: f64 = 1e-8;

/// Global broadcast index: mean participation over slots and time steps.
/// `steps` holds one flattened `k * d` slot state per time step; only the
/// first `active` slots take part.
pub fn gbi(steps: &[Vec<f64>], active: usize, d: usize) -> Result<f64, MarkerError> {
    if steps.is_empty() {
        return Err(MarkerError::Empty("gbi"));
    }
    let mut total = 0.0;
    let mut n = 0usize;
    for flat in steps {
        let slots: Vec<&[f64]> = (0..active).map(|i| &flat[i * d..(i + 1) * d]).collect();
        for p in participation(&slots)? {
            total += p;
            n += 1;
        }
    }
    Ok(total / n as f64)
}

/// Steepest single-step rise of an activation-norm series (0 if it never rises).
pub fn ignition_sharpness(norms: &[f64]) -> f64 {
    norms.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
