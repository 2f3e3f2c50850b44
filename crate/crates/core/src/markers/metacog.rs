use serde::{Deserialize, Serialize};

use super::MarkerError;

/// Type-2 AUROC: probability that a correct trial gets higher confidence than
/// an incorrect one, ties counting half. `None` when one class is missing.
pub fn auroc_type2(confidence: &[f64], correct: &[bool]) -> Result<Option<f64>, MarkerError> {
    if confidence.is_empty() {
        return Err(MarkerError::Empty("auroc"));
    }
    if confidence.len() != correct.len() {
        return Err(MarkerError::Length(confidence.len(), correct.len()));
    }
    let n_pos = correct.iter().filter(|c| **c).count();
    let n_neg = correct.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let mut idx: Vec<usize> = (0..confidence.len()).collect();
    idx.sort_by(|&a, &b| confidence[a].total_cmp(&confidence[b]));
    // Doubled midranks keep every quantity an exact integer.
    let mut rank_sum2 = 0u64;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && confidence[idx[j + 1]] == confidence[idx[i]] {
            j += 1;
        }
        let twice_mid = (i + 1 + j + 1) as u64;
        for &k in &idx[i..=j] {
            if correct[k] {
                rank_sum2 += twice_mid;
            }
        }
        i = j + 1;
    }
    let (p, q) = (n_pos as u64, n_neg as u64);
    let wins2 = rank_sum2 - p * (p + 1);
    Ok(Some(wins2 as f64 / 2.0 / (p * q) as f64))
}

/// ROC points `(false positive rate, true positive rate)` from the strictest
/// threshold down, starting at (0, 0).
pub fn roc_curve(confidence: &[f64], correct: &[bool]) -> Vec<(f64, f64)> {
    let n_pos = correct.iter().filter(|c| **c).count().max(1) as f64;
    let n_neg = correct.iter().filter(|c| !**c).count().max(1) as f64;
    let mut idx: Vec<usize> = (0..confidence.len()).collect();
    idx.sort_by(|&a, &b| confidence[b].total_cmp(&confidence[a]));
    let mut out = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < idx.len() {
        let c = confidence[idx[i]];
        while i < idx.len() && confidence[idx[i]] == c {
            if correct[idx[i]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        out.push((fp / n_neg, tp / n_pos));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// `None` for empty bins.
    pub mean_confidence: Option<f64>,
    pub accuracy: Option<f64>,
}

/// Equal-width reliability bins over [0, 1].
pub fn calibration_curve(confidence: &[f64], correct: &[bool], n_bins: usize) -> Result<Vec<CalibrationBin>, MarkerError> {
    if n_bins < 2 {
        return Err(MarkerError::Invalid(format!("{n_bins} calibration bins")));
    }
    let mut sums = vec![(0usize, 0.0, 0usize); n_bins];
    for (&c, &ok) in confidence.iter().zip(correct) {
        let b = ((c.clamp(0.0, 1.0) * n_bins as f64) as usize).min(n_bins - 1);
        sums[b].0 += 1;
        sums[b].1 += c;
        sums[b].2 += usize::from(ok);
    }
    Ok(sums
        .iter()
        .enumerate()
        .map(|(b, &(n, s, k))| CalibrationBin {
            lo: b as f64 / n_bins as f64,
            hi: (b + 1) as f64 / n_bins as f64,
            count: n,
            mean_confidence: (n > 0).then(|| s / n as f64),
            accuracy: (n > 0).then(|| k as f64 / n as f64),
        })
        .collect())
}

/// Area under the risk-coverage curve: trials are accepted in order of
/// decreasing confidence and the selective error rate is averaged over all
/// coverage levels. Tied confidences contribute their expected error.
pub fn aurc(confidence: &[f64], correct: &[bool]) -> Result<f64, MarkerError> {
    if confidence.is_empty() {
        return Err(MarkerError::Empty("aurc"));
    }
    let n = confidence.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| confidence[b].total_cmp(&confidence[a]));
    let mut total = 0.0;
    let mut errors_before = 0.0;
    let mut i = 0;
    while i < n {
        let c = confidence[idx[i]];
        let mut j = i;
        while j < n && confidence[idx[j]] == c {
            j += 1;
        }
        let group_err = idx[i..j].iter().filter(|&&k| !correct[k]).count() as f64;
        let rate = group_err / (j - i) as f64;
        for m in 1..=(j - i) {
            total += (errors_before + rate * m as f64) / (i + m) as f64;
        }
        errors_before += group_err;
        i = j;
    }
    Ok(total / n as f64)
}
