use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::metacog::auroc_type2;
use super::MarkerError;

/// L2 penalty of the logistic decoders on standardized features.
pub const LOGISTIC_L2: f64 = 1.0;
pub const CV_FOLDS: usize = 5;
pub const NRS_SHUFFLES: usize = 20;
pub const MIN_PER_CLASS: usize = 20;

/// Ridge-penalized logistic regression fitted by Newton's method.
#[derive(Debug, Clone)]
pub struct Logistic {
    mean: Vec<f64>,
    scale: Vec<f64>,
    weights: DVector<f64>,
}

impl Logistic {
    pub fn fit(x: &[Vec<f64>], y: &[bool], l2: f64) -> Self {
        let n = x.len();
        let dim = x.first().map_or(0, Vec::len);
        let mut mean = vec![0.0; dim];
        let mut scale = vec![0.0; dim];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n as f64;
            }
        }
        for row in x {
            for i in 0..dim {
                scale[i] += (row[i] - mean[i]).powi(2) / n as f64;
            }
        }
        // Constant features are dropped by a zero scale.
        let scale: Vec<f64> = scale.iter().map(|v| if *v > 1e-12 { 1.0 / v.sqrt() } else { 0.0 }).collect();
        let design = Self::design(x, &mean, &scale);
        let p = dim + 1;
        let mut w = DVector::zeros(p);
        for _ in 0..50 {
            let z = &design * &w;
            let probs = z.map(|v| 1.0 / (1.0 + (-v).exp()));
            let target = DVector::from_iterator(n, y.iter().map(|&l| if l { 1.0 } else { 0.0 }));
            let mut grad = design.transpose() * (&probs - target);
            let weighted = DMatrix::from_fn(n, p, |r, c| design[(r, c)] * (probs[r] * (1.0 - probs[r])).max(1e-10));
            let mut hess = design.transpose() * weighted;
            for i in 1..p {
                grad[i] += l2 * w[i];
                hess[(i, i)] += l2;
            }
            hess[(0, 0)] += 1e-8;
            let Some(step) = hess.cholesky().map(|c| c.solve(&grad)) else {
                break;
            };
            w -= &step;
            if step.amax() < 1e-9 {
                break;
            }
        }
        Self { mean, scale, weights: w }
    }

    fn design(x: &[Vec<f64>], mean: &[f64], scale: &[f64]) -> DMatrix<f64> {
        let dim = mean.len();
        DMatrix::from_fn(x.len(), dim + 1, |r, c| {
            if c == 0 {
                1.0
            } else {
                (x[r][c - 1] - mean[c - 1]) * scale[c - 1]
            }
        })
    }

    /// Decision score (log-odds).
    pub fn score(&self, row: &[f64]) -> f64 {
        let mut z = self.weights[0];
        for i in 0..self.mean.len() {
            z += self.weights[i + 1] * (row[i] - self.mean[i]) * self.scale[i];
        }
        z
    }
}

/// Fold index for each sample, seeded.
pub fn fold_assignment(n: usize, folds: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

/// AUC of pooled out-of-fold decoder scores.
pub fn cv_auc(x: &[Vec<f64>], y: &[bool], folds: &[usize]) -> Result<f64, MarkerError> {
    let k = folds.iter().max().map_or(0, |m| m + 1);
    let mut scores = vec![0.0; x.len()];
    for f in 0..k {
        let (tx, ty): (Vec<Vec<f64>>, Vec<bool>) = x
            .iter()
            .zip(y)
            .zip(folds)
            .filter(|(_, g)| **g != f)
            .map(|((r, l), _)| (r.clone(), *l))
            .unzip();
        let model = Logistic::fit(&tx, &ty, LOGISTIC_L2);
        for i in 0..x.len() {
            if folds[i] == f {
                scores[i] = model.score(&x[i]);
            }
        }
    }
    Ok(auroc_type2(&scores, y)?.unwrap_or(0.5))
}

fn check_classes(y: &[bool]) -> Result<(), MarkerError> {
    let pos = y.iter().filter(|v| **v).count();
    let neg = y.len() - pos;
    if pos.min(neg) < MIN_PER_CLASS {
        return Err(MarkerError::ClassStarvation { pos, neg });
    }
    Ok(())
}

/// Cross-validated decoding AUC minus the mean AUC of label-shuffled fits on
/// the same folds.
pub fn delta_nrs(x: &[Vec<f64>], y: &[bool], rng: &mut ChaCha8Rng) -> Result<f64, MarkerError> {
    if x.len() != y.len() {
        return Err(MarkerError::Length(x.len(), y.len()));
    }
    check_classes(y)?;
    let folds = fold_assignment(x.len(), CV_FOLDS, rng);
    let real = cv_auc(x, y, &folds)?;
    let mut shuffled = y.to_vec();
    let mut base = 0.0;
    for _ in 0..NRS_SHUFFLES {
        shuffled.shuffle(rng);
        base += cv_auc(x, &shuffled, &folds)?;
    }
    Ok(real - base / NRS_SHUFFLES as f64)
}

/// Cross-validated probe AUROC for predicting `y` from `x`.
pub fn probe_auroc(x: &[Vec<f64>], y: &[bool], rng: &mut ChaCha8Rng) -> Result<f64, MarkerError> {
    if x.len() != y.len() {
        return Err(MarkerError::Length(x.len(), y.len()));
    }
    let folds = fold_assignment(x.len(), CV_FOLDS, rng);
    cv_auc(x, y, &folds)
}

fn covariance(samples: &[Vec<f64>]) -> Result<(Vec<f64>, DMatrix<f64>), MarkerError> {
    let n = samples.len();
    if n < 2 {
        return Err(MarkerError::Empty("covariance"));
    }
    let dim = samples[0].len();
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / n as f64;
        }
    }
    let centered = DMatrix::from_fn(n, dim, |r, c| samples[r][c] - mean[c]);
    Ok((mean, centered.transpose() * &centered / (n - 1) as f64))
}

/// Participation ratio `(sum λ)^2 / sum λ^2` of the sample covariance.
pub fn effective_dim(samples: &[Vec<f64>]) -> Result<f64, MarkerError> {
    let (_, cov) = covariance(samples)?;
    let eig = SymmetricEigen::new(cov).eigenvalues;
    let s: f64 = eig.iter().map(|v| v.max(0.0)).sum();
    let s2: f64 = eig.iter().map(|v| v.max(0.0).powi(2)).sum();
    if s2 <= 0.0 {
        return Err(MarkerError::Degenerate("covariance has rank 0"));
    }
    Ok(s * s / s2)
}

/// Projects samples onto their top `k` principal components.
pub fn pca_project(samples: &[Vec<f64>], k: usize) -> Result<Vec<Vec<f64>>, MarkerError> {
    let (mean, cov) = covariance(samples)?;
    let dim = mean.len();
    if k == 0 || k > dim {
        return Err(MarkerError::Invalid(format!("{k} components of {dim}")));
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    Ok(samples
        .iter()
        .map(|s| {
            order[..k]
                .iter()
                .map(|&c| (0..dim).map(|i| (s[i] - mean[i]) * eig.eigenvectors[(i, c)]).sum())
                .collect()
        })
        .collect())
}

/// Correctness probe on the top principal components of `features`, with the
/// component count matched to a reference effective dimensionality.
pub fn pca_probe_baseline(
    features: &[Vec<f64>],
    correct: &[bool],
    target_dim: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64, MarkerError> {
    let projected = pca_project(features, target_dim)?;
    probe_auroc(&projected, correct, rng)
}
