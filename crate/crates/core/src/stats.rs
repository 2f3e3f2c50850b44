//! Seed-level statistics: Welch's t, Hedges' g, permutation and bootstrap
//! procedures, correlations, sequential regression and composite scores.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::rng::{stream_rng, STREAM_STATS};

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("{what}: need at least {need} values, got {got}")]
    TooFew { what: &'static str, need: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub method: String,
    /// Difference of means (a - b) for two-group tests.
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Test statistic (t for Welch).
    pub statistic: f64,
    pub dof: f64,
    pub p_value: f64,
    pub n_a: usize,
    pub n_b: usize,
}

/// One-significant-digit scientific notation, e.g. `3e-5`.
pub fn coarse_p(p: f64) -> String {
    format!("{p:.0e}")
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample variance.
pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

pub fn sd(v: &[f64]) -> f64 {
    variance(v).sqrt()
}

fn need(what: &'static str, v: &[f64], n: usize) -> Result<(), StatsError> {
    if v.len() < n {
        return Err(StatsError::TooFew { what, need: n, got: v.len() });
    }
    Ok(())
}

/// Unequal-variance t test with Welch-Satterthwaite degrees of freedom,
/// two-sided, with a 95% interval on the mean difference.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<StatResult, StatsError> {
    need("welch_t", a, 2)?;
    need("welch_t", b, 2)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let diff = mean(a) - mean(b);
    let (qa, qb) = (variance(a) / na, variance(b) / nb);
    let se2 = qa + qb;
    let mut out = StatResult {
        method: "welch_t".into(),
        estimate: diff,
        ci_low: diff,
        ci_high: diff,
        statistic: 0.0,
        dof: na + nb - 2.0,
        p_value: 1.0,
        n_a: a.len(),
        n_b: b.len(),
    };
    if se2 == 0.0 {
        if diff != 0.0 {
            out.statistic = diff.signum() * f64::INFINITY;
            out.p_value = f64::MIN_POSITIVE;
        }
        return Ok(out);
    }
    let t = diff / se2.sqrt();
    let dof = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, dof).map_err(|e| StatsError::Invalid(e.to_string()))?;
    let p = (2.0 * dist.cdf(-t.abs())).clamp(f64::MIN_POSITIVE, 1.0);
    let crit = dist.inverse_cdf(0.975);
    out.statistic = t;
    out.dof = dof;
    out.p_value = p;
    out.ci_low = diff - crit * se2.sqrt();
    out.ci_high = diff + crit * se2.sqrt();
    Ok(out)
}

/// Pooled-SD standardized mean difference with the small-sample correction
/// `1 - 3 / (4 (n_a + n_b) - 9)`. `None` when the pooled variance is zero.
pub fn hedges_g(a: &[f64], b: &[f64]) -> Result<Option<f64>, StatsError> {
    need("hedges_g", a, 2)?;
    need("hedges_g", b, 2)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = ((na - 1.0) * variance(a) + (nb - 1.0) * variance(b)) / (na + nb - 2.0);
    if pooled <= 0.0 {
        return Ok(None);
    }
    let d = (mean(a) - mean(b)) / pooled.sqrt();
    Ok(Some(d * (1.0 - 3.0 / (4.0 * (na + nb) - 9.0))))
}

/// Two-sided Monte Carlo permutation test on the difference of means, with
/// `p = (1 + hits) / (n_perm + 1)`.
pub fn permutation_test(a: &[f64], b: &[f64], n_perm: usize, seed: u64) -> Result<f64, StatsError> {
    if n_perm < 999 {
        return Err(StatsError::Invalid(format!("n_perm {n_perm} < 999")));
    }
    need("permutation_test", a, 1)?;
    need("permutation_test", b, 1)?;
    let observed = (mean(a) - mean(b)).abs();
    let mut pool: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut rng = stream_rng(seed, STREAM_STATS);
    let mut hits = 0usize;
    for _ in 0..n_perm {
        pool.shuffle(&mut rng);
        let (x, y) = pool.split_at(a.len());
        if (mean(x) - mean(y)).abs() >= observed - 1e-12 {
            hits += 1;
        }
    }
    Ok((1 + hits) as f64 / (n_perm + 1) as f64)
}

/// Exact two-sided permutation p over every relabelling (small groups only).
pub fn exact_permutation_p(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    let n = a.len() + b.len();
    if n > 24 {
        return Err(StatsError::Invalid(format!("{n} values is too many to enumerate")));
    }
    let pool: Vec<f64> = a.iter().chain(b).copied().collect();
    let observed = (mean(a) - mean(b)).abs();
    let total: f64 = pool.iter().sum();
    let (mut hits, mut count) = (0usize, 0usize);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != a.len() {
            continue;
        }
        let sa: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| pool[i]).sum();
        let d = sa / a.len() as f64 - (total - sa) / b.len() as f64;
        count += 1;
        if d.abs() >= observed - 1e-12 {
            hits += 1;
        }
    }
    Ok(hits as f64 / count as f64)
}

/// Percentile bootstrap interval of `statistic`.
pub fn bootstrap_ci(
    values: &[f64],
    statistic: impl Fn(&[f64]) -> f64,
    n_boot: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64), StatsError> {
    need("bootstrap_ci", values, 3)?;
    if n_boot < 1000 || !(0.0..1.0).contains(&level) {
        return Err(StatsError::Invalid(format!("n_boot {n_boot}, level {level}")));
    }
    let mut rng = stream_rng(seed, STREAM_STATS);
    let mut sample = vec![0.0; values.len()];
    let mut stats: Vec<f64> = (0..n_boot)
        .map(|_| {
            for s in sample.iter_mut() {
                *s = values[rng.random_range(0..values.len())];
            }
            statistic(&sample)
        })
        .collect();
    stats.sort_by(|a, b| a.total_cmp(b));
    let q = |p: f64| {
        let pos = p * (n_boot - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        stats[lo] + (stats[hi] - stats[lo]) * (pos - lo as f64)
    };
    let alpha = (1.0 - level) / 2.0;
    Ok((q(alpha), q(1.0 - alpha)))
}

/// Pearson correlation; `None` when either variable is constant.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<Option<f64>, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::Length(x.len(), y.len()));
    }
    need("pearson_r", x, 3)?;
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

fn design(columns: &[&[f64]], rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), columns.len() + 1, |r, c| if c == 0 { 1.0 } else { columns[c - 1][rows[r]] })
}

/// Least squares with intercept; returns coefficients (intercept first).
fn ols(columns: &[&[f64]], y: &[f64], rows: &[usize]) -> Option<DVector<f64>> {
    let x = design(columns, rows);
    let yv = DVector::from_iterator(rows.len(), rows.iter().map(|&r| y[r]));
    x.svd(true, true).solve(&yv, 1e-12).ok()
}

/// Correlation between leave-one-out predictions of a linear model on
/// `predictors` and the observed outcome.
pub fn loo_r(predictors: &[&[f64]], y: &[f64]) -> Result<Option<f64>, StatsError> {
    let n = y.len();
    need("loo_r", y, predictors.len() + 2)?;
    for p in predictors {
        if p.len() != n {
            return Err(StatsError::Length(p.len(), n));
        }
    }
    let mut pred = vec![0.0; n];
    for i in 0..n {
        let rows: Vec<usize> = (0..n).filter(|&r| r != i).collect();
        let beta = ols(predictors, y, &rows).ok_or_else(|| StatsError::Invalid("singular fit".into()))?;
        pred[i] = beta[0] + predictors.iter().enumerate().map(|(j, p)| beta[j + 1] * p[i]).sum::<f64>();
    }
    pearson_r(&pred, y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionStage {
    pub added: String,
    pub r2: f64,
    pub delta_r2: f64,
    /// `None` when the design matrix is singular.
    pub condition_number: Option<f64>,
    /// Singular, or condition number above 1e8: the stage is numerically collinear.
    pub collinear: bool,
}

fn r_squared(columns: &[&[f64]], y: &[f64]) -> (f64, f64) {
    let rows: Vec<usize> = (0..y.len()).collect();
    let x = design(columns, &rows);
    let sv = x.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let my = mean(y);
    let sst: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let Some(beta) = ols(columns, y, &rows) else {
        return (0.0, cond);
    };
    let fitted = &x * beta;
    let sse: f64 = y.iter().zip(fitted.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    let r2 = if sst > 0.0 { (1.0 - sse / sst).clamp(0.0, 1.0) } else { 0.0 };
    (r2, cond)
}

/// Adds predictors one at a time and reports R² and its increment per stage.
pub fn hierarchical_r2(y: &[f64], predictors: &[(&str, &[f64])]) -> Result<Vec<RegressionStage>, StatsError> {
    need("hierarchical_r2", y, predictors.len() + 3)?;
    let mut stages = Vec::with_capacity(predictors.len());
    let mut prev = 0.0;
    for k in 1..=predictors.len() {
        let cols: Vec<&[f64]> = predictors[..k].iter().map(|(_, c)| *c).collect();
        for c in &cols {
            if c.len() != y.len() {
                return Err(StatsError::Length(c.len(), y.len()));
            }
        }
        let (r2, cond) = r_squared(&cols, y);
        // Nested least squares never loses fit; guard against round-off.
        let r2 = r2.max(prev);
        stages.push(RegressionStage {
            added: predictors[k - 1].0.to_string(),
            r2,
            delta_r2: r2 - prev,
            condition_number: cond.is_finite().then_some(cond),
            collinear: !(cond <= 1e8),
        });
        prev = r2;
    }
    Ok(stages)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composite {
    pub scores: Vec<f64>,
    /// Markers dropped because they did not vary across seeds.
    pub dropped: Vec<String>,
}

/// Sum of per-marker z-scores across the seed population.
pub fn composite_cts(markers: &[(&str, &[f64])]) -> Result<Composite, StatsError> {
    let n = markers.first().map_or(0, |(_, v)| v.len());
    if n < 2 {
        return Err(StatsError::TooFew {
            what: "composite_cts",
            need: 2,
            got: n,
        });
    }
    let mut scores = vec![0.0; n];
    let mut dropped = Vec::new();
    for (name, v) in markers {
        if v.len() != n {
            return Err(StatsError::Length(v.len(), n));
        }
        let s = sd(v);
        if s == 0.0 || !s.is_finite() {
            dropped.push(name.to_string());
            continue;
        }
        let m = mean(v);
        for (acc, x) in scores.iter_mut().zip(v.iter()) {
            *acc += (x - m) / s;
        }
    }
    Ok(Composite { scores, dropped })
}
