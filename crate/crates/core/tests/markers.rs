use gwlab::markers::*;
use gwlab::rng::{stream_rng, STREAM_STATS};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ---- broadcast ----

#[test]
fn equal_couplings_give_two_thirds() {
    let v = [1.0, 1.0];
    let steps = vec![v.repeat(4)];
    let g = gbi(&steps, 4, 2).unwrap();
    assert!(close(g, 2.0 / 3.0, 1e-6), "{g}");
}

#[test]
fn single_coupling_gives_zero_participation() {
    let slots: [&[f64]; 3] = [&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]];
    let p = participation(&slots).unwrap();
    assert!(close(p[0], 0.0, 1e-6) && close(p[1], 0.0, 1e-6));
    assert_eq!(p[2], 0.0);
}

#[test]
fn gbi_needs_two_slots() {
    assert!(matches!(gbi(&[vec![1.0; 4]], 1, 4), Err(MarkerError::TooFewSlots(1))));
    assert!(gbi(&[], 4, 4).is_err());
}

#[test]
fn ignition_examples() {
    assert_eq!(ignition_sharpness(&[2.0, 2.0, 2.0]), 0.0);
    assert_eq!(ignition_sharpness(&[0.0, 0.0, 1.0, 1.0]), 1.0);
    assert_eq!(ignition_sharpness(&[3.0, 1.0]), 0.0);
}

proptest! {
    #[test]
    fn gbi_ignores_positive_rescaling(
        flat in prop::collection::vec(0.05f64..1.0, 12),
        scale in 0.1f64..10.0,
    ) {
        // Couplings stay well above GBI_EPS, so the epsilon term is negligible.
        let a = gbi(std::slice::from_ref(&flat), 4, 3).unwrap();
        let scaled: Vec<f64> = flat.iter().map(|v| v * scale).collect();
        let b = gbi(&[scaled], 4, 3).unwrap();
        prop_assert!(close(a, b, 1e-6), "{} vs {}", a, b);
        prop_assert!((0.0..=1.0).contains(&a));
    }
}

// ---- metacognition ----

fn brute_auroc(conf: &[f64], ok: &[bool]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..conf.len() {
        for j in 0..conf.len() {
            if ok[i] && !ok[j] {
                pairs += 1.0;
                if conf[i] > conf[j] {
                    wins += 1.0;
                } else if conf[i] == conf[j] {
                    wins += 0.5;
                }
            }
        }
    }
    (pairs > 0.0).then(|| wins / pairs)
}

#[test]
fn auroc_examples() {
    assert_eq!(auroc_type2(&[0.5; 6], &[true, false, true, false, true, true]).unwrap(), Some(0.5));
    assert_eq!(auroc_type2(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), Some(1.0));
    assert_eq!(auroc_type2(&[0.9, 0.4, 0.6, 0.2], &[true, true, false, false]).unwrap(), Some(0.75));
    assert_eq!(auroc_type2(&[0.3, 0.4], &[true, true]).unwrap(), None);
    assert!(auroc_type2(&[], &[]).is_err());
    assert!(auroc_type2(&[0.1], &[true, false]).is_err());
}

proptest! {
    #[test]
    fn auroc_equals_pair_counting(rows in prop::collection::vec((0u8..6, any::<bool>()), 1..200)) {
        let conf: Vec<f64> = rows.iter().map(|r| r.0 as f64 / 5.0).collect();
        let ok: Vec<bool> = rows.iter().map(|r| r.1).collect();
        prop_assert_eq!(auroc_type2(&conf, &ok).unwrap(), brute_auroc(&conf, &ok));
    }

    #[test]
    fn roc_curve_is_monotone_and_ends_at_one(rows in prop::collection::vec((0u8..10, any::<bool>()), 2..100)) {
        let conf: Vec<f64> = rows.iter().map(|r| r.0 as f64 / 9.0).collect();
        let ok: Vec<bool> = rows.iter().map(|r| r.1).collect();
        let roc = roc_curve(&conf, &ok);
        prop_assert_eq!(roc[0], (0.0, 0.0));
        for w in roc.windows(2) {
            prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
        let last = *roc.last().unwrap();
        if ok.iter().any(|c| *c) && ok.iter().any(|c| !*c) {
            prop_assert_eq!(last, (1.0, 1.0));
        }
    }
}

#[test]
fn calibrated_bernoulli_data_matches_per_bin() {
    let mut rng = stream_rng(1, STREAM_STATS);
    let n = 100_000;
    let conf: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let ok: Vec<bool> = conf.iter().map(|c| rng.random::<f64>() < *c).collect();
    for bin in calibration_curve(&conf, &ok, 10).unwrap() {
        assert!(bin.count > 0);
        let gap = (bin.mean_confidence.unwrap() - bin.accuracy.unwrap()).abs();
        assert!(gap < 0.02, "{bin:?}");
    }
}

#[test]
fn constant_confidence_fills_one_bin() {
    let bins = calibration_curve(&[0.54; 40], &[true; 40], 10).unwrap();
    let occupied: Vec<&CalibrationBin> = bins.iter().filter(|b| b.count > 0).collect();
    assert_eq!(occupied.len(), 1);
    assert_eq!(occupied[0].accuracy, Some(1.0));
    assert!(bins.iter().filter(|b| b.count == 0).all(|b| b.accuracy.is_none()));
    assert!(calibration_curve(&[0.5], &[true], 1).is_err());
}

/// Risk-coverage area of a fixed acceptance order.
fn aurc_of_order(order: &[usize], ok: &[bool]) -> f64 {
    let mut errs = 0.0;
    let mut total = 0.0;
    for (i, &j) in order.iter().enumerate() {
        errs += f64::from(u8::from(!ok[j]));
        total += errs / (i + 1) as f64;
    }
    total / order.len() as f64
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn oracle_confidence_minimizes_aurc() {
    for mask in 0u32..32 {
        let ok: Vec<bool> = (0..5).map(|i| mask & (1 << i) != 0).collect();
        let conf: Vec<f64> = ok.iter().map(|c| if *c { 1.0 } else { 0.0 }).collect();
        let best = permutations(5)
            .iter()
            .map(|p| aurc_of_order(p, &ok))
            .fold(f64::INFINITY, f64::min);
        assert!(close(aurc(&conf, &ok).unwrap(), best, 1e-12), "{ok:?}");
    }
}

#[test]
fn aurc_examples() {
    assert_eq!(aurc(&[0.3, 0.9, 0.5], &[true; 3]).unwrap(), 0.0);
    let mut rng = stream_rng(2, STREAM_STATS);
    let ok: Vec<bool> = (0..20_000).map(|_| rng.random::<f64>() < 0.7).collect();
    let conf: Vec<f64> = (0..ok.len()).map(|_| rng.random::<f64>()).collect();
    assert!(close(aurc(&conf, &ok).unwrap(), 0.3, 0.02));
    // All ties: the expected risk at every coverage is the error rate.
    assert!(close(aurc(&[0.5; 4], &[true, false, true, true]).unwrap(), 0.25, 1e-12));
}

// ---- complexity ----

/// Direct LZ76 parsing: each phrase is the shortest extension not already
/// present in the preceding text.
fn naive_lz76(s: &[bool]) -> usize {
    let n = s.len();
    let (mut i, mut c) = (0, 0);
    while i < n {
        let mut l = 1;
        while i + l <= n {
            let phrase = &s[i..i + l];
            let history = &s[..i + l - 1];
            if history.windows(l).any(|w| w == phrase) {
                l += 1;
            } else {
                break;
            }
        }
        c += 1;
        i += l;
    }
    c
}

proptest! {
    #[test]
    fn lz76_matches_direct_parsing(s in prop::collection::vec(any::<bool>(), 2..300)) {
        prop_assert_eq!(lz76_phrases(&s), naive_lz76(&s));
    }

    #[test]
    fn lz76_ignores_symbol_relabeling(s in prop::collection::vec(any::<bool>(), 2..300)) {
        let flipped: Vec<bool> = s.iter().map(|b| !b).collect();
        let (a, b) = (lz76_phrases(&s) as i64, lz76_phrases(&flipped) as i64);
        prop_assert!((a - b).abs() <= 1);
    }
}

#[test]
fn lz76_extremes() {
    let flat = vec![false; 1024];
    assert!(lz76_normalized(&flat) < 0.03);
    let mut rng = stream_rng(3, STREAM_STATS);
    let coin: Vec<bool> = (0..20_000).map(|_| rng.random::<bool>()).collect();
    assert!(close(lz76_normalized(&coin), 1.0, 0.1), "{}", lz76_normalized(&coin));
}

#[test]
fn binarize_uses_pre_pulse_medians() {
    let pre = vec![vec![0.0, 10.0], vec![2.0, 20.0], vec![4.0, 30.0]];
    let post = vec![vec![3.0, 10.0], vec![1.0, 25.0]];
    assert_eq!(binarize(&pre, &post), vec![true, false, false, true]);
}

#[test]
fn delta_pci_examples() {
    let d = delta_pci(&[0.5, 0.7, 0.2], &[true, true, false]).unwrap();
    assert!(close(d, 0.4, 1e-12));
    assert_eq!(delta_pci(&[0.3, 0.3], &[true, false]), Some(0.0));
    assert_eq!(delta_pci(&[0.3, 0.4], &[true, true]), None);
}

// ---- titration ----

#[test]
fn l75_examples() {
    assert_eq!(l75(&[(0.0, 1.0), (0.1, 0.5)]).unwrap(), L75::Value(0.05));
    assert_eq!(l75(&[(0.0, 0.9), (0.5, 0.8)]).unwrap(), L75::AboveRange);
    assert!(matches!(l75(&[(0.0, 0.6), (0.1, 0.5)]), Err(MarkerError::BelowBaseline(_))));
    assert!(l75(&[(0.1, 0.9)]).is_err());
    assert_eq!(L75::AboveRange.to_string(), "ABOVE_RANGE");
}

proptest! {
    #[test]
    fn lower_curves_never_raise_l75(
        acc in prop::collection::vec(0.0f64..1.0, 8),
        drop in prop::collection::vec(0.0f64..0.3, 8),
    ) {
        let grid = [0.0, 0.01, 0.02, 0.04, 0.08, 0.16, 0.32, 0.5];
        let mut hi: Vec<(f64, f64)> = grid.iter().zip(&acc).map(|(s, a)| (*s, *a)).collect();
        hi[0].1 = 0.95 + 0.05 * acc[0];
        let lo: Vec<(f64, f64)> = hi.iter().zip(&drop).map(|((s, a), d)| (*s, (a - d).max(0.0))).collect();
        let lo0 = (0.0, lo[0].1.max(0.76));
        let lo: Vec<(f64, f64)> = std::iter::once(lo0).chain(lo[1..].iter().copied()).collect();
        let to_num = |r: L75| r.value().unwrap_or(f64::INFINITY);
        prop_assert!(to_num(l75(&lo).unwrap()) <= to_num(l75(&hi).unwrap()) + 1e-12);
    }
}

// ---- decoding ----

fn normal_rows(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(seed, STREAM_STATS);
    (0..n)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}

#[test]
fn nrs_on_noise_is_near_zero() {
    let y: Vec<bool> = (0..500).map(|i| i % 2 == 0).collect();
    let values: Vec<f64> = (0..10)
        .map(|rep| delta_nrs(&normal_rows(500, 4, 40 + rep), &y, &mut stream_rng(rep, 1)).unwrap())
        .collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    // Single-fold-set AUC has a standard error near 0.026 at n = 500.
    assert!(mean.abs() < 0.03, "{values:?}");
    assert!(values.iter().all(|v| v.abs() < 0.1), "{values:?}");
}

#[test]
fn nrs_on_separable_features_is_about_half() {
    let y: Vec<bool> = (0..200).map(|i| i % 2 == 0).collect();
    let mut x = normal_rows(200, 3, 5);
    for (row, l) in x.iter_mut().zip(&y) {
        row[0] = if *l { 3.0 } else { -3.0 } + 0.1 * row[0];
    }
    let v = delta_nrs(&x, &y, &mut stream_rng(5, 1)).unwrap();
    assert!(close(v, 0.5, 0.06), "{v}");
}

#[test]
fn nrs_rejects_starved_classes() {
    let x = normal_rows(100, 2, 6);
    let mut y = vec![false; 100];
    y[..10].iter_mut().for_each(|v| *v = true);
    assert!(matches!(delta_nrs(&x, &y, &mut stream_rng(6, 1)), Err(MarkerError::ClassStarvation { .. })));
}

#[test]
fn nrs_of_shuffled_labels_averages_zero() {
    let mut total = 0.0;
    for rep in 0..50 {
        let x = normal_rows(80, 2, 100 + rep);
        let mut rng = stream_rng(200 + rep, 1);
        let y: Vec<bool> = (0..80).map(|_| rng.random::<bool>()).collect();
        let y = if y.iter().filter(|v| **v).count().min(y.iter().filter(|v| !**v).count()) < 20 {
            (0..80).map(|i| i % 2 == 0).collect()
        } else {
            y
        };
        total += delta_nrs(&x, &y, &mut rng).unwrap();
    }
    assert!((total / 50.0).abs() < 0.02, "{}", total / 50.0);
}

#[test]
fn effective_dim_cases() {
    let iso = normal_rows(20_000, 64, 7);
    assert!(close(effective_dim(&iso).unwrap(), 64.0, 2.0));

    let one: Vec<Vec<f64>> = normal_rows(200, 1, 8).iter().map(|r| vec![r[0], 0.0, 0.0]).collect();
    assert!(close(effective_dim(&one).unwrap(), 1.0, 1e-9));

    // Two orthogonal axes with exactly equal sample variance.
    let two: Vec<Vec<f64>> = (0..4)
        .map(|i| match i {
            0 => vec![1.0, 0.0, 0.0],
            1 => vec![-1.0, 0.0, 0.0],
            2 => vec![0.0, 1.0, 0.0],
            _ => vec![0.0, -1.0, 0.0],
        })
        .collect();
    assert!(close(effective_dim(&two).unwrap(), 2.0, 1e-9));

    assert!(matches!(effective_dim(&vec![vec![1.0; 3]; 5]), Err(MarkerError::Degenerate(_))));
}

/// High-variance nuisance axis orthogonal to a low-variance label axis.
fn counterexample(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let noise = normal_rows(n, 3, seed);
    let y: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    let x = noise
        .iter()
        .zip(&y)
        .map(|(r, l)| vec![10.0 * r[0], 0.3 * if *l { 1.0 } else { -1.0 } + 0.05 * r[1], 0.05 * r[2]])
        .collect();
    (x, y)
}

#[test]
fn pca_probe_misses_a_low_variance_label_axis() {
    let (x, y) = counterexample(400, 9);
    let pca = pca_probe_baseline(&x, &y, 1, &mut stream_rng(9, 1)).unwrap();
    let full = probe_auroc(&x, &y, &mut stream_rng(9, 1)).unwrap();
    assert!(close(pca, 0.5, 0.1), "{pca}");
    assert!(full > 0.9, "{full}");
}

#[test]
fn full_rank_pca_keeps_the_probe() {
    let (x, y) = counterexample(400, 10);
    let pca = pca_probe_baseline(&x, &y, 3, &mut stream_rng(10, 1)).unwrap();
    let full = probe_auroc(&x, &y, &mut stream_rng(10, 1)).unwrap();
    assert!(close(pca, full, 0.02), "{pca} vs {full}");
    assert!(pca_project(&x, 4).is_err());
}

// ---- masking trace ----

#[test]
fn cue_trace_values() {
    assert_eq!(cosine(&[1.0, 0.0], &[0.0, 0.0]), 0.0);
    let slots = [1.0, 0.0, 0.0, 1.0];
    let v = cue_trace_value(&slots, &[true, true], 2, 2, &[1.0, 0.0], 0.5);
    assert!(close(v, 0.5, 1e-12));
    assert_eq!(cue_trace_value(&slots, &[false, false], 2, 2, &[1.0, 0.0], 0.5), 0.0);
    assert_eq!(cue_trace_value(&slots, &[true, true], 0, 2, &[1.0, 0.0], 0.5), 0.0);
    assert_eq!(first_negative(&[0.0, -1.0, 0.5, -0.2], 2), Some(3));
    assert_eq!(first_negative(&[0.0, 0.1], 0), None);
}
