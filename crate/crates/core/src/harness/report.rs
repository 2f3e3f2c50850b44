use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::{load_result, ExperimentDetails, SEED_METRICS_FILE};
use super::HarnessError;
use crate::stats::coarse_p;

/// Long-format per-seed value, the unit `report --compare` joins on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetric {
    pub manifest_hash: String,
    pub seed: u64,
    pub key: String,
    pub value: f64,
}

fn read_metrics(dir: &Path) -> Result<Vec<SeedMetric>, HarnessError> {
    let mut r = csv::Reader::from_path(dir.join(SEED_METRICS_FILE))?;
    Ok(r.deserialize().collect::<Result<Vec<SeedMetric>, _>>()?)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.3}"))
}

/// Summary tables of a finished run, from its stored results only.
pub fn render_report(dir: &Path) -> Result<String, HarnessError> {
    let res = load_result(dir)?;
    let mut s = String::new();
    let _ = writeln!(s, "run {} ({}), manifest {}", res.id, dir.display(), &res.manifest_hash[..12]);
    let _ = writeln!(s, "seeds: {:?}", res.seeds);
    for e in &res.exclusions {
        let _ = writeln!(s, "excluded {} seed {}: {}", e.label, e.seed, e.reason);
    }
    match &res.details {
        ExperimentDetails::E1(d) => {
            let _ = writeln!(s, "\n{:<10} {:>9} {:>9} {:>9}", "condition", "accuracy", "auroc_t2", "skip");
            for (c, acc, auc, skip) in &d.means {
                let _ = writeln!(s, "{c:<10} {acc:>9.3} {auc:>9.3} {skip:>9.3}");
            }
            let _ = writeln!(s, "\naccuracy gap intact - zero: {:.2} pp", d.accuracy_gap_pp);
            let _ = writeln!(s, "z_self effective dim: {}", opt(d.mean_eff_dim));
            let _ = writeln!(s, "z_self probe - PCA probe AUROC: {}", opt(d.mean_probe_advantage));
        }
        ExperimentDetails::E2(d) => {
            let _ = writeln!(
                s,
                "\n{:<4} {:>8} {:>11} {:>8} {:>8} {:>7} {:>7}",
                "arch", "capacity", "conjunction", "window", "step", "GBI", "IS"
            );
            for (a, cap, conj, win, step, gbi, is) in &d.capacity_means {
                let _ = writeln!(
                    s,
                    "{a:<4} {cap:>8.2} {conj:>11.3} {win:>8.3} {step:>8.3} {gbi:>7.3} {is:>7.3}"
                );
            }
            let _ = writeln!(s, "\ncapacity  delta_nrs");
            for (cap, v) in &d.nrs_means {
                let _ = writeln!(s, "{cap:>8.2} {:>10}", opt(*v));
            }
            for m in &d.masking {
                let _ = writeln!(
                    s,
                    "masking capacity {:.2}: entry {:.3}, first negative step {:?}",
                    m.capacity,
                    m.trace.first().copied().unwrap_or(0.0),
                    m.first_negative
                );
            }
            let _ = writeln!(
                s,
                "bus audit: T1 median {:.2}, T3 flip rate {:.4}",
                d.audit_t1_median, d.audit_t3_flip_rate
            );
        }
        ExperimentDetails::E3(d) => {
            let _ = writeln!(s, "\n{:<12} {:<8} {:>6} {:>10} {:>10}", "variant", "site", "seeds", "L75", "acc@max");
            for l in &d.l75 {
                let mut val = l.mean.map_or_else(String::new, |m| format!("{m:.3}"));
                if l.above_range > 0 {
                    val += &format!(" {}AR", l.above_range);
                }
                if l.below_baseline > 0 {
                    val += &format!(" {}BB", l.below_baseline);
                }
                let _ = writeln!(
                    s,
                    "{:<12} {:<8} {:>6} {:>10} {:>10.3}",
                    l.variant.id(),
                    format!("{:?}", l.site).to_lowercase(),
                    l.seeds,
                    val.trim(),
                    l.accuracy_at_max
                );
            }
            let _ = writeln!(s, "\n{:<12} {:>8} {:>8} {:>10}", "variant", "PCI-A", "sd", "dPCI");
            for p in &d.pci {
                let _ = writeln!(
                    s,
                    "{:<12} {:>8} {:>8.3} {:>10}",
                    p.variant.id(),
                    opt(p.mean),
                    p.sd,
                    opt(p.delta_pci_mean)
                );
            }
            let _ = writeln!(s, "\nregression of OOD gap (n = {})", d.regression_n);
            for st in &d.regression {
                let _ = writeln!(
                    s,
                    "  + {:<10} R2 {:.3}  dR2 {:+.3}{}",
                    st.added,
                    st.r2,
                    st.delta_r2,
                    if st.collinear { "  (collinear)" } else { "" }
                );
            }
            let _ = writeln!(
                s,
                "composite r: reduced {}, full {}, loo {}",
                opt(d.reduced_composite_r),
                opt(d.full_composite_r),
                opt(d.loo_r)
            );
        }
    }
    for st in &res.stats {
        let _ = writeln!(
            s,
            "{}: diff {:.3} [{:.3}, {:.3}], t {:.2}, p {} (perm {}), g {}",
            st.name,
            st.welch.estimate,
            st.welch.ci_low,
            st.welch.ci_high,
            st.welch.statistic,
            st.p_coarse,
            st.permutation_p.map_or("-".into(), coarse_p),
            opt(st.hedges_g)
        );
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDiff {
    pub seed: u64,
    pub key: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub diff: Option<f64>,
}

/// Seed-level join of two runs' metrics.
pub fn compare_runs(a: &Path, b: &Path) -> Result<Vec<MetricDiff>, HarnessError> {
    let mut joined: BTreeMap<(u64, String), (Option<f64>, Option<f64>)> = BTreeMap::new();
    for m in read_metrics(a)? {
        joined.entry((m.seed, m.key)).or_default().0 = Some(m.value);
    }
    for m in read_metrics(b)? {
        joined.entry((m.seed, m.key)).or_default().1 = Some(m.value);
    }
    Ok(joined
        .into_iter()
        .map(|((seed, key), (x, y))| MetricDiff {
            seed,
            key,
            a: x,
            b: y,
            diff: x.zip(y).map(|(x, y)| y - x),
        })
        .collect())
}
