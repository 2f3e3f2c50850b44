use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::manifest::{Experiment, RunManifest, TrainPlan, MANIFEST_FILE};
use super::report::SeedMetric;
use super::{e1, e2, e3, HarnessError};
use crate::agents::{Agent, AgentCheckpoint, TrainingMeta};
use crate::markers::MarkerReport;
use crate::stats::{coarse_p, StatResult};
use crate::training::{train_agent, write_train_log};

pub const SUMMARY_FILE: &str = "summary.json";
pub const SEED_METRICS_FILE: &str = "seed_metrics.csv";

/// A run directory bound to one manifest. Workers write only their own
/// seed files; aggregation happens afterwards on the calling thread.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
    pub manifest: RunManifest,
}

impl RunDir {
    /// Writes the manifest, or resumes a directory holding the same one.
    pub fn open(root: &Path, manifest: &RunManifest) -> Result<Self, HarnessError> {
        let path = root.join(MANIFEST_FILE);
        let manifest = if path.exists() {
            let existing = RunManifest::load(root)?;
            if existing.config_hash != manifest.config_hash {
                return Err(HarnessError::Config(format!(
                    "{} holds a different run (manifest {} vs {})",
                    root.display(),
                    existing.short_hash(),
                    manifest.short_hash()
                )));
            }
            existing
        } else {
            manifest.write(root)?;
            manifest.clone()
        };
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
        })
    }

    pub fn hash(&self) -> &str {
        &self.manifest.config_hash
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Returns the cached per-seed result `name`, computing and storing it
    /// if absent or produced under another manifest.
    pub fn cached<T: Serialize + DeserializeOwned>(
        &self,
        name: &str,
        compute: impl FnOnce() -> Result<T, HarnessError>,
    ) -> Result<T, HarnessError> {
        #[derive(Serialize, Deserialize)]
        struct Stored<T> {
            manifest_hash: String,
            result: T,
        }
        let path = self.root.join("seeds").join(format!("{name}.json"));
        if let Ok(bytes) = std::fs::read(&path) {
            if let Ok(s) = serde_json::from_slice::<Stored<T>>(&bytes) {
                if s.manifest_hash == self.hash() {
                    return Ok(s.result);
                }
            }
        }
        let result = compute()?;
        let stored = Stored {
            manifest_hash: self.hash().to_string(),
            result,
        };
        write_atomic(&path, &serde_json::to_vec(&stored)?)?;
        Ok(stored.result)
    }

    /// Runs `f` over the manifest seeds on a bounded pool; results keep seed order.
    pub fn par_seeds<T: Send>(&self, f: impl Fn(u64) -> Result<T, HarnessError> + Sync) -> Result<Vec<T>, HarnessError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.manifest.config.workers)
            .build()
            .map_err(|e| HarnessError::Pool(e.to_string()))?;
        pool.install(|| self.manifest.seeds.par_iter().map(|&s| f(s)).collect())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Trains one plan for one seed, or loads the checkpoint cached under a key
/// derived from the full agent and training configuration.
pub fn train_cached(root: &Path, plan: &TrainPlan, seed: u64) -> Result<(Agent, TrainingMeta), HarnessError> {
    let cfg = plan.for_seed(seed);
    let key_json = serde_json::to_string(&(&plan.agent, plan.task, &cfg))?;
    let key = &hex::encode(Sha256::digest(key_json.as_bytes()))[..12];
    let path = root.join("checkpoints").join(format!("{}-s{seed}-{key}.json", plan.label));
    if path.exists() {
        let ck = AgentCheckpoint::load(&path)?;
        return Ok((ck.to_agent()?, ck.meta));
    }
    let out = train_agent(plan.agent.clone(), plan.task, &cfg)?;
    let logs = root.join("train_logs");
    std::fs::create_dir_all(&logs)?;
    write_train_log(&logs.join(format!("{}-s{seed}.csv", plan.label)), &out.log)?;
    write_atomic(&path, &serde_json::to_vec(&out.checkpoint)?)?;
    Ok((out.agent, out.checkpoint.meta))
}

/// A seed dropped from analysis for failing the convergence gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub label: String,
    pub seed: u64,
    pub gate_accuracy: f64,
    pub threshold: f64,
    pub reason: String,
}

impl Exclusion {
    pub fn check(label: &str, seed: u64, meta: &TrainingMeta, threshold: f64) -> Option<Self> {
        meta.excluded.then(|| Self {
            label: label.to_string(),
            seed,
            gate_accuracy: meta.imitation_accuracy,
            threshold,
            reason: format!(
                "held-out imitation {:.4} not above the {threshold} gate",
                meta.imitation_accuracy
            ),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedStat {
    pub name: String,
    pub welch: StatResult,
    pub hedges_g: Option<f64>,
    pub permutation_p: Option<f64>,
    /// Exhaustive permutation p where the groups are small enough.
    pub exact_p: Option<f64>,
    pub p_coarse: String,
}

impl NamedStat {
    pub fn compare(name: &str, a: &[f64], b: &[f64], n_perm: usize, seed: u64) -> Result<Self, HarnessError> {
        use crate::stats::{exact_permutation_p, hedges_g, permutation_test, welch_t};
        let welch = welch_t(a, b)?;
        let exact_p = if a.len() + b.len() <= 16 {
            Some(exact_permutation_p(a, b)?)
        } else {
            None
        };
        Ok(Self {
            name: name.to_string(),
            p_coarse: coarse_p(welch.p_value),
            hedges_g: hedges_g(a, b)?,
            permutation_p: Some(permutation_test(a, b, n_perm, seed)?),
            exact_p,
            welch,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExperimentDetails {
    E1(e1::E1Summary),
    E2(e2::E2Summary),
    E3(e3::E3Summary),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub id: String,
    pub experiment: Experiment,
    pub manifest_hash: String,
    pub seeds: Vec<u64>,
    pub markers: Vec<MarkerReport>,
    pub stats: Vec<NamedStat>,
    pub exclusions: Vec<Exclusion>,
    pub figures: Vec<String>,
    pub details: ExperimentDetails,
}

/// Runs (or resumes) the manifest's experiment in `out`.
pub fn run_experiment(manifest: &RunManifest, out: &Path) -> Result<ExperimentResult, HarnessError> {
    let dir = RunDir::open(out, manifest)?;
    let (result, metrics) = match manifest.experiment {
        Experiment::E1 => e1::run(&dir)?,
        Experiment::E2 => e2::run(&dir)?,
        Experiment::E3 => e3::run(&dir)?,
    };
    let rows: Vec<SeedMetric> = metrics
        .into_iter()
        .map(|(seed, key, value)| SeedMetric {
            manifest_hash: dir.hash().to_string(),
            seed,
            key,
            value,
        })
        .collect();
    write_csv(&dir.path(SEED_METRICS_FILE), &rows)?;
    std::fs::write(dir.path(SUMMARY_FILE), serde_json::to_vec_pretty(&result)?)?;
    Ok(result)
}

pub fn load_result(dir: &Path) -> Result<ExperimentResult, HarnessError> {
    Ok(serde_json::from_slice(&std::fs::read(dir.join(SUMMARY_FILE))?)?)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// SHA-256 of a file's bytes.
pub fn csv_digest(path: &Path) -> Result<String, HarnessError> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

pub(crate) fn mean_of(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub(crate) fn sd_of(v: &[f64]) -> f64 {
    if v.len() < 2 {
        0.0
    } else {
        crate::stats::sd(v)
    }
}
