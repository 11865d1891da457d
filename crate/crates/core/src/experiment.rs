//! Versioned experiment documents and replication output.

use std::fs;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{summarize, RuntimeStats, UserSummary};
use crate::model::{validate_users, ConfigError, SystemConfig, UserConfig, Workload};
use crate::sim::{run_with, PolicyConfig, PolicyError, RunOptions, SimError, Trace};
use crate::workload::{GenError, GeneratorSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unsupported schema version {0}, expected {SCHEMA_VERSION}")]
    Schema(u32),
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Generator(#[from] GenError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum WorkloadSource {
    /// Workload JSON, relative paths resolved against the config file.
    File(PathBuf),
    Generate(GeneratorSpec),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    #[serde(default)]
    pub max_time_s: Option<u64>,
    #[serde(default)]
    pub check_invariants: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub system: SystemConfig,
    pub users: Vec<UserConfig>,
    pub policy: PolicyConfig,
    pub workload: WorkloadSource,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub replications: u32,
    #[serde(default)]
    pub run: RunSettings,
}

fn one() -> u32 {
    1
}

fn read(path: &Path) -> Result<String, ExperimentError> {
    fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.into(), source })
}

/// Parses a JSON document, naming `path` in errors.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ExperimentError> {
    serde_json::from_str(&read(path)?).map_err(|source| ExperimentError::Json { path: path.into(), source })
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let mut config: ExperimentConfig = read_json(path)?;
        if let WorkloadSource::File(p) = &mut config.workload {
            if p.is_relative() {
                *p = path.parent().unwrap_or(Path::new(".")).join(&*p);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.schema != SCHEMA_VERSION {
            return Err(ExperimentError::Schema(self.schema));
        }
        self.system.validate()?;
        validate_users(&self.users)?;
        if self.replications == 0 {
            return Err(ExperimentError::Invalid("replications must be at least 1".into()));
        }
        self.policy.build()?;
        if let PolicyConfig::Static { per_type } = &self.policy {
            if per_type.len() > self.system.types.len() {
                return Err(ExperimentError::Invalid("static target lists more types than the system".into()));
            }
        }
        if let WorkloadSource::Generate(g) = &self.workload {
            if g.types != self.system.type_names() {
                return Err(ExperimentError::Invalid(format!(
                    "generator types {:?} differ from system types {:?}",
                    g.types,
                    self.system.type_names()
                )));
            }
            if let Some(u) = g.users.iter().find(|u| !self.users.iter().any(|c| c.id == **u)) {
                return Err(ExperimentError::Invalid(format!("generator references unknown user {u}")));
            }
        }
        Ok(())
    }

    /// Seed of replication `r` given the base seed.
    pub fn replication_seed(base: u64, r: u32) -> u64 {
        base.wrapping_add(u64::from(r))
    }

    /// Workload of replication `r`; generated workloads shift their seed per replication.
    pub fn workload(&self, r: u32) -> Result<Workload, ExperimentError> {
        match &self.workload {
            WorkloadSource::File(p) => read_json(p),
            WorkloadSource::Generate(g) => {
                let mut g = g.clone();
                g.seed = Self::replication_seed(g.seed, r);
                Ok(g.generate()?)
            }
        }
    }

    pub fn options(&self) -> RunOptions {
        RunOptions { max_time_s: self.run.max_time_s, record_events: true, check_invariants: self.run.check_invariants }
    }

    /// Runs replication `r` with engine seed derived from `base_seed`.
    pub fn run_replication(&self, base_seed: u64, r: u32) -> Result<Trace, ExperimentError> {
        let workload = self.workload(r)?;
        let mut policy = self.policy.build()?;
        let seed = Self::replication_seed(base_seed, r);
        Ok(run_with(&self.system, &self.users, &workload, policy.as_mut(), seed, self.options())?)
    }
}

/// Per-user results of one replication.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicationMetrics {
    pub policy: String,
    pub seed: u64,
    pub end_s: u64,
    pub total_cost: u64,
    pub per_user: std::collections::BTreeMap<String, UserSummary>,
}

impl ReplicationMetrics {
    pub fn from_trace(trace: &Trace) -> Self {
        ReplicationMetrics {
            policy: trace.policy.clone(),
            seed: trace.seed,
            end_s: trace.end_s,
            total_cost: trace.total_cost(),
            per_user: summarize(trace).per_user,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, ExperimentError> {
    fs::File::create(path).map(BufWriter::new).map_err(|source| ExperimentError::Io { path: path.into(), source })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|source| ExperimentError::Json { path: path.into(), source })?;
    text.push('\n');
    fs::write(path, text).map_err(|source| ExperimentError::Io { path: path.into(), source })
}

/// Writes `<stem>.events.csv`, `.snapshots.csv`, `.outcomes.csv`, `.metrics.json`,
/// `.plans.jsonl`, `.pfa.jsonl` and the wall-clock `.timings.csv` and
/// `.runtime.json`. Returns the paths written.
pub fn write_outputs(dir: &Path, stem: &str, trace: &Trace) -> Result<Vec<PathBuf>, ExperimentError> {
    fs::create_dir_all(dir).map_err(|source| ExperimentError::Io { path: dir.into(), source })?;
    let path = |ext: &str| dir.join(format!("{stem}.{ext}"));
    let mut written = Vec::new();

    let p = path("events.csv");
    trace.write_events(create(&p)?)?;
    written.push(p);
    let p = path("snapshots.csv");
    trace.write_snapshots(create(&p)?)?;
    written.push(p);
    let p = path("outcomes.csv");
    trace.write_outcomes(create(&p)?)?;
    written.push(p);
    let p = path("metrics.json");
    write_json(&p, &ReplicationMetrics::from_trace(trace))?;
    written.push(p);
    if !trace.plans.is_empty() {
        let p = path("plans.jsonl");
        Trace::write_json_lines(&trace.plans, create(&p)?)
            .map_err(|source| ExperimentError::Io { path: p.clone(), source })?;
        written.push(p);
    }
    if !trace.diagnostics.is_empty() {
        let p = path("pfa.jsonl");
        Trace::write_json_lines(&trace.diagnostics, create(&p)?)
            .map_err(|source| ExperimentError::Io { path: p.clone(), source })?;
        written.push(p);
    }
    let p = path("timings.csv");
    trace.write_timings(create(&p)?)?;
    written.push(p);
    let p = path("runtime.json");
    let runtime: std::collections::BTreeMap<String, RuntimeStats> = summarize(trace).per_policy_runtime_stats;
    write_json(&p, &runtime)?;
    written.push(p);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(extra: &str) -> String {
        format!(
            r#"{{"schema": 1,
                "system": {{"types": [{{"name": "Small", "cost": 1, "count": 4}}, {{"name": "Large", "cost": 5, "count": 4}}]}},
                "users": [{{"id": 1, "budget": 10}}, {{"id": 2, "budget": 8}}],
                "policy": {{"kind": "pfa", "smoothing": {{"mode": "ma", "depth": 10}}}},
                "workload": {{"generate": {{"count": 6, "seed": 3, "rule": "wl1", "sizes": {{"median": 8, "mean": 10, "max": 20}}}}}}
                {extra}}}"#
        )
    }

    #[test]
    fn parses_and_runs() {
        let c: ExperimentConfig = serde_json::from_str(&doc("")).unwrap();
        c.validate().unwrap();
        assert_eq!(c.replications, 1);
        let t = c.run_replication(7, 0).unwrap();
        assert_eq!(t.outcomes.len(), 6);
        let again = c.run_replication(7, 0).unwrap();
        assert_eq!(t.fingerprint(), again.fingerprint());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(serde_json::from_str::<ExperimentConfig>(&doc(r#", "colour": 1"#)).is_err());
        let mut c: ExperimentConfig = serde_json::from_str(&doc("")).unwrap();
        c.schema = 2;
        assert!(matches!(c.validate(), Err(ExperimentError::Schema(2))));
        let mut c: ExperimentConfig = serde_json::from_str(&doc("")).unwrap();
        c.policy =
            PolicyConfig::Pfa { smoothing: crate::pfa::Smoothing::Ewma { alpha: 1.5 }, scalar: Default::default() };
        assert!(c.validate().is_err());
        let mut c: ExperimentConfig = serde_json::from_str(&doc("")).unwrap();
        c.users.pop();
        assert!(matches!(c.validate(), Err(ExperimentError::Invalid(_))));
    }
}
