//! Synthetic workload generation.

mod recipes;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{TaskSpec, UserId, ValidationError, WorkflowId, WorkflowSpec, Workload};
use crate::sim::assign_arrivals;

pub use recipes::{build, DagFamily, DagShape};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error("workflow count must be at least 1")]
    NoWorkflows,
    #[error("no DAG families given")]
    NoFamilies,
    #[error("no users given")]
    NoUsers,
    #[error("exactly two resource types are required, got {0}")]
    TypeCount(usize),
    #[error("{0} must be positive and finite")]
    BadParameter(&'static str),
    #[error("set count {sets} does not divide {count} workflows")]
    UnevenSets { count: usize, sets: usize },
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

/// `max(1, round(raw / 30))` with halves rounded up.
pub fn scale_runtimes(raw: f64) -> u64 {
    debug_assert!(raw > 0.0);
    ((raw / 30.0 + 0.5).floor() as u64).max(1)
}

/// Log-normal raw task runtimes before scaling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuntimeModel {
    pub median_raw_s: f64,
    pub sigma: f64,
    /// Upper clamp on raw runtimes.
    pub max_raw_s: f64,
}

impl Default for RuntimeModel {
    fn default() -> Self {
        RuntimeModel { median_raw_s: 50.0, sigma: 1.7, max_raw_s: 3000.0 }
    }
}

impl RuntimeModel {
    fn distribution(&self) -> Result<LogNormal<f64>, GenError> {
        if !(self.median_raw_s > 0.0 && self.median_raw_s.is_finite()) {
            return Err(GenError::BadParameter("median_raw_s"));
        }
        if !(self.max_raw_s > 0.0 && self.max_raw_s.is_finite()) {
            return Err(GenError::BadParameter("max_raw_s"));
        }
        LogNormal::new(self.median_raw_s.ln(), self.sigma).map_err(|_| GenError::BadParameter("sigma"))
    }
}

/// Log-normal tasks-per-workflow model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeModel {
    pub median: f64,
    pub mean: f64,
    pub max: usize,
}

impl Default for SizeModel {
    fn default() -> Self {
        SizeModel { median: 38.0, mean: 74.0, max: 1000 }
    }
}

impl SizeModel {
    fn distribution(&self) -> Result<LogNormal<f64>, GenError> {
        if !(self.median > 0.0 && self.mean >= self.median && self.mean.is_finite()) {
            return Err(GenError::BadParameter("size median/mean"));
        }
        let sigma = (2.0 * (self.mean / self.median).ln()).sqrt();
        LogNormal::new(self.median.ln(), sigma).map_err(|_| GenError::BadParameter("size median/mean"))
    }
}

/// How the runtime on the other resource type is derived from the base one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SecondTypeRule {
    /// Up to 50% deviation; the base runtime goes to a random type.
    Wl1,
    /// Up to 100% deviation; the derived runtime always belongs to the second type.
    Wl2,
}

impl SecondTypeRule {
    pub fn max_deviation(self) -> f64 {
        match self {
            SecondTypeRule::Wl1 => 0.5,
            SecondTypeRule::Wl2 => 1.0,
        }
    }

    /// Runtimes `[first type, second type]` for a task with runtime `base`.
    pub fn apply<R: Rng>(self, base: u64, rng: &mut R) -> [u64; 2] {
        let m = self.max_deviation();
        let dev: f64 = rng.random_range(-m..=m);
        let other = ((base as f64 * (1.0 + dev) + 0.5).floor() as u64).max(1);
        match self {
            SecondTypeRule::Wl1 if rng.random_bool(0.5) => [other, base],
            _ => [base, other],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalSpec {
    pub utilization: f64,
    pub capacity: u32,
}

/// Generator document consumed by `gen`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub count: usize,
    pub seed: u64,
    pub rule: SecondTypeRule,
    #[serde(default = "default_families")]
    pub families: Vec<DagFamily>,
    #[serde(default = "default_users")]
    pub users: Vec<UserId>,
    #[serde(default = "default_types")]
    pub types: Vec<String>,
    #[serde(default)]
    pub runtime: RuntimeModel,
    #[serde(default)]
    pub sizes: SizeModel,
    #[serde(default)]
    pub arrivals: Option<ArrivalSpec>,
    /// Number of equally sized output files.
    #[serde(default = "one")]
    pub sets: usize,
}

fn default_families() -> Vec<DagFamily> {
    DagFamily::ALL.to_vec()
}

fn default_users() -> Vec<UserId> {
    vec![UserId(1), UserId(2)]
}

fn default_types() -> Vec<String> {
    vec!["Small".into(), "Large".into()]
}

fn one() -> usize {
    1
}

impl GeneratorSpec {
    pub fn new(count: usize, seed: u64, rule: SecondTypeRule) -> Self {
        GeneratorSpec {
            count,
            seed,
            rule,
            families: default_families(),
            users: default_users(),
            types: default_types(),
            runtime: RuntimeModel::default(),
            sizes: SizeModel::default(),
            arrivals: None,
            sets: 1,
        }
    }

    pub fn generate(&self) -> Result<Workload, GenError> {
        if self.users.is_empty() {
            return Err(GenError::NoUsers);
        }
        if self.types.len() != 2 {
            return Err(GenError::TypeCount(self.types.len()));
        }
        let sizes = self.sizes.distribution()?;
        let types = [self.types[0].as_str(), self.types[1].as_str()];
        let mut workload =
            generate_workload(&self.families, &self.runtime, self.rule, types, self.count, self.seed, |rng| {
                let size = sizes.sample(rng).round().clamp(1.0, self.sizes.max as f64) as usize;
                let user = self.users[rng.random_range(0..self.users.len())];
                (size, user)
            })?;
        if let Some(a) = &self.arrivals {
            if !(a.utilization > 0.0 && a.utilization < 1.0) || a.capacity == 0 {
                return Err(GenError::BadParameter("arrivals"));
            }
            assign_arrivals(&mut workload, &self.types, a.utilization, a.capacity, self.seed)?;
        }
        Ok(workload)
    }

    /// The workload split into `sets` consecutive parts of equal size.
    pub fn generate_sets(&self) -> Result<Vec<Workload>, GenError> {
        if self.sets == 0 || !self.count.is_multiple_of(self.sets) {
            return Err(GenError::UnevenSets { count: self.count, sets: self.sets });
        }
        let all = self.generate()?;
        let per = self.count / self.sets;
        Ok(all.workflows.chunks(per).map(|c| Workload { workflows: c.to_vec() }).collect())
    }
}

/// Generates `count` workflows with runtimes on two types. `draw` picks the
/// task count and owner of each workflow. Workflow `i` draws from its own
/// streams, so workflows are independent of each other's sizes.
pub fn generate_workload<F>(
    families: &[DagFamily],
    model: &RuntimeModel,
    rule: SecondTypeRule,
    types: [&str; 2],
    count: usize,
    seed: u64,
    mut draw: F,
) -> Result<Workload, GenError>
where
    F: FnMut(&mut ChaCha8Rng) -> (usize, UserId),
{
    if count == 0 {
        return Err(GenError::NoWorkflows);
    }
    if families.is_empty() {
        return Err(GenError::NoFamilies);
    }
    let runtimes = model.distribution()?;
    let mut workflows = Vec::with_capacity(count);
    for i in 0..count {
        let mut shape_rng = ChaCha8Rng::seed_from_u64(seed);
        shape_rng.set_stream(2 * i as u64);
        let mut rule_rng = ChaCha8Rng::seed_from_u64(seed);
        rule_rng.set_stream(2 * i as u64 + 1);

        let family = families[shape_rng.random_range(0..families.len())];
        let (size, user) = draw(&mut shape_rng);
        let priority = shape_rng.random_range(0..=9u8);
        let shape = build(family, size);
        let tasks = (0..shape.tasks as u32)
            .map(|id| {
                let raw = runtimes.sample(&mut shape_rng).min(model.max_raw_s);
                let [a, b] = rule.apply(scale_runtimes(raw), &mut rule_rng);
                TaskSpec { id, runtimes: BTreeMap::from([(types[0].to_string(), a), (types[1].to_string(), b)]) }
            })
            .collect();
        workflows.push(WorkflowSpec {
            id: WorkflowId(i as u32),
            user,
            priority,
            arrival_s: 0,
            tasks,
            edges: shape.edges,
        });
    }
    Ok(Workload { workflows })
}

/// Summary statistics of a workload on two types.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WorkloadStats {
    pub workflows: usize,
    pub mean_tasks: f64,
    pub median_tasks: f64,
    /// Statistics of the per-task runtime averaged over types.
    pub mean_runtime: f64,
    pub median_runtime: f64,
    pub std_runtime: f64,
    pub mean_runtime_per_type: Vec<f64>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn workload_stats(workload: &Workload, types: &[String]) -> WorkloadStats {
    let mut sizes: Vec<f64> = workload.workflows.iter().map(|w| w.tasks.len() as f64).collect();
    let mut all = Vec::new();
    let mut per_type = vec![(0.0, 0usize); types.len()];
    for task in workload.workflows.iter().flat_map(|w| &w.tasks) {
        let mut sum = 0.0;
        for (k, name) in types.iter().enumerate() {
            let r = task.runtimes.get(name).copied().unwrap_or(0) as f64;
            sum += r;
            per_type[k].0 += r;
            per_type[k].1 += 1;
        }
        all.push(sum / types.len() as f64);
    }
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    WorkloadStats {
        workflows: sizes.len(),
        mean_tasks: sizes.iter().sum::<f64>() / sizes.len() as f64,
        median_tasks: median(&mut sizes),
        mean_runtime: mean,
        median_runtime: median(&mut all),
        std_runtime: var.sqrt(),
        mean_runtime_per_type: per_type.iter().map(|&(s, c)| s / c as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_workflow;

    fn within(x: f64, target: f64, tol: f64) -> bool {
        (x - target).abs() <= tol * target
    }

    #[test]
    fn scaling_examples() {
        assert_eq!(scale_runtimes(300.0), 10);
        assert_eq!(scale_runtimes(10.0), 1);
        assert_eq!(scale_runtimes(45.0), 2);
        assert_eq!(scale_runtimes(44.9), 1);
        assert_eq!(scale_runtimes(0.1), 1);
    }

    #[test]
    fn rule_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut swapped = 0;
        for _ in 0..2000 {
            let [a, b] = SecondTypeRule::Wl1.apply(10, &mut rng);
            assert!(a == 10 || b == 10);
            let other = if a == 10 { b } else { a };
            assert!((5..=15).contains(&other), "{other}");
            if b == 10 && a != 10 {
                swapped += 1;
            }
            let [a, b] = SecondTypeRule::Wl2.apply(10, &mut rng);
            assert_eq!(a, 10);
            assert!((1..=20).contains(&b));
        }
        assert!(swapped > 700, "{swapped}");
    }

    #[test]
    fn deterministic_and_valid() {
        let spec = GeneratorSpec::new(40, 17, SecondTypeRule::Wl1);
        let a = spec.generate().unwrap();
        assert_eq!(a, spec.generate().unwrap());
        assert_ne!(a, GeneratorSpec::new(40, 18, SecondTypeRule::Wl1).generate().unwrap());
        for wf in &a.workflows {
            let v = validate_workflow(wf, &spec.types).unwrap();
            assert!(v.priority <= 9);
            assert!(wf.tasks.iter().all(|t| t.runtimes.values().all(|&r| r >= 1)));
        }
        assert!(matches!(GeneratorSpec::new(0, 1, SecondTypeRule::Wl1).generate(), Err(GenError::NoWorkflows)));
    }

    #[test]
    fn arrivals_and_sets() {
        let mut spec = GeneratorSpec::new(30, 2, SecondTypeRule::Wl2);
        spec.arrivals = Some(ArrivalSpec { utilization: 0.2, capacity: 64 });
        spec.sets = 3;
        let sets = spec.generate_sets().unwrap();
        assert_eq!(sets.len(), 3);
        assert!(sets.iter().all(|s| s.workflows.len() == 10));
        let times: Vec<u64> = sets.iter().flat_map(|s| s.workflows.iter().map(|w| w.arrival_s)).collect();
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
        spec.sets = 4;
        assert!(matches!(spec.generate_sets(), Err(GenError::UnevenSets { .. })));
    }

    #[test]
    fn statistics_match_targets() {
        for (rule, mean_rt) in [(SecondTypeRule::Wl1, 6.3), (SecondTypeRule::Wl2, 6.9)] {
            let spec = GeneratorSpec::new(600, 5, rule);
            let s = workload_stats(&spec.generate().unwrap(), &spec.types);
            assert!(within(s.mean_runtime, mean_rt, 0.2), "{rule:?} {s:?}");
            assert!(within(s.median_runtime, 1.5, 0.2), "{rule:?} {s:?}");
            assert!(within(s.mean_tasks, 74.0, 0.2), "{rule:?} {s:?}");
            assert!(within(s.median_tasks, 38.0, 0.2), "{rule:?} {s:?}");
        }
    }
}
