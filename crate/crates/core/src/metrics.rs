//! User-, system- and elasticity-oriented metrics computed from traces.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::UserId;
use crate::scalar::Scalar;
use crate::sim::Trace;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("ideal makespan is zero")]
    ZeroIdealMakespan,
    #[error("demand/supply series has no usable intervals")]
    EmptySeries,
    #[error("demand and supply series differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// Timing of one workflow, in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowOutcome {
    pub arrival: u64,
    pub first_start: u64,
    pub last_finish: u64,
    pub ideal_makespan: u64,
}

impl WorkflowOutcome {
    pub fn waiting_time(&self) -> u64 {
        self.first_start - self.arrival
    }

    pub fn makespan(&self) -> u64 {
        self.last_finish - self.first_start
    }

    pub fn response_time(&self) -> u64 {
        self.last_finish - self.arrival
    }
}

/// Response time over the reference-system makespan.
pub fn slowdown<S: Scalar>(outcome: &WorkflowOutcome) -> Result<S, MetricsError> {
    if outcome.ideal_makespan == 0 {
        return Err(MetricsError::ZeroIdealMakespan);
    }
    Ok(S::ratio(outcome.response_time(), outcome.ideal_makespan))
}

/// Per-interval demand and supply of one user, with the maximal supply `capacity`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DemandSupplySeries {
    pub demand: Vec<u32>,
    pub supply: Vec<u32>,
    pub capacity: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticityReport<S> {
    #[serde(rename = "aU")]
    pub a_u: S,
    #[serde(rename = "aO")]
    pub a_o: S,
    #[serde(rename = "tU")]
    pub t_u: S,
    #[serde(rename = "tO")]
    pub t_o: S,
}

/// Under/over-provisioning accuracy and time share. Intervals whose demand
/// exceeds the capacity are dropped and the horizon shrinks accordingly.
pub fn elasticity<S: Scalar>(series: &DemandSupplySeries) -> Result<ElasticityReport<S>, MetricsError> {
    if series.demand.len() != series.supply.len() {
        return Err(MetricsError::LengthMismatch(series.demand.len(), series.supply.len()));
    }
    if series.capacity == 0 {
        return Err(MetricsError::EmptySeries);
    }
    let (mut under, mut over, mut under_n, mut over_n, mut horizon) = (0u64, 0u64, 0u64, 0u64, 0u64);
    for (&d, &s) in series.demand.iter().zip(&series.supply) {
        if d > series.capacity {
            continue;
        }
        horizon += 1;
        if d > s {
            under += u64::from(d - s);
            under_n += 1;
        } else if s > d {
            over += u64::from(s - d);
            over_n += 1;
        }
    }
    if horizon == 0 {
        return Err(MetricsError::EmptySeries);
    }
    let volume = horizon * u64::from(series.capacity);
    Ok(ElasticityReport {
        a_u: S::ratio(under, volume),
        a_o: S::ratio(over, volume),
        t_u: S::ratio(under_n, horizon),
        t_o: S::ratio(over_n, horizon),
    })
}

/// Currency charged for one user in one interval, split by type.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostRow {
    pub interval: usize,
    pub user: UserId,
    pub per_type: Vec<u64>,
    pub total: u64,
}

pub type CostSeries = Vec<CostRow>;

/// Sum of type costs over the resources each user held in each interval.
pub fn cost_per_interval(trace: &Trace) -> CostSeries {
    let costs = trace.system.costs();
    trace
        .snapshots
        .iter()
        .map(|snap| {
            let per_type: Vec<u64> = snap.reserved.iter().zip(&costs).map(|(&n, &q)| u64::from(n) * q).collect();
            CostRow { interval: snap.interval, user: snap.user, total: per_type.iter().sum(), per_type }
        })
        .collect()
}

/// Busy and allocated shares for one user in one interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilizationRow<S> {
    pub interval: usize,
    pub user: UserId,
    pub busy_of_allocated: S,
    pub allocated_of_capacity: S,
}

/// `busy_seconds` is resource-seconds spent busy during an interval of
/// `interval_s` seconds in which `allocated` resources were held.
pub fn utilization<S: Scalar>(busy_seconds: u64, allocated: u32, capacity: u32, interval_s: u64) -> (S, S) {
    let busy = if allocated == 0 { S::zero() } else { S::ratio(busy_seconds, u64::from(allocated) * interval_s) };
    let alloc = if capacity == 0 { S::zero() } else { S::ratio(u64::from(allocated), u64::from(capacity)) };
    (busy, alloc)
}

pub fn utilization_report<S: Scalar>(trace: &Trace) -> Vec<UtilizationRow<S>> {
    let capacity = trace.system.capacity();
    trace
        .snapshots
        .iter()
        .map(|snap| {
            let (busy, alloc) = utilization(snap.busy_seconds, snap.supply, capacity, trace.system.interval_s);
            UtilizationRow {
                interval: snap.interval,
                user: snap.user,
                busy_of_allocated: busy,
                allocated_of_capacity: alloc,
            }
        })
        .collect()
}

/// Demand and supply of `user` per interval.
pub fn demand_supply(trace: &Trace, user: UserId) -> DemandSupplySeries {
    let mut series = DemandSupplySeries { capacity: trace.system.capacity(), ..Default::default() };
    for snap in trace.snapshots.iter().filter(|s| s.user == user) {
        series.demand.push(snap.demand);
        series.supply.push(snap.supply);
    }
    series
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len().is_multiple_of(2) {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostStats {
    pub mean: f64,
    pub max: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserSummary {
    pub workflows: usize,
    pub mean_slowdown: f64,
    pub median_slowdown: f64,
    pub cost: CostStats,
    pub elasticity: Option<ElasticityReport<f64>>,
    pub mean_busy_of_allocated: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub ticks: usize,
    pub mean_s: f64,
    pub median_s: f64,
    pub max_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub per_user: BTreeMap<String, UserSummary>,
    pub per_policy_runtime_stats: BTreeMap<String, RuntimeStats>,
}

/// Slowdowns of the completed workflows of `user`.
pub fn slowdowns(trace: &Trace, user: Option<UserId>) -> Vec<f64> {
    trace
        .outcomes
        .iter()
        .filter(|o| user.is_none_or(|u| o.user == u))
        .filter_map(|o| slowdown::<f64>(&o.outcome).ok())
        .collect()
}

pub fn summarize(trace: &Trace) -> MetricSummary {
    let mut per_user = BTreeMap::new();
    let costs = cost_per_interval(trace);
    let util = utilization_report::<f64>(trace);
    for u in &trace.users {
        let sd = slowdowns(trace, Some(u.id));
        let user_costs: Vec<u64> = costs.iter().filter(|c| c.user == u.id).map(|c| c.total).collect();
        let busy: Vec<f64> = util.iter().filter(|r| r.user == u.id).map(|r| r.busy_of_allocated).collect();
        per_user.insert(
            u.id.to_string(),
            UserSummary {
                workflows: sd.len(),
                mean_slowdown: mean(&sd),
                median_slowdown: median(&sd),
                cost: CostStats {
                    mean: mean(&user_costs.iter().map(|&c| c as f64).collect::<Vec<_>>()),
                    max: user_costs.iter().copied().max().unwrap_or(0),
                },
                elasticity: elasticity(&demand_supply(trace, u.id)).ok(),
                mean_busy_of_allocated: mean(&busy),
            },
        );
    }
    let times: Vec<f64> = trace.decisions.iter().map(|d| d.total.as_secs_f64()).collect();
    let mut per_policy_runtime_stats = BTreeMap::new();
    per_policy_runtime_stats.insert(
        trace.policy.clone(),
        RuntimeStats {
            ticks: times.len(),
            mean_s: mean(&times),
            median_s: median(&times),
            max_s: times.iter().copied().fold(0.0, f64::max),
        },
    );
    MetricSummary { per_user, per_policy_runtime_stats }
}
