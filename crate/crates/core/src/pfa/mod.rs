//! Performance-feedback autoscaling. Decisions are derived from observed
//! throughput and workflow structure only; task runtimes are never read.

mod history;
mod profile;
mod reconcile;
mod tba;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use history::{IntervalCounts, ThroughputHistory, MIN_WINDOW};
pub use profile::{equal_share, instant_ratios, profile_supply, smooth_ratios, throughput, throughputs, Profile};
pub use reconcile::{reconcile, reconcile_bounded};
pub use tba::{lookup_depth, mean_throughput, predict_demand, tba_propagate, LookupDepth, TokenEstimate};

use crate::model::{joint_dag, Dag, ResourceId, ResourceState, SystemConfig, SystemState, UserId};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PfaError {
    #[error("budget {budget} cannot buy one instance of the most expensive type ({max_cost})")]
    BudgetTooSmall { budget: u64, max_cost: u64 },
    #[error("invalid smoothing parameter: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum Smoothing {
    #[serde(rename = "ma")]
    MovingAverage {
        depth: usize,
    },
    Ewma {
        alpha: f64,
    },
}

impl Smoothing {
    pub fn label(&self) -> String {
        match self {
            Smoothing::MovingAverage { depth } => format!("MA{depth}"),
            Smoothing::Ewma { alpha } => format!("EWMA{alpha}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PfaConfig {
    pub smoothing: Smoothing,
}

impl Default for PfaConfig {
    fn default() -> Self {
        PfaConfig { smoothing: Smoothing::MovingAverage { depth: 10 } }
    }
}

impl PfaConfig {
    pub fn ma(depth: usize) -> Self {
        PfaConfig { smoothing: Smoothing::MovingAverage { depth } }
    }

    pub fn ewma(alpha: f64) -> Self {
        PfaConfig { smoothing: Smoothing::Ewma { alpha } }
    }

    pub fn validate(&self) -> Result<(), PfaError> {
        match self.smoothing {
            Smoothing::Ewma { alpha } if !(0.0..1.0).contains(&alpha) => {
                Err(PfaError::InvalidConfig(format!("alpha {alpha} outside [0, 1)")))
            }
            _ => Ok(()),
        }
    }

    /// Depth of history the smoothing needs.
    pub fn history_depth(&self) -> usize {
        match self.smoothing {
            Smoothing::MovingAverage { depth } => depth,
            Smoothing::Ewma { .. } => 0,
        }
    }
}

/// Carry-over between ticks of one user.
#[derive(Clone, Debug, PartialEq)]
pub struct PfaState<S> {
    pub rho: Vec<S>,
    /// Last finite lookup depth.
    pub depth: u64,
}

impl<S: Scalar> PfaState<S> {
    pub fn new(types: usize) -> Self {
        PfaState { rho: equal_share(types), depth: 1 }
    }
}

/// An idle resource as seen by the autoscaler.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IdleResource {
    pub id: ResourceId,
    pub rtype: usize,
    pub billing_end: u64,
    pub idle_since: u64,
}

/// Everything a decision may depend on.
#[derive(Clone, Debug)]
pub struct PfaObservation<'a> {
    pub history: &'a ThroughputHistory,
    pub dag: Dag,
    pub budget: u64,
    pub costs: Vec<u64>,
    /// Configured machines per type.
    pub capacity: Vec<u64>,
    /// Resources reserved by the user per type.
    pub allocated: Vec<u64>,
    pub idle: Vec<IdleResource>,
}

impl<'a> PfaObservation<'a> {
    pub fn capture(
        state: &SystemState,
        user: UserId,
        system: &SystemConfig,
        budget: u64,
        history: &'a ThroughputHistory,
    ) -> Self {
        let types = system.types.len();
        let idle = state
            .idle_resources(user)
            .map(|id| {
                let r = state.resource(id);
                debug_assert_eq!(r.state, ResourceState::Idle);
                IdleResource { id, rtype: r.rtype.0, billing_end: r.billing_end, idle_since: r.idle_since }
            })
            .collect();
        PfaObservation {
            history,
            dag: joint_dag(state, user),
            budget,
            costs: system.costs(),
            capacity: system.types.iter().map(|t| u64::from(t.count)).collect(),
            allocated: state.allocated_counts(user, types).into_iter().map(u64::from).collect(),
            idle,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingDecision<S> {
    /// Target reservation per type.
    pub targets: Vec<u64>,
    pub deallocate: Vec<ResourceId>,
    pub rho: Vec<S>,
    pub profile: Profile<S>,
    pub zeta: LookupDepth,
    pub estimate: TokenEstimate,
    pub sigma: u64,
}

/// Per-tick diagnostic line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PfaDiagnostic {
    pub t: u64,
    pub user: UserId,
    pub rho: Vec<f64>,
    pub nu: Vec<f64>,
    pub mu_hat: Vec<u64>,
    pub mu_tilde: u64,
    pub zeta: LookupDepth,
    pub theta: u64,
    pub lambda: u64,
    pub sigma: u64,
    pub mu: Vec<u64>,
}

impl<S: Scalar> ScalingDecision<S> {
    pub fn diagnostic(&self, t: u64, user: UserId) -> PfaDiagnostic {
        PfaDiagnostic {
            t,
            user,
            rho: self.rho.iter().map(|r| r.as_f64()).collect(),
            nu: self.profile.nu.iter().map(|r| r.as_f64()).collect(),
            mu_hat: self.profile.mu_hat.clone(),
            mu_tilde: self.profile.mu_tilde,
            zeta: self.zeta,
            theta: self.estimate.theta,
            lambda: self.estimate.lambda,
            sigma: self.sigma,
            mu: self.targets.clone(),
        }
    }
}

/// Wall-clock time spent in each decision step.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StepTimes(pub Vec<(&'static str, std::time::Duration)>);

impl StepTimes {
    fn lap(&mut self, name: &'static str, since: &mut Instant) {
        let now = Instant::now();
        self.0.push((name, now - *since));
        *since = now;
    }
}

/// Steps S1 to S6 for one user. Updates `state` with the new ratios and depth.
pub fn pfa_decide<S: Scalar>(
    obs: &PfaObservation<'_>,
    config: &PfaConfig,
    state: &mut PfaState<S>,
) -> Result<ScalingDecision<S>, PfaError> {
    pfa_decide_timed(obs, config, state, &mut StepTimes::default())
}

pub fn pfa_decide_timed<S: Scalar>(
    obs: &PfaObservation<'_>,
    config: &PfaConfig,
    state: &mut PfaState<S>,
    times: &mut StepTimes,
) -> Result<ScalingDecision<S>, PfaError> {
    let mut clock = Instant::now();
    let smoothing = &config.smoothing;
    let rho = smooth_ratios::<S>(obs.history, smoothing, &state.rho);
    let profile = profile_supply(&rho, &obs.costs, obs.budget)?;
    times.lap("profile", &mut clock);

    let zeta = lookup_depth::<S>(obs.history, smoothing, state.depth);
    let estimate = tba_propagate(&obs.dag, zeta);
    let sigma = predict_demand::<S>(&estimate, obs.history, smoothing);
    times.lap("predict", &mut clock);

    let mut targets =
        reconcile_bounded(&profile.mu_hat, profile.mu_tilde, sigma, &obs.costs, obs.budget, Some(&obs.capacity));
    for (t, &cap) in targets.iter_mut().zip(&obs.capacity) {
        *t = (*t).min(cap);
    }
    times.lap("reconcile", &mut clock);

    let deallocate = select_idle_surplus(&obs.idle, &obs.allocated, &targets);
    times.lap("deallocate", &mut clock);

    state.rho.clone_from(&rho);
    if let LookupDepth::Finite(z) = zeta {
        state.depth = z;
    }
    Ok(ScalingDecision { targets, deallocate, rho, profile, zeta, estimate, sigma })
}

/// Per type, up to `allocated - target` idle resources, nearest billing end
/// first, then longest idle, then lowest id.
pub fn select_idle_surplus(idle: &[IdleResource], allocated: &[u64], targets: &[u64]) -> Vec<ResourceId> {
    let mut out = Vec::new();
    for (ty, (&have, &want)) in allocated.iter().zip(targets).enumerate() {
        let surplus = have.saturating_sub(want) as usize;
        if surplus == 0 {
            continue;
        }
        let mut candidates: Vec<&IdleResource> = idle.iter().filter(|r| r.rtype == ty).collect();
        candidates.sort_by_key(|r| (r.billing_end, r.idle_since, r.id));
        out.extend(candidates.into_iter().take(surplus).map(|r| r.id));
    }
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64 as Q;

    fn obs<'a>(history: &'a ThroughputHistory, dag: Dag, budget: u64) -> PfaObservation<'a> {
        PfaObservation {
            history,
            dag,
            budget,
            costs: vec![1, 5],
            capacity: vec![32, 32],
            allocated: vec![0, 0],
            idle: Vec::new(),
        }
    }

    #[test]
    fn cold_start_without_work_allocates_nothing() {
        let h = ThroughputHistory::new(2, 10);
        let mut st = PfaState::<Q>::new(2);
        let d = pfa_decide(&obs(&h, Dag::default(), 12), &PfaConfig::ma(10), &mut st).unwrap();
        assert_eq!(d.rho, vec![Q::new(1, 2), Q::new(1, 2)]);
        assert_eq!((d.sigma, d.targets.clone()), (0, vec![0, 0]));
        assert!(d.deallocate.is_empty());
    }

    #[test]
    fn cold_start_with_frontier() {
        let h = ThroughputHistory::new(2, 10);
        let mut st = PfaState::<Q>::new(2);
        let d = pfa_decide(&obs(&h, Dag::from_edges(4, &[]), 12), &PfaConfig::ma(10), &mut st).unwrap();
        assert_eq!(d.zeta, LookupDepth::Unbounded);
        assert_eq!((d.estimate.theta, d.estimate.lambda, d.sigma), (4, 4, 4));
        assert_eq!((d.profile.mu_hat.clone(), d.profile.mu_tilde), (vec![2, 2], 4));
        assert_eq!(d.targets, vec![2, 2]);
    }

    #[test]
    fn surplus_release_prefers_nearest_billing_end() {
        let h = ThroughputHistory::new(2, 10);
        let mut o = obs(&h, Dag::default(), 12);
        o.allocated = vec![4, 0];
        o.idle = [(0, 120, 5), (1, 60, 9), (2, 60, 3), (3, 180, 0)]
            .iter()
            .map(|&(id, billing_end, idle_since)| IdleResource {
                id: ResourceId(id),
                rtype: 0,
                billing_end,
                idle_since,
            })
            .collect();
        let mut st = PfaState::<f64>::new(2);
        let d = pfa_decide(&o, &PfaConfig::ma(10), &mut st).unwrap();
        assert_eq!(d.targets, vec![0, 0]);
        assert_eq!(d.deallocate, vec![ResourceId(0), ResourceId(1), ResourceId(2), ResourceId(3)]);
        assert_eq!(select_idle_surplus(&o.idle, &[4, 0], &[1, 0]), vec![ResourceId(0), ResourceId(1), ResourceId(2)]);
        assert_eq!(select_idle_surplus(&o.idle, &[4, 0], &[3, 0]), vec![ResourceId(2)]);
    }

    #[test]
    fn diagnostic_line_shape() {
        let h = ThroughputHistory::new(2, 10);
        let mut st = PfaState::<f64>::new(2);
        let d = pfa_decide(&obs(&h, Dag::from_edges(1, &[]), 12), &PfaConfig::ewma(0.7), &mut st).unwrap();
        let v = serde_json::to_value(d.diagnostic(60, UserId(1))).unwrap();
        for key in ["t", "user", "rho", "nu", "mu_hat", "mu_tilde", "zeta", "theta", "lambda", "sigma", "mu"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(v["zeta"].is_null());
    }

    #[test]
    fn config_roundtrip_and_validation() {
        let c: PfaConfig = serde_json::from_str(r#"{"smoothing":{"mode":"ewma","alpha":0.8}}"#).unwrap();
        assert_eq!(c, PfaConfig::ewma(0.8));
        assert!(PfaConfig::ewma(1.0).validate().is_err());
        assert!(serde_json::from_str::<PfaConfig>(r#"{"smoothing":{"mode":"ma","depth":3,"x":1}}"#).is_err());
    }
}
