use std::collections::BTreeMap;
use std::marker::PhantomData;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ResourceId, SystemConfig, SystemState, UserId};
use crate::pfa::{
    pfa_decide_timed, PfaConfig, PfaDiagnostic, PfaError, PfaObservation, PfaState, Smoothing, StepTimes,
    ThroughputHistory,
};
use crate::plan::{allocation_delta, plf_decide, scf_decide, ExecutionPlan, PlanContext, PlanError};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error(transparent)]
    Pfa(#[from] PfaError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

/// What a policy sees when invoked for one user.
pub struct TickView<'a> {
    pub tick: usize,
    pub now: u64,
    pub system: &'a SystemConfig,
    pub state: &'a SystemState,
    pub user: UserId,
    pub budget: u64,
    pub history: &'a ThroughputHistory,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Decision {
    /// New instances per type.
    pub allocate: Vec<u64>,
    pub deallocate: Vec<ResourceId>,
    /// Task placement to follow until the next tick.
    pub plan: Option<ExecutionPlan>,
    pub diagnostic: Option<PfaDiagnostic>,
    pub steps: StepTimes,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dispatch {
    Dynamic,
    FollowPlan,
}

pub trait Autoscaler: Send {
    fn name(&self) -> String;
    fn dispatch(&self) -> Dispatch;
    fn decide(&mut self, view: &TickView<'_>) -> Result<Decision, PolicyError>;

    /// Intervals of throughput history the policy reads.
    fn history_depth(&self) -> usize {
        0
    }
}

/// Performance-feedback autoscaler over scalar `S`.
pub struct PfaPolicy<S> {
    config: PfaConfig,
    states: BTreeMap<UserId, PfaState<S>>,
    _scalar: PhantomData<S>,
}

impl<S: Scalar> PfaPolicy<S> {
    pub fn new(config: PfaConfig) -> Self {
        PfaPolicy { config, states: BTreeMap::new(), _scalar: PhantomData }
    }
}

impl<S: Scalar> Autoscaler for PfaPolicy<S> {
    fn name(&self) -> String {
        format!("PFA-{}", self.config.smoothing.label())
    }

    fn dispatch(&self) -> Dispatch {
        Dispatch::Dynamic
    }

    fn history_depth(&self) -> usize {
        self.config.history_depth()
    }

    fn decide(&mut self, view: &TickView<'_>) -> Result<Decision, PolicyError> {
        let types = view.system.types.len();
        let mut steps = StepTimes::default();
        let clock = Instant::now();
        let obs = PfaObservation::capture(view.state, view.user, view.system, view.budget, view.history);
        steps.0.push(("observe", clock.elapsed()));
        let state = self.states.entry(view.user).or_insert_with(|| PfaState::new(types));
        let d = pfa_decide_timed(&obs, &self.config, state, &mut steps)?;
        let clock = Instant::now();
        let allocate = allocation_delta(view.state, view.user, &d.targets, types);
        steps.0.push(("allocate", clock.elapsed()));
        Ok(Decision {
            allocate,
            deallocate: d.deallocate.clone(),
            plan: None,
            diagnostic: Some(d.diagnostic(view.now, view.user)),
            steps,
        })
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PlfPolicy;

#[derive(Clone, Copy, Debug, Default)]
pub struct ScfPolicy;

fn plan_context<'a>(view: &TickView<'a>) -> PlanContext<'a> {
    PlanContext { now: view.now, system: view.system, user: view.user, budget: view.budget, seed: view.seed }
}

impl Autoscaler for PlfPolicy {
    fn name(&self) -> String {
        "PLF".into()
    }

    fn dispatch(&self) -> Dispatch {
        Dispatch::FollowPlan
    }

    fn decide(&mut self, view: &TickView<'_>) -> Result<Decision, PolicyError> {
        let start = Instant::now();
        let d = plf_decide(view.state, &plan_context(view))?;
        Ok(Decision {
            allocate: d.allocate,
            deallocate: d.deallocate,
            plan: Some(d.plan),
            diagnostic: None,
            steps: StepTimes(vec![("plan", start.elapsed())]),
        })
    }
}

impl Autoscaler for ScfPolicy {
    fn name(&self) -> String {
        "SCF".into()
    }

    fn dispatch(&self) -> Dispatch {
        Dispatch::FollowPlan
    }

    fn decide(&mut self, view: &TickView<'_>) -> Result<Decision, PolicyError> {
        let start = Instant::now();
        let d = scf_decide(view.state, &plan_context(view));
        Ok(Decision {
            allocate: d.allocate,
            deallocate: d.deallocate,
            plan: Some(d.plan),
            diagnostic: None,
            steps: StepTimes(vec![("plan", start.elapsed())]),
        })
    }
}

/// Holds a constant reservation per type and never releases it. An empty
/// target means no autoscaling at all.
#[derive(Clone, Debug, Default)]
pub struct StaticPolicy {
    pub per_type: Vec<u64>,
}

impl Autoscaler for StaticPolicy {
    fn name(&self) -> String {
        "static".into()
    }

    fn dispatch(&self) -> Dispatch {
        Dispatch::Dynamic
    }

    fn decide(&mut self, view: &TickView<'_>) -> Result<Decision, PolicyError> {
        let types = view.system.types.len();
        let mut targets = self.per_type.clone();
        targets.resize(types, 0);
        Ok(Decision { allocate: allocation_delta(view.state, view.user, &targets, types), ..Default::default() })
    }
}

/// Which scalar the performance-feedback arithmetic runs on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarKind {
    #[default]
    F64,
    F32,
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PolicyConfig {
    Pfa {
        smoothing: Smoothing,
        #[serde(default)]
        scalar: ScalarKind,
    },
    Plf,
    Scf,
    Static {
        #[serde(default)]
        per_type: Vec<u64>,
    },
}

impl PolicyConfig {
    pub fn pfa(config: PfaConfig) -> Self {
        PolicyConfig::Pfa { smoothing: config.smoothing, scalar: ScalarKind::F64 }
    }

    pub fn build(&self) -> Result<Box<dyn Autoscaler>, PolicyError> {
        Ok(match self {
            PolicyConfig::Pfa { smoothing, scalar } => {
                let config = PfaConfig { smoothing: *smoothing };
                config.validate()?;
                match scalar {
                    ScalarKind::F64 => Box::new(PfaPolicy::<f64>::new(config)),
                    ScalarKind::F32 => Box::new(PfaPolicy::<f32>::new(config)),
                    ScalarKind::Exact => Box::new(PfaPolicy::<num_rational::Ratio<i128>>::new(config)),
                }
            }
            PolicyConfig::Plf => Box::new(PlfPolicy),
            PolicyConfig::Scf => Box::new(ScfPolicy),
            PolicyConfig::Static { per_type } => Box::new(StaticPolicy { per_type: per_type.clone() }),
        })
    }

    pub fn label(&self) -> String {
        match self {
            PolicyConfig::Pfa { smoothing, .. } => format!("PFA-{}", smoothing.label()),
            PolicyConfig::Plf => "PLF".into(),
            PolicyConfig::Scf => "SCF".into(),
            PolicyConfig::Static { .. } => "static".into(),
        }
    }
}
