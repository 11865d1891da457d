//! Plan-based autoscalers: Planning First and Scaling First.

mod planner;
mod plf;
mod scf;

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub use planner::Planner;
pub use plf::{plf_consolidate_budget, plf_decide, plf_distribute_budget, plf_initial_supply, InitialSupply};
pub use scf::{scf_decide, scf_scale_supply, scf_unconstrained_plans};

use crate::model::{ResourceId, ResourceState, SystemConfig, SystemState, TaskRef, TypeIdx, UserId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("reserved cost {reserved} exceeds budget {budget}")]
    OverCommitted { budget: u64, reserved: u64 },
}

/// Perfect runtime estimates read from the workload.
#[derive(Clone, Copy)]
pub struct RuntimeOracle<'a> {
    state: &'a SystemState,
    costs: &'a [u64],
}

impl<'a> RuntimeOracle<'a> {
    pub fn new(state: &'a SystemState, costs: &'a [u64]) -> Self {
        RuntimeOracle { state, costs }
    }

    pub fn runtime(&self, t: TaskRef, rtype: usize) -> u64 {
        self.state.runtime(t, TypeIdx(rtype))
    }

    /// Type finishing `t` soonest; ties go to the cheaper, then lower, type.
    pub fn fastest(&self, t: TaskRef) -> usize {
        (0..self.costs.len()).min_by_key(|&i| (self.runtime(t, i), self.costs[i], i)).expect("at least one type")
    }

    pub fn cost(&self, rtype: usize) -> u64 {
        self.costs[rtype]
    }
}

/// A resource in a plan: already reserved, or the `ordinal`-th new
/// allocation of `rtype` made by the same decision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PlanResource {
    Existing(ResourceId),
    New { rtype: usize, ordinal: usize },
}

impl fmt::Display for PlanResource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanResource::Existing(id) => write!(f, "{id}"),
            PlanResource::New { rtype, ordinal } => write!(f, "new{rtype}.{ordinal}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlanEntry {
    pub task: TaskRef,
    pub start: u64,
    pub end: u64,
}

/// Per-resource timelines, each ordered by start.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExecutionPlan {
    pub timelines: BTreeMap<PlanResource, Vec<PlanEntry>>,
}

impl ExecutionPlan {
    pub fn push(&mut self, resource: PlanResource, entry: PlanEntry) {
        self.timelines.entry(resource).or_default().push(entry);
    }

    pub fn has_entries(&self, resource: PlanResource) -> bool {
        self.timelines.get(&resource).is_some_and(|v| !v.is_empty())
    }

    pub fn len(&self) -> usize {
        self.timelines.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entries(&self) -> impl Iterator<Item = (PlanResource, &PlanEntry)> + '_ {
        self.timelines.iter().flat_map(|(r, v)| v.iter().map(move |e| (*r, e)))
    }

    /// Checks non-overlap per resource and precedence between planned tasks.
    pub fn validate(&self, state: &SystemState) -> Result<(), String> {
        let mut ends = BTreeMap::new();
        for (r, timeline) in &self.timelines {
            for w in timeline.windows(2) {
                if w[1].start < w[0].end {
                    return Err(format!("overlap on {r}: {:?} and {:?}", w[0], w[1]));
                }
            }
            for e in timeline {
                if ends.insert(e.task, e.end).is_some() {
                    return Err(format!("task {:?} planned twice", e.task));
                }
            }
        }
        for (_, e) in self.entries() {
            let spec = &state.workflows[e.task.wf].spec;
            for &p in &spec.parents[e.task.task] {
                if let Some(&pe) = ends.get(&TaskRef { wf: e.task.wf, task: p }) {
                    if e.start < pe {
                        return Err(format!("{:?} starts before parent {p} ends", e.task));
                    }
                }
            }
        }
        Ok(())
    }
}

/// One line of the plan dump.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PlanDumpLine {
    pub t: u64,
    pub resource: String,
    pub task: String,
    pub start: u64,
    pub end: u64,
}

impl ExecutionPlan {
    pub fn dump(&self, t: u64, state: &SystemState) -> Vec<PlanDumpLine> {
        self.entries()
            .map(|(r, e)| {
                let spec = &state.workflows[e.task.wf].spec;
                PlanDumpLine {
                    t,
                    resource: r.to_string(),
                    task: format!("{}:{}", spec.id, spec.task_ids[e.task.task]),
                    start: e.start,
                    end: e.end,
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PlanDecision {
    /// New instances to reserve per type.
    pub allocate: Vec<u64>,
    pub plan: ExecutionPlan,
    pub deallocate: Vec<ResourceId>,
}

/// Inputs shared by both plan-based policies for one user at one tick.
#[derive(Clone, Copy, Debug)]
pub struct PlanContext<'a> {
    pub now: u64,
    pub system: &'a SystemConfig,
    pub user: UserId,
    pub budget: u64,
    /// Seed for the random workflow order.
    pub seed: u64,
}

impl PlanContext<'_> {
    pub fn horizon(&self) -> u64 {
        self.now + self.system.interval_s
    }
}

/// Idle resources of `user` without planned work. Billing periods coincide
/// with ticks, so each of them is at the end of its period.
pub fn release_unplanned(state: &SystemState, user: UserId, plan: &ExecutionPlan) -> Vec<ResourceId> {
    state
        .idle_resources(user)
        .filter(|&id| {
            debug_assert_eq!(state.resource(id).state, ResourceState::Idle);
            !plan.has_entries(PlanResource::Existing(id))
        })
        .collect()
}

/// New allocations bringing each type up to `targets`, limited by free machines.
pub fn allocation_delta(state: &SystemState, user: UserId, targets: &[u64], types: usize) -> Vec<u64> {
    let have = state.allocated_counts(user, types);
    let free = state.free_counts(types);
    targets
        .iter()
        .zip(have.iter().zip(&free))
        .map(|(&want, (&h, &f))| want.saturating_sub(u64::from(h)).min(u64::from(f)))
        .collect()
}
