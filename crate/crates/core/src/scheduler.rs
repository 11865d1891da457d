//! Task placement onto idle reserved resources.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{ResourceId, SystemState, TaskRef, TaskStatus, UserId};
use crate::plan::PlanEntry;

/// A plan bound to concrete resources: per resource, entries by planned start.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BoundPlan {
    pub queues: BTreeMap<ResourceId, Vec<PlanEntry>>,
}

impl BoundPlan {
    pub fn len(&self) -> usize {
        self.queues.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops the entry of a task once it started.
    pub fn remove_task(&mut self, resource: ResourceId, task: TaskRef) {
        if let Some(q) = self.queues.get_mut(&resource) {
            q.retain(|e| e.task != task);
        }
    }

    /// Planned starts later than `now`.
    pub fn wake_times(&self, now: u64) -> BTreeSet<u64> {
        self.queues.values().flatten().map(|e| e.start).filter(|&s| s > now).collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub enum PlacementMode<'a> {
    /// Any eligible task onto any idle resource of its user.
    Dynamic,
    FollowPlan(&'a BoundPlan),
}

/// Assignments for the idle resources of `user`. In dynamic mode
/// eligible tasks are taken by (priority, arrival, topological index) and
/// resources by id. In plan mode a resource only runs its own planned tasks,
/// never before their planned start.
pub fn place(state: &SystemState, user: UserId, mode: PlacementMode<'_>) -> Vec<(TaskRef, ResourceId)> {
    if !state.has_idle(user) {
        return Vec::new();
    }
    match mode {
        PlacementMode::Dynamic => state.eligible_iter(user).zip(state.idle_resources(user)).collect(),
        PlacementMode::FollowPlan(plan) => {
            let now = state.clock;
            let mut out = Vec::new();
            for rid in state.idle_resources(user) {
                let Some(queue) = plan.queues.get(&rid) else { continue };
                let next = queue
                    .iter()
                    .take_while(|e| e.start <= now)
                    .find(|e| state.status(e.task) == TaskStatus::Eligible && state.task_user(e.task) == user);
                if let Some(e) = next {
                    out.push((e.task, rid));
                }
            }
            out
        }
    }
}
