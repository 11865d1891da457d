use std::collections::HashMap;

use super::{ExecutionPlan, PlanEntry, PlanResource, RuntimeOracle};
use crate::model::{ResourceId, ResourceState, SystemState, TaskRef, TaskStatus};

#[derive(Clone, Debug)]
struct Slot {
    key: PlanResource,
    rtype: usize,
    free_at: u64,
}

/// Greedy list scheduler over a set of resource timelines, cut at `horizon`.
pub struct Planner<'a> {
    state: &'a SystemState,
    oracle: RuntimeOracle<'a>,
    now: u64,
    horizon: u64,
    slots: Vec<Slot>,
    finish: HashMap<TaskRef, u64>,
    plan: ExecutionPlan,
}

impl<'a> Planner<'a> {
    pub fn new(state: &'a SystemState, oracle: RuntimeOracle<'a>, now: u64, horizon: u64) -> Self {
        Planner {
            state,
            oracle,
            now,
            horizon,
            slots: Vec::new(),
            finish: HashMap::new(),
            plan: ExecutionPlan::default(),
        }
    }

    fn add_slot(&mut self, key: PlanResource, rtype: usize, free_at: u64) -> usize {
        self.slots.push(Slot { key, rtype, free_at: free_at.max(self.now) });
        self.slots.len() - 1
    }

    fn record(&mut self, slot: usize, task: TaskRef, start: u64, end: u64) {
        let key = self.slots[slot].key;
        self.plan.push(key, PlanEntry { task, start, end });
        self.slots[slot].free_at = end.max(self.now);
        self.finish.insert(task, end);
    }

    /// Adds a reserved resource. A busy one is seeded with its running task.
    pub fn add_reserved(&mut self, rid: ResourceId) {
        let r = self.state.resource(rid);
        let key = PlanResource::Existing(rid);
        match r.state {
            ResourceState::Idle => {
                self.add_slot(key, r.rtype.0, self.now);
            }
            ResourceState::Booting => {
                self.add_slot(key, r.rtype.0, r.boot_complete);
            }
            ResourceState::Busy => {
                let slot = self.add_slot(key, r.rtype.0, self.now);
                let task = r.running_task.expect("busy resource runs a task");
                self.pin_running(slot, task);
            }
            ResourceState::Down => {}
        }
    }

    fn pin_running(&mut self, slot: usize, task: TaskRef) {
        if let TaskStatus::Running { start, .. } = self.state.status(task) {
            let end = start + self.oracle.runtime(task, self.slots[slot].rtype);
            self.record(slot, task, start, end);
        }
    }

    /// Pins a running task on its own resource, adding that resource.
    pub fn add_running(&mut self, task: TaskRef) {
        if let TaskStatus::Running { resource, .. } = self.state.status(task) {
            let rtype = self.state.resource(resource).rtype.0;
            let slot = self.add_slot(PlanResource::Existing(resource), rtype, self.now);
            self.pin_running(slot, task);
        }
    }

    /// Adds a resource that becomes usable at `ready_at`.
    pub fn add_new(&mut self, rtype: usize, ordinal: usize, ready_at: u64) {
        self.add_slot(PlanResource::New { rtype, ordinal }, rtype, ready_at);
    }

    pub fn is_planned(&self, t: TaskRef) -> bool {
        self.finish.contains_key(&t)
    }

    /// Earliest instant all parents of `t` are done, if they all are finished
    /// or planned.
    pub fn ready_time(&self, t: TaskRef) -> Option<u64> {
        let run = &self.state.workflows[t.wf];
        let mut ready = self.now;
        for &p in &run.spec.parents[t.task] {
            let end = match run.status[p] {
                TaskStatus::Finished { end, .. } => end,
                _ => *self.finish.get(&TaskRef { wf: t.wf, task: p })?,
            };
            ready = ready.max(end);
        }
        Some(ready)
    }

    fn best(&self, ready: u64, rtype: Option<usize>) -> Option<(usize, u64)> {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| rtype.is_none_or(|r| s.rtype == r))
            .map(|(i, s)| (i, s.free_at.max(ready)))
            .min_by_key(|&(i, start)| (start, self.slots[i].key))
    }

    fn commit(&mut self, t: TaskRef, slot: usize, start: u64) -> bool {
        if start >= self.horizon {
            return false;
        }
        let end = start + self.oracle.runtime(t, self.slots[slot].rtype);
        self.record(slot, t, start, end);
        true
    }

    /// Places `t` on the resource of `rtype` available first.
    pub fn place_typed(&mut self, t: TaskRef, rtype: usize) -> bool {
        let Some(ready) = self.ready_time(t) else { return false };
        match self.best(ready, Some(rtype)) {
            Some((slot, start)) => self.commit(t, slot, start),
            None => false,
        }
    }

    /// Places `t` on the resource giving the earliest start.
    pub fn place_any(&mut self, t: TaskRef) -> bool {
        let Some(ready) = self.ready_time(t) else { return false };
        match self.best(ready, None) {
            Some((slot, start)) => self.commit(t, slot, start),
            None => false,
        }
    }

    /// Places `t` on its fastest type, adding a fresh resource (usable from
    /// `fresh_ready`) when that starts it earlier.
    pub fn place_fastest_growing(&mut self, t: TaskRef, fresh_ready: u64) -> bool {
        let Some(ready) = self.ready_time(t) else { return false };
        let rtype = self.oracle.fastest(t);
        let fresh_start = ready.max(fresh_ready).max(self.now);
        let slot = match self.best(ready, Some(rtype)) {
            Some((slot, start)) if start <= fresh_start => (slot, start),
            _ => {
                let ordinal = self.slots.iter().filter(|s| matches!(s.key, PlanResource::New { .. })).count();
                (self.add_slot(PlanResource::New { rtype, ordinal }, rtype, fresh_ready), fresh_start)
            }
        };
        self.commit(t, slot.0, slot.1)
    }

    /// Plans the unfinished, unplanned tasks of workflow slot `wf` in
    /// topological order with `place`.
    pub fn place_workflow(&mut self, wf: usize, mut place: impl FnMut(&mut Self, TaskRef) -> bool) {
        let run = &self.state.workflows[wf];
        for &task in &run.spec.topo_order {
            let t = TaskRef { wf, task };
            if matches!(run.status[task], TaskStatus::Pending | TaskStatus::Eligible) && !self.is_planned(t) {
                place(self, t);
            }
        }
    }

    /// Planned busy seconds from now on per type.
    pub fn remaining_work(&self, types: usize) -> Vec<u64> {
        let mut work = vec![0; types];
        for s in &self.slots {
            if let Some(timeline) = self.plan.timelines.get(&s.key) {
                work[s.rtype] += timeline.iter().map(|e| e.end.saturating_sub(e.start.max(self.now))).sum::<u64>();
            }
        }
        work
    }

    pub fn plan(&self) -> &ExecutionPlan {
        &self.plan
    }

    pub fn into_plan(self) -> ExecutionPlan {
        self.plan
    }
}
