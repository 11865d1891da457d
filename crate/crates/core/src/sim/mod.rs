//! Deterministic discrete-event simulation of a budget-constrained,
//! multi-user cluster running DAG workflows.

mod arrivals;
mod event;
mod policy;
mod trace;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use arrivals::{arrival_rate, assign_arrivals, poisson_arrivals, poisson_times};
pub use event::{Event, EventKind};
pub use policy::{
    Autoscaler, Decision, Dispatch, PfaPolicy, PlfPolicy, PolicyConfig, PolicyError, ScalarKind, ScfPolicy,
    StaticPolicy, TickView,
};
pub use trace::{read_outcomes, DecisionTiming, EventRecord, IntervalSnapshot, OutcomeRecord, Trace};

use crate::metrics::WorkflowOutcome;
use crate::model::{
    ideal_makespan, momentary_demand, validate_users, validate_workflow, ConfigError, ResourceId, ResourceState,
    StateError, SystemConfig, SystemState, TaskRef, UserConfig, UserId, ValidationError, Workflow, WorkflowId,
    Workload,
};
use crate::pfa::{IntervalCounts, ThroughputHistory};
use crate::plan::{ExecutionPlan, PlanResource};
use crate::scheduler::{place, BoundPlan, PlacementMode};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(#[from] ConfigError),
    #[error("invalid workload: {0}")]
    WorkloadInvalid(#[from] ValidationError),
    #[error("workflow {workflow} belongs to unknown user {user}")]
    UnknownUser { workflow: WorkflowId, user: UserId },
    #[error("workflow id {0} used twice")]
    DuplicateWorkflow(WorkflowId),
    #[error("policy failed: {0}")]
    Policy(#[from] PolicyError),
    #[error("user {user} reserved {cost} in interval {interval}, budget {budget}")]
    BudgetViolated { user: UserId, interval: usize, cost: u64, budget: u64 },
    #[error("policy released resource {0}, which is not an idle resource of the user")]
    BadRelease(ResourceId),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("state invariant broken: {0}")]
    Invariant(String),
    #[error("workload unfinished at {0} s")]
    Stalled(u64),
}

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    /// Abort if the workload has not finished by this instant. Defaults to 30
    /// days past the last arrival.
    pub max_time_s: Option<u64>,
    pub record_events: bool,
    /// Check the full state bookkeeping at every billing boundary.
    pub check_invariants: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { max_time_s: None, record_events: true, check_invariants: false }
    }
}

/// Runs `workload` to completion under `policy`.
pub fn run(
    system: &SystemConfig,
    users: &[UserConfig],
    workload: &Workload,
    policy: &mut dyn Autoscaler,
    seed: u64,
) -> Result<Trace, SimError> {
    run_with(system, users, workload, policy, seed, RunOptions::default())
}

pub fn run_with(
    system: &SystemConfig,
    users: &[UserConfig],
    workload: &Workload,
    policy: &mut dyn Autoscaler,
    seed: u64,
    options: RunOptions,
) -> Result<Trace, SimError> {
    system.validate()?;
    validate_users(users)?;
    let names = system.type_names();
    let known: BTreeSet<UserId> = users.iter().map(|u| u.id).collect();
    let mut ids = BTreeSet::new();
    let mut specs = Vec::with_capacity(workload.workflows.len());
    for spec in &workload.workflows {
        let wf = validate_workflow(spec, &names)?;
        if !known.contains(&wf.user) {
            return Err(SimError::UnknownUser { workflow: wf.id, user: wf.user });
        }
        if !ids.insert(wf.id) {
            return Err(SimError::DuplicateWorkflow(wf.id));
        }
        specs.push(Arc::new(wf));
    }
    Engine::new(system, users, specs, policy, seed, options).run()
}

#[derive(Clone, Debug, Default)]
struct Account {
    busy: u64,
    busy_seconds: u64,
    completed: Vec<u32>,
}

struct Engine<'a> {
    system: &'a SystemConfig,
    users: Vec<UserConfig>,
    costs: Vec<u64>,
    names: Vec<String>,
    specs: Vec<Arc<Workflow>>,
    state: SystemState,
    queue: BinaryHeap<Reverse<Event>>,
    next_id: u64,
    rng: ChaCha8Rng,
    policy: &'a mut dyn Autoscaler,
    dispatch: Dispatch,
    plans: BTreeMap<UserId, BoundPlan>,
    histories: BTreeMap<UserId, ThroughputHistory>,
    accounts: BTreeMap<UserId, Account>,
    last_advance: u64,
    interval: usize,
    open: Vec<usize>,
    arrivals_left: usize,
    wakes: BTreeSet<u64>,
    options: RunOptions,
    deadline: u64,
    trace: Trace,
}

impl<'a> Engine<'a> {
    fn new(
        system: &'a SystemConfig,
        users: &[UserConfig],
        specs: Vec<Arc<Workflow>>,
        policy: &'a mut dyn Autoscaler,
        seed: u64,
        options: RunOptions,
    ) -> Self {
        let types = system.types.len();
        let mut state = SystemState::new(system);
        let mut users = users.to_vec();
        users.sort_by_key(|u| u.id);
        let depth = policy.history_depth();
        let mut histories = BTreeMap::new();
        let mut accounts = BTreeMap::new();
        for u in &users {
            state.register_user(u.id);
            histories.insert(u.id, ThroughputHistory::new(types, depth));
            accounts.insert(u.id, Account { completed: vec![0; types], ..Default::default() });
        }
        let last_arrival = specs.iter().map(|s| s.arrival).max().unwrap_or(0);
        let deadline = options.max_time_s.unwrap_or(last_arrival + 30 * 86_400);
        let dispatch = policy.dispatch();
        let trace = Trace {
            system: system.clone(),
            users: users.clone(),
            policy: policy.name(),
            seed,
            events: Vec::new(),
            snapshots: Vec::new(),
            outcomes: Vec::new(),
            decisions: Vec::new(),
            diagnostics: Vec::new(),
            plans: Vec::new(),
            end_s: 0,
        };
        Engine {
            system,
            users,
            costs: system.costs(),
            names: system.type_names(),
            arrivals_left: specs.len(),
            specs,
            state,
            queue: BinaryHeap::new(),
            next_id: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            policy,
            dispatch,
            plans: BTreeMap::new(),
            histories,
            accounts,
            last_advance: 0,
            interval: 0,
            open: Vec::new(),
            wakes: BTreeSet::new(),
            options,
            deadline,
            trace,
        }
    }

    fn schedule(&mut self, time: u64, kind: EventKind) {
        debug_assert!(time >= self.state.clock, "event in the past");
        self.queue.push(Reverse(Event { time, kind, id: self.next_id }));
        self.next_id += 1;
    }

    fn record(
        &mut self,
        event: &str,
        user: Option<UserId>,
        task: Option<TaskRef>,
        resource: Option<ResourceId>,
        detail: String,
    ) {
        if !self.options.record_events {
            return;
        }
        let (workflow, task_id) = match task {
            Some(t) => {
                let spec = &self.state.workflows[t.wf].spec;
                (Some(spec.id), Some(spec.task_ids[t.task]))
            }
            None => (None, None),
        };
        let rtype = resource.map(|r| self.names[self.state.resource(r).rtype.0].clone());
        self.trace.events.push(EventRecord {
            time_s: self.state.clock,
            event: event.to_string(),
            user,
            workflow,
            task: task_id,
            resource,
            rtype,
            detail,
        });
    }

    fn run(mut self) -> Result<Trace, SimError> {
        let arrivals: Vec<(usize, u64)> = self.specs.iter().map(|s| s.arrival).enumerate().collect();
        for (i, t) in arrivals {
            self.schedule(t, EventKind::Arrival(i));
        }
        self.schedule(0, EventKind::AutoscaleTick);
        while let Some(Reverse(ev)) = self.queue.pop() {
            if ev.time > self.deadline {
                return Err(SimError::Stalled(self.deadline));
            }
            self.advance(ev.time);
            self.state.clock = ev.time;
            match ev.kind {
                EventKind::TaskFinish(rid) => self.on_finish(rid)?,
                EventKind::BootComplete(rid) => {
                    self.state.finish_boot(rid)?;
                    let user = self.state.resource(rid).reserved_user;
                    self.record("boot", user, None, Some(rid), String::new());
                }
                EventKind::Arrival(i) => {
                    let spec = Arc::clone(&self.specs[i]);
                    let user = spec.user;
                    let slot = self.state.arrive(spec);
                    self.arrivals_left -= 1;
                    let entry = self.state.workflows[slot].spec.entry;
                    self.record("arrival", Some(user), Some(TaskRef { wf: slot, task: entry }), None, String::new());
                }
                EventKind::AutoscaleTick => {
                    if self.on_tick()? {
                        break;
                    }
                }
                EventKind::BillingBoundary => self.on_billing()?,
                EventKind::PlanWake => {
                    self.wakes.remove(&ev.time);
                }
            }
            self.dispatch_all()?;
        }
        self.trace.end_s = self.state.clock;
        Ok(self.trace)
    }

    fn advance(&mut self, t: u64) {
        let dt = t - self.last_advance;
        if dt > 0 {
            for acc in self.accounts.values_mut() {
                acc.busy_seconds += acc.busy * dt;
            }
        }
        self.last_advance = t;
    }

    fn on_finish(&mut self, rid: ResourceId) -> Result<(), SimError> {
        let (t, _) = self.state.finish_task(rid)?;
        let user = self.state.task_user(t);
        let rtype = self.state.resource(rid).rtype.0;
        let acc = self.accounts.get_mut(&user).expect("registered user");
        acc.busy -= 1;
        acc.completed[rtype] += 1;
        self.record("finish", Some(user), Some(t), Some(rid), String::new());
        let run = &self.state.workflows[t.wf];
        if run.is_finished() {
            let outcome = WorkflowOutcome {
                arrival: run.spec.arrival,
                first_start: run.first_start.expect("started"),
                last_finish: run.last_finish.expect("finished"),
                ideal_makespan: ideal_makespan(&run.spec),
            };
            let workflow = run.spec.id;
            self.trace.outcomes.push(OutcomeRecord { user, workflow, outcome });
            self.record("workflow_done", Some(user), None, None, workflow.to_string());
        }
        Ok(())
    }

    /// Closes the current interval; returns true once the run is over.
    fn on_tick(&mut self) -> Result<bool, SimError> {
        self.close_interval();
        let now = self.state.clock;
        self.record("tick", None, None, None, String::new());
        if self.arrivals_left == 0 && !self.state.has_active_work() {
            return Ok(true);
        }
        let mut order: Vec<UserConfig> = self.users.clone();
        order.shuffle(&mut self.rng);
        for u in order {
            let seed = self.rng.next_u64();
            let history = &self.histories[&u.id];
            let view = TickView {
                tick: self.interval,
                now,
                system: self.system,
                state: &self.state,
                user: u.id,
                budget: u.budget,
                history,
                seed,
            };
            let start = Instant::now();
            let decision = self.policy.decide(&view)?;
            let total: Duration = start.elapsed();
            self.trace.decisions.push(DecisionTiming {
                tick: self.interval,
                time_s: now,
                user: u.id,
                total,
                steps: decision.steps.0.clone(),
            });
            self.apply(u, decision)?;
        }
        self.schedule(now, EventKind::BillingBoundary);
        self.schedule(now + self.system.interval_s, EventKind::AutoscaleTick);
        Ok(false)
    }

    fn apply(&mut self, user: UserConfig, decision: Decision) -> Result<(), SimError> {
        let now = self.state.clock;
        for &rid in &decision.deallocate {
            let r = self.state.resource(rid);
            if r.state != ResourceState::Idle || r.reserved_user != Some(user.id) {
                return Err(SimError::BadRelease(rid));
            }
            self.state.release(rid)?;
            self.record("release", Some(user.id), None, Some(rid), String::new());
        }

        let types = self.costs.len();
        let mut down: Vec<Vec<ResourceId>> = vec![Vec::new(); types];
        for r in self.state.resources.iter().rev() {
            if r.state == ResourceState::Down {
                down[r.rtype.0].push(r.id);
            }
        }
        let mut order: Vec<usize> = (0..types).collect();
        order.sort_by_key(|&i| (self.costs[i], i));
        let mut spend = self.state.reserved_cost(user.id, &self.costs);
        let mut want = decision.allocate.clone();
        want.resize(types, 0);
        let mut fresh: Vec<Vec<ResourceId>> = vec![Vec::new(); types];
        loop {
            let mut progressed = false;
            for &ty in &order {
                if want[ty] == 0 || spend + self.costs[ty] > user.budget {
                    continue;
                }
                let Some(rid) = down[ty].pop() else { continue };
                want[ty] -= 1;
                spend += self.costs[ty];
                self.state.allocate(rid, user.id, self.system.boot_delay_s, now + self.system.interval_s)?;
                self.schedule(now + self.system.boot_delay_s, EventKind::BootComplete(rid));
                self.record("allocate", Some(user.id), None, Some(rid), String::new());
                fresh[ty].push(rid);
                progressed = true;
            }
            if !progressed {
                break;
            }
        }

        if let Some(plan) = decision.plan {
            let bound = self.bind(user.id, &plan, &fresh);
            for t in bound.wake_times(now) {
                if self.wakes.insert(t) {
                    self.schedule(t, EventKind::PlanWake);
                }
            }
            if self.options.record_events {
                let mut concrete = ExecutionPlan::default();
                for (rid, entries) in &bound.queues {
                    for e in entries {
                        concrete.push(PlanResource::Existing(*rid), *e);
                    }
                }
                self.trace.plans.extend(concrete.dump(now, &self.state));
            }
            self.plans.insert(user.id, bound);
        }
        if let Some(d) = decision.diagnostic {
            self.trace.diagnostics.push(d);
        }
        Ok(())
    }

    /// Maps plan resources onto reserved machines and drops entries that can
    /// no longer run.
    fn bind(&self, user: UserId, plan: &ExecutionPlan, fresh: &[Vec<ResourceId>]) -> BoundPlan {
        let mut bound = BoundPlan::default();
        for (res, entries) in &plan.timelines {
            let rid = match *res {
                PlanResource::Existing(id) => Some(id).filter(|&id| self.state.resource(id).is_reserved_by(user)),
                PlanResource::New { rtype, ordinal } => fresh.get(rtype).and_then(|v| v.get(ordinal)).copied(),
            };
            let Some(rid) = rid else { continue };
            let runnable: Vec<_> = entries
                .iter()
                .filter(|e| {
                    matches!(
                        self.state.status(e.task),
                        crate::model::TaskStatus::Pending | crate::model::TaskStatus::Eligible
                    )
                })
                .copied()
                .collect();
            if !runnable.is_empty() {
                bound.queues.insert(rid, runnable);
            }
        }
        bound
    }

    fn on_billing(&mut self) -> Result<(), SimError> {
        let now = self.state.clock;
        let types = self.costs.len();
        for r in self.state.resources.iter_mut().filter(|r| r.is_reserved()) {
            r.billing_end = now + self.system.interval_s;
        }
        for u in self.users.clone() {
            let reserved = self.state.allocated_counts(u.id, types);
            let cost: u64 = reserved.iter().zip(&self.costs).map(|(&n, &q)| u64::from(n) * q).sum();
            if cost > u.budget {
                return Err(SimError::BudgetViolated { user: u.id, interval: self.interval, cost, budget: u.budget });
            }
            for (ty, &n) in reserved.iter().enumerate() {
                if n > self.system.types[ty].count {
                    return Err(SimError::Invariant(format!("type {ty} over capacity")));
                }
            }
            self.open.push(self.trace.snapshots.len());
            self.trace.snapshots.push(IntervalSnapshot {
                interval: self.interval,
                start_s: now,
                user: u.id,
                demand: momentary_demand(&self.state, u.id) as u32,
                supply: reserved.iter().sum(),
                reserved,
                cost,
                busy_seconds: 0,
                completed: vec![0; types],
            });
        }
        self.record("billing", None, None, None, self.interval.to_string());
        if self.options.check_invariants {
            self.state.check_invariants().map_err(SimError::Invariant)?;
        }
        Ok(())
    }

    fn close_interval(&mut self) {
        if self.open.is_empty() {
            return;
        }
        for idx in std::mem::take(&mut self.open) {
            let snap = &mut self.trace.snapshots[idx];
            let acc = self.accounts.get_mut(&snap.user).expect("registered user");
            snap.busy_seconds = std::mem::take(&mut acc.busy_seconds);
            snap.completed = std::mem::replace(&mut acc.completed, vec![0; snap.reserved.len()]);
            self.histories
                .get_mut(&snap.user)
                .expect("registered user")
                .push(IntervalCounts { completed: snap.completed.clone(), allocated: snap.reserved.clone() });
        }
        self.interval += 1;
    }

    fn dispatch_all(&mut self) -> Result<(), SimError> {
        let empty = BoundPlan::default();
        for u in 0..self.users.len() {
            let user = self.users[u].id;
            let assignments = {
                let mode = match self.dispatch {
                    Dispatch::Dynamic => PlacementMode::Dynamic,
                    Dispatch::FollowPlan => PlacementMode::FollowPlan(self.plans.get(&user).unwrap_or(&empty)),
                };
                place(&self.state, user, mode)
            };
            for (t, rid) in assignments {
                self.state.start_task(t, rid)?;
                let rtype = self.state.resource(rid).rtype;
                let end = self.state.clock + self.state.runtime(t, rtype);
                self.schedule(end, EventKind::TaskFinish(rid));
                self.accounts.get_mut(&user).expect("registered user").busy += 1;
                if let Some(plan) = self.plans.get_mut(&user) {
                    plan.remove_task(rid, t);
                }
                self.record("start", Some(user), Some(t), Some(rid), String::new());
            }
        }
        Ok(())
    }
}
