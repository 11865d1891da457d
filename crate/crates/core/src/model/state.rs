use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use super::{
    Resource, ResourceId, ResourceState, SystemConfig, TransitionError, TypeIdx, UserId, Workflow, WorkflowId,
};

/// A task of an arrived workflow: `wf` indexes [`SystemState::workflows`],
/// `task` indexes the workflow's task table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaskRef {
    pub wf: usize,
    pub task: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskStatus {
    Pending,
    Eligible,
    Running { resource: ResourceId, start: u64 },
    Finished { resource: ResourceId, start: u64, end: u64 },
}

impl TaskStatus {
    pub fn is_finished(&self) -> bool {
        matches!(self, TaskStatus::Finished { .. })
    }
}

/// Execution record of one arrived workflow.
#[derive(Clone, Debug)]
pub struct WorkflowRun {
    pub spec: Arc<Workflow>,
    pub status: Vec<TaskStatus>,
    waiting_parents: Vec<u32>,
    pub first_start: Option<u64>,
    pub last_finish: Option<u64>,
    pub finished_tasks: usize,
}

impl WorkflowRun {
    pub fn is_finished(&self) -> bool {
        self.finished_tasks == self.spec.len()
    }
}

/// Dispatch order: higher priority first, then earlier arrival, then the
/// task's topological position.
type EligibleKey = (Reverse<u8>, u64, WorkflowId, usize, TaskRef);

#[derive(Clone, Debug, Default)]
struct UserView {
    active: BTreeSet<usize>,
    eligible: BTreeSet<EligibleKey>,
    running: usize,
    idle: BTreeSet<ResourceId>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StateError {
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error("task {0:?} is not eligible")]
    NotEligible(TaskRef),
    #[error("resource {0} is not reserved for the task's owner")]
    WrongUser(ResourceId),
    #[error("resource {0} has no running task")]
    NothingRunning(ResourceId),
}

/// Mutable state of a single simulation run.
#[derive(Clone, Debug)]
pub struct SystemState {
    pub clock: u64,
    pub resources: Vec<Resource>,
    pub workflows: Vec<WorkflowRun>,
    users: BTreeMap<UserId, UserView>,
}

impl SystemState {
    /// One `Down` resource per configured machine, ids assigned type by type.
    pub fn new(config: &SystemConfig) -> Self {
        let mut resources = Vec::new();
        for (t, ty) in config.types.iter().enumerate() {
            for _ in 0..ty.count {
                let id = ResourceId(resources.len() as u32);
                resources.push(Resource::new(id, TypeIdx(t)));
            }
        }
        SystemState { clock: 0, resources, workflows: Vec::new(), users: BTreeMap::new() }
    }

    pub fn register_user(&mut self, user: UserId) {
        self.users.entry(user).or_default();
    }

    pub fn users(&self) -> impl Iterator<Item = UserId> + '_ {
        self.users.keys().copied()
    }

    fn view(&mut self, user: UserId) -> &mut UserView {
        self.users.entry(user).or_default()
    }

    fn key(&self, t: TaskRef) -> EligibleKey {
        let wf = &self.workflows[t.wf].spec;
        (Reverse(wf.priority), wf.arrival, wf.id, wf.topo_index[t.task], t)
    }

    pub fn task_user(&self, t: TaskRef) -> UserId {
        self.workflows[t.wf].spec.user
    }

    pub fn status(&self, t: TaskRef) -> TaskStatus {
        self.workflows[t.wf].status[t.task]
    }

    pub fn runtime(&self, t: TaskRef, rtype: TypeIdx) -> u64 {
        self.workflows[t.wf].spec.runtimes[t.task][rtype.0]
    }

    pub fn resource(&self, id: ResourceId) -> &Resource {
        &self.resources[id.0 as usize]
    }

    /// Admits an arrived workflow; its entry task becomes eligible.
    pub fn arrive(&mut self, spec: Arc<Workflow>) -> usize {
        let slot = self.workflows.len();
        let user = spec.user;
        let waiting_parents: Vec<u32> = spec.parents.iter().map(|p| p.len() as u32).collect();
        let mut status = vec![TaskStatus::Pending; spec.len()];
        status[spec.entry] = TaskStatus::Eligible;
        let entry = spec.entry;
        self.workflows.push(WorkflowRun {
            spec,
            status,
            waiting_parents,
            first_start: None,
            last_finish: None,
            finished_tasks: 0,
        });
        let key = self.key(TaskRef { wf: slot, task: entry });
        let view = self.view(user);
        view.active.insert(slot);
        view.eligible.insert(key);
        slot
    }

    pub fn start_task(&mut self, t: TaskRef, rid: ResourceId) -> Result<(), StateError> {
        if self.status(t) != TaskStatus::Eligible {
            return Err(StateError::NotEligible(t));
        }
        let user = self.task_user(t);
        if !self.resource(rid).is_reserved_by(user) {
            return Err(StateError::WrongUser(rid));
        }
        self.resources[rid.0 as usize].start(t)?;
        let now = self.clock;
        let key = self.key(t);
        let run = &mut self.workflows[t.wf];
        run.status[t.task] = TaskStatus::Running { resource: rid, start: now };
        run.first_start.get_or_insert(now);
        let view = self.view(user);
        view.eligible.remove(&key);
        view.idle.remove(&rid);
        view.running += 1;
        Ok(())
    }

    /// Completes the task running on `rid`; returns it together with the
    /// children that became eligible.
    pub fn finish_task(&mut self, rid: ResourceId) -> Result<(TaskRef, Vec<TaskRef>), StateError> {
        let now = self.clock;
        let t = self.resources[rid.0 as usize].running_task.ok_or(StateError::NothingRunning(rid))?;
        self.resources[rid.0 as usize].finish(now)?;
        let user = self.task_user(t);
        let run = &mut self.workflows[t.wf];
        let start = match run.status[t.task] {
            TaskStatus::Running { start, .. } => start,
            _ => return Err(StateError::NothingRunning(rid)),
        };
        run.status[t.task] = TaskStatus::Finished { resource: rid, start, end: now };
        run.finished_tasks += 1;
        run.last_finish = Some(now);
        let mut unlocked = Vec::new();
        let spec = Arc::clone(&run.spec);
        for &c in &spec.children[t.task] {
            run.waiting_parents[c] -= 1;
            if run.waiting_parents[c] == 0 {
                run.status[c] = TaskStatus::Eligible;
                unlocked.push(TaskRef { wf: t.wf, task: c });
            }
        }
        let done = run.is_finished();
        let keys: Vec<EligibleKey> = unlocked.iter().map(|&u| self.key(u)).collect();
        let view = self.view(user);
        view.running -= 1;
        view.idle.insert(rid);
        view.eligible.extend(keys);
        if done {
            view.active.remove(&t.wf);
        }
        Ok((t, unlocked))
    }

    pub fn allocate(
        &mut self,
        rid: ResourceId,
        user: UserId,
        boot_delay: u64,
        billing_end: u64,
    ) -> Result<(), StateError> {
        let now = self.clock;
        self.resources[rid.0 as usize].allocate(user, now, boot_delay, billing_end)?;
        self.view(user);
        Ok(())
    }

    pub fn finish_boot(&mut self, rid: ResourceId) -> Result<(), StateError> {
        let now = self.clock;
        let r = &mut self.resources[rid.0 as usize];
        r.finish_boot(now)?;
        let user = r.reserved_user.expect("booting resource is reserved");
        self.view(user).idle.insert(rid);
        Ok(())
    }

    pub fn release(&mut self, rid: ResourceId) -> Result<(), StateError> {
        let r = &mut self.resources[rid.0 as usize];
        let user = r.reserved_user;
        r.release()?;
        if let Some(u) = user {
            self.view(u).idle.remove(&rid);
        }
        Ok(())
    }

    /// Eligible, unstarted tasks of `user` in dispatch order.
    pub fn eligible_iter(&self, user: UserId) -> impl Iterator<Item = TaskRef> + '_ {
        self.users.get(&user).into_iter().flat_map(|v| v.eligible.iter().map(|k| k.4))
    }

    pub fn eligible_count(&self, user: UserId) -> usize {
        self.users.get(&user).map_or(0, |v| v.eligible.len())
    }

    pub fn running_count(&self, user: UserId) -> usize {
        self.users.get(&user).map_or(0, |v| v.running)
    }

    /// Idle resources reserved for `user`, lowest id first.
    pub fn idle_resources(&self, user: UserId) -> impl Iterator<Item = ResourceId> + '_ {
        self.users.get(&user).into_iter().flat_map(|v| v.idle.iter().copied())
    }

    pub fn has_idle(&self, user: UserId) -> bool {
        self.users.get(&user).is_some_and(|v| !v.idle.is_empty())
    }

    /// Arrived, unfinished workflows of `user` by slot.
    pub fn active_workflows(&self, user: UserId) -> impl Iterator<Item = usize> + '_ {
        self.users.get(&user).into_iter().flat_map(|v| v.active.iter().copied())
    }

    pub fn has_active_work(&self) -> bool {
        self.users.values().any(|v| !v.active.is_empty())
    }

    /// Resources reserved for `user`.
    pub fn reserved_by(&self, user: UserId) -> impl Iterator<Item = &Resource> + '_ {
        self.resources.iter().filter(move |r| r.is_reserved_by(user))
    }

    /// Reserved resources of `user` per type.
    pub fn allocated_counts(&self, user: UserId, types: usize) -> Vec<u32> {
        let mut counts = vec![0; types];
        for r in self.reserved_by(user) {
            counts[r.rtype.0] += 1;
        }
        counts
    }

    pub fn reserved_cost(&self, user: UserId, costs: &[u64]) -> u64 {
        self.reserved_by(user).map(|r| costs[r.rtype.0]).sum()
    }

    /// Down resources per type.
    pub fn free_counts(&self, types: usize) -> Vec<u32> {
        let mut counts = vec![0; types];
        for r in self.resources.iter().filter(|r| r.state == ResourceState::Down) {
            counts[r.rtype.0] += 1;
        }
        counts
    }

    /// Checks the task partition and resource bookkeeping; used by tests and
    /// debug assertions.
    pub fn check_invariants(&self) -> Result<(), String> {
        for r in &self.resources {
            let running_ok = (r.state == ResourceState::Busy) == r.running_task.is_some();
            let reserved_ok = (r.state == ResourceState::Down) == r.reserved_user.is_none();
            if !running_ok || !reserved_ok {
                return Err(format!("resource {} inconsistent: {:?}", r.id, r));
            }
        }
        for (user, view) in &self.users {
            let mut eligible = 0;
            let mut running = 0;
            for (slot, run) in self.workflows.iter().enumerate() {
                if run.spec.user != *user {
                    continue;
                }
                if run.is_finished() == view.active.contains(&slot) {
                    return Err(format!("workflow slot {slot} active flag wrong"));
                }
                for (task, st) in run.status.iter().enumerate() {
                    let tr = TaskRef { wf: slot, task };
                    let parents_done = run.spec.parents[task].iter().all(|&p| run.status[p].is_finished());
                    match st {
                        TaskStatus::Pending if parents_done => return Err(format!("{tr:?} pending but unlocked")),
                        TaskStatus::Eligible if !parents_done => return Err(format!("{tr:?} eligible too early")),
                        TaskStatus::Eligible => {
                            eligible += 1;
                            if !view.eligible.contains(&self.key(tr)) {
                                return Err(format!("{tr:?} missing from eligible set"));
                            }
                        }
                        TaskStatus::Running { resource, .. } => {
                            running += 1;
                            if self.resource(*resource).running_task != Some(tr) {
                                return Err(format!("{tr:?} not on its resource"));
                            }
                        }
                        _ => {}
                    }
                }
            }
            if eligible != view.eligible.len() || running != view.running {
                return Err(format!("user {user} counters out of sync"));
            }
            for rid in &view.idle {
                let r = self.resource(*rid);
                if r.state != ResourceState::Idle || r.reserved_user != Some(*user) {
                    return Err(format!("idle set of user {user} holds {rid}"));
                }
            }
        }
        Ok(())
    }
}

/// Eligible tasks of `user` ordered by (priority desc, arrival asc,
/// topological index asc).
pub fn eligible_tasks(state: &SystemState, user: UserId) -> Vec<TaskRef> {
    state.eligible_iter(user).collect()
}

/// Running plus eligible tasks of `user`.
pub fn momentary_demand(state: &SystemState, user: UserId) -> usize {
    state.running_count(user) + state.eligible_count(user)
}

/// Precedence graph over a set of tasks. `parent_count[i]` counts only the
/// in-graph parents of node `i`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dag {
    pub nodes: Vec<TaskRef>,
    pub children: Vec<Vec<usize>>,
    pub parent_count: Vec<usize>,
}

impl Dag {
    /// Graph over nodes `0..n` with synthetic task refs.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut dag = Dag {
            nodes: (0..n).map(|task| TaskRef { wf: 0, task }).collect(),
            children: vec![Vec::new(); n],
            parent_count: vec![0; n],
        };
        for &(p, c) in edges {
            dag.children[p].push(c);
            dag.parent_count[c] += 1;
        }
        dag
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }

    pub fn roots(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.parent_count[i] == 0)
    }

    pub fn is_acyclic(&self) -> bool {
        let mut indeg = self.parent_count.clone();
        let mut stack: Vec<usize> = self.roots().collect();
        let mut seen = 0;
        while let Some(v) = stack.pop() {
            seen += 1;
            for &c in &self.children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    stack.push(c);
                }
            }
        }
        seen == self.len()
    }

    /// Weakly connected components.
    pub fn component_count(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for v in 0..self.len() {
            for &c in &self.children[v] {
                let (a, b) = (find(&mut parent, v), find(&mut parent, c));
                parent[a] = b;
            }
        }
        (0..self.len()).filter(|&v| find(&mut parent, v) == v).count()
    }
}

/// Joins all unfinished workflows of `user` into one graph over their
/// unfinished tasks. Finished parents are dropped, so the roots are exactly
/// the running and eligible tasks.
pub fn joint_dag(state: &SystemState, user: UserId) -> Dag {
    let mut dag = Dag::default();
    for slot in state.active_workflows(user) {
        let run = &state.workflows[slot];
        let mut local = vec![usize::MAX; run.spec.len()];
        for &task in &run.spec.topo_order {
            if !run.status[task].is_finished() {
                local[task] = dag.nodes.len();
                dag.nodes.push(TaskRef { wf: slot, task });
            }
        }
        dag.children.resize(dag.nodes.len(), Vec::new());
        dag.parent_count.resize(dag.nodes.len(), 0);
        for &task in &run.spec.topo_order {
            let v = local[task];
            if v == usize::MAX {
                continue;
            }
            for &c in &run.spec.children[task] {
                let cv = local[c];
                debug_assert!(cv != usize::MAX, "child of unfinished task cannot be finished");
                dag.children[v].push(cv);
                dag.parent_count[cv] += 1;
            }
        }
    }
    dag
}
