//! Time-slotted optimal baseline: instances, value function, solution
//! checking and comparison against simulated schedules.
//!
//! Slots are numbered from 1. Tasks, resources and workflows are indexed
//! from 0; billing interval `m` covers slots `m*L + 1 ..= (m+1)*L`.

mod check;
mod lp;
mod solve;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    validate_workflow, ConfigError, SystemConfig, TaskSpec, ValidationError, WorkflowId, WorkflowSpec, Workload,
};
use crate::sim::OutcomeRecord;

pub use check::{check_solution, Constraint, Violation};
pub use lp::{export_lp, lp_summary, parse_lp_summary, LpSummary};
pub use solve::{solve_exact, SolveLimits, SolveStats};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MipError {
    #[error("instance has no tasks")]
    Empty,
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("horizon of {slots} slots is shorter than the {needed} a serial schedule needs")]
    HorizonTooShort { needed: u32, slots: u32 },
    #[error("no resource fits within budget {0}")]
    NoAffordableResource(u64),
    #[error("instance exceeds solver limits: {0}")]
    LimitExceeded(String),
    #[error("no feasible schedule")]
    Infeasible,
    #[error("workload mismatch: {0}")]
    WorkloadMismatch(String),
    #[error(transparent)]
    Workflow(#[from] ValidationError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MipResource {
    /// Index into [`MipInstance::types`].
    pub rtype: usize,
    pub cost: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MipTask {
    pub workflow: usize,
    /// Task id in the source workflow.
    pub source_id: u32,
    /// Slots per resource type.
    pub runtimes: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MipWorkflow {
    pub id: WorkflowId,
    /// First slot any of its tasks may start in.
    pub arrival: u32,
    /// Critical path length in slots with the fastest type per task.
    pub critical_path: u32,
    /// `arrival + critical_path - 1`.
    pub deadline: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MipInstance {
    pub slot_s: u64,
    /// Horizon T.
    pub slots: u32,
    /// Slots per billing interval L.
    pub per_billing: u32,
    /// Budget per billing interval.
    pub budget: u64,
    pub types: Vec<String>,
    pub resources: Vec<MipResource>,
    pub workflows: Vec<MipWorkflow>,
    /// Grouped by workflow; within a workflow parents precede children.
    pub tasks: Vec<MipTask>,
    /// `(parent, child)` task indices.
    pub edges: Vec<(usize, usize)>,
}

impl MipInstance {
    pub fn intervals(&self) -> u32 {
        self.slots / self.per_billing
    }

    /// R_{j,k}.
    pub fn runtime(&self, task: usize, resource: usize) -> u32 {
        self.tasks[task].runtimes[self.resources[resource].rtype]
    }

    /// Billing interval (0-based) containing `slot`.
    pub fn interval_of(&self, slot: u32) -> usize {
        ((slot - 1) / self.per_billing) as usize
    }

    pub fn parents(&self) -> Vec<Vec<usize>> {
        let mut p = vec![Vec::new(); self.tasks.len()];
        for &(a, b) in &self.edges {
            p[b].push(a);
        }
        p
    }

    pub fn validate(&self) -> Result<(), MipError> {
        let bad = |m: String| Err(MipError::InvalidInstance(m));
        if self.tasks.is_empty() {
            return Err(MipError::Empty);
        }
        if self.slot_s == 0 || self.per_billing == 0 || self.slots == 0 || !self.slots.is_multiple_of(self.per_billing)
        {
            return bad(format!("horizon {} not a positive multiple of {}", self.slots, self.per_billing));
        }
        if self.resources.is_empty() {
            return bad("no resources".into());
        }
        if let Some(r) = self.resources.iter().find(|r| r.rtype >= self.types.len()) {
            return bad(format!("resource type {} out of range", r.rtype));
        }
        for (j, t) in self.tasks.iter().enumerate() {
            if t.workflow >= self.workflows.len() {
                return bad(format!("task {j} references workflow {}", t.workflow));
            }
            if t.runtimes.len() != self.types.len() || t.runtimes.contains(&0) {
                return bad(format!("task {j} needs one positive runtime per type"));
            }
            if j > 0 && self.tasks[j - 1].workflow > t.workflow {
                return bad("tasks not grouped by workflow".into());
            }
        }
        for &(a, b) in &self.edges {
            if a >= b || b >= self.tasks.len() || self.tasks[a].workflow != self.tasks[b].workflow {
                return bad(format!("edge ({a}, {b}) must join a lower to a higher task of one workflow"));
            }
        }
        let cp = self.critical_paths();
        for (w, wf) in self.workflows.iter().enumerate() {
            if wf.arrival == 0 || wf.critical_path != cp[w] || wf.deadline + 1 != wf.arrival + wf.critical_path {
                return bad(format!("workflow {} has inconsistent arrival or deadline", wf.id));
            }
        }
        Ok(())
    }

    fn min_runtime(&self, task: usize) -> u32 {
        (0..self.resources.len()).map(|k| self.runtime(task, k)).min().unwrap_or(0)
    }

    fn critical_paths(&self) -> Vec<u32> {
        let parents = self.parents();
        let mut finish = vec![0u32; self.tasks.len()];
        let mut cp = vec![0u32; self.workflows.len()];
        for j in 0..self.tasks.len() {
            let start = parents[j].iter().map(|&p| finish[p]).max().unwrap_or(0);
            finish[j] = start + self.min_runtime(j);
            let w = self.tasks[j].workflow;
            cp[w] = cp[w].max(finish[j]);
        }
        cp
    }

    /// Slots needed to run everything serially on the best affordable
    /// resource after the last arrival.
    pub fn serial_bound(&self) -> Result<u32, MipError> {
        let last = self.workflows.iter().map(|w| w.arrival).max().unwrap_or(1);
        (0..self.resources.len())
            .filter(|&k| self.resources[k].cost <= self.budget)
            .map(|k| (0..self.tasks.len()).map(|j| self.runtime(j, k)).sum::<u32>())
            .min()
            .map(|work| last - 1 + work)
            .ok_or(MipError::NoAffordableResource(self.budget))
    }

    /// A system with one machine per resource, billed every `L` slots.
    pub fn system(&self) -> SystemConfig {
        let types = self
            .types
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let of_type = self.resources.iter().filter(|r| r.rtype == k);
                crate::model::ResourceType {
                    name: name.clone(),
                    cost: of_type.clone().map(|r| r.cost).max().unwrap_or(1),
                    count: of_type.count() as u32,
                }
            })
            .collect();
        SystemConfig { types, interval_s: self.slot_s * u64::from(self.per_billing), boot_delay_s: 0 }
    }

    /// The instance as a simulator workload with slot-aligned times.
    pub fn to_workload(&self, user: crate::model::UserId) -> Workload {
        let mut specs: Vec<WorkflowSpec> = self
            .workflows
            .iter()
            .map(|w| WorkflowSpec {
                id: w.id,
                user,
                priority: 0,
                arrival_s: u64::from(w.arrival - 1) * self.slot_s,
                tasks: Vec::new(),
                edges: Vec::new(),
            })
            .collect();
        for t in &self.tasks {
            let runtimes = self
                .types
                .iter()
                .zip(&t.runtimes)
                .map(|(name, &r)| (name.clone(), u64::from(r) * self.slot_s))
                .collect();
            specs[t.workflow].tasks.push(TaskSpec { id: t.source_id, runtimes });
        }
        for &(a, b) in &self.edges {
            let w = self.tasks[a].workflow;
            specs[w].edges.push((self.tasks[a].source_id, self.tasks[b].source_id));
        }
        Workload { workflows: specs }
    }
}

/// Slot-model parameters for [`build_instance`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotSettings {
    pub slot_s: u64,
    pub per_billing: u32,
    pub budget: u64,
    /// Billing intervals M; the smallest horizon fitting a serial schedule when absent.
    #[serde(default)]
    pub intervals: Option<u32>,
}

fn to_slots(seconds: u64, slot_s: u64) -> u32 {
    ((seconds + slot_s / 2) / slot_s).max(1) as u32
}

/// Builds the slot model of `workload` on one resource per machine of `system`.
pub fn build_instance(
    workload: &Workload,
    system: &SystemConfig,
    settings: &SlotSettings,
) -> Result<MipInstance, MipError> {
    system.validate()?;
    if workload.workflows.is_empty() {
        return Err(MipError::Empty);
    }
    if settings.slot_s == 0 || settings.per_billing == 0 {
        return Err(MipError::InvalidInstance("slot length and billing length must be positive".into()));
    }
    let types = system.type_names();
    let mut resources = Vec::new();
    for (k, t) in system.types.iter().enumerate() {
        resources.extend((0..t.count).map(|_| MipResource { rtype: k, cost: t.cost }));
    }
    let mut specs: Vec<&WorkflowSpec> = workload.workflows.iter().collect();
    specs.sort_by_key(|s| (s.arrival_s, s.id));
    let mut workflows = Vec::new();
    let mut tasks = Vec::new();
    let mut edges = Vec::new();
    for (w, spec) in specs.iter().enumerate() {
        let wf = validate_workflow(spec, &types)?;
        let base = tasks.len();
        let mut index = BTreeMap::new();
        for (pos, &v) in wf.topo_order.iter().enumerate() {
            index.insert(v, base + pos);
            tasks.push(MipTask {
                workflow: w,
                source_id: wf.task_ids[v],
                runtimes: wf.runtimes[v].iter().map(|&r| to_slots(r, settings.slot_s)).collect(),
            });
        }
        for &v in &wf.topo_order {
            for &c in &wf.children[v] {
                edges.push((index[&v], index[&c]));
            }
        }
        workflows.push(MipWorkflow {
            id: wf.id,
            arrival: (spec.arrival_s.div_ceil(settings.slot_s) + 1) as u32,
            critical_path: 0,
            deadline: 0,
        });
    }
    edges.sort_unstable();
    let mut inst = MipInstance {
        slot_s: settings.slot_s,
        slots: settings.per_billing,
        per_billing: settings.per_billing,
        budget: settings.budget,
        types,
        resources,
        workflows,
        tasks,
        edges,
    };
    for (w, cp) in inst.critical_paths().into_iter().enumerate() {
        let wf = &mut inst.workflows[w];
        wf.critical_path = cp;
        wf.deadline = wf.arrival + cp - 1;
    }
    let needed = inst.serial_bound()?;
    inst.slots = match settings.intervals {
        Some(m) => {
            let slots = m * settings.per_billing;
            if slots < needed {
                return Err(MipError::HorizonTooShort { needed, slots });
            }
            slots
        }
        None => needed.div_ceil(settings.per_billing) * settings.per_billing,
    };
    inst.validate()?;
    Ok(inst)
}

/// h_w(t): 1 when finishing by the deadline, the (negative) lateness otherwise.
pub fn value_function(deadline: u32, t: u32) -> i64 {
    if t <= deadline {
        1
    } else {
        i64::from(deadline) - i64::from(t)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Start {
    pub task: usize,
    pub resource: usize,
    pub slot: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Finish {
    pub workflow: usize,
    pub slot: u32,
}

/// Nonzero x and u entries plus the full y and z matrices (`[resource][interval]`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MipSolution {
    pub starts: Vec<Start>,
    pub active: Vec<Vec<u8>>,
    pub busy: Vec<Vec<u32>>,
    pub finishes: Vec<Finish>,
    pub profit: i64,
}

impl MipSolution {
    /// The solution implied by one start per task, with minimal y, z and u.
    pub fn from_starts(inst: &MipInstance, starts: Vec<Start>) -> Self {
        let m = inst.intervals() as usize;
        let mut busy = vec![vec![0u32; m]; inst.resources.len()];
        let mut finish = vec![0u32; inst.workflows.len()];
        for s in &starts {
            let end = s.slot + inst.runtime(s.task, s.resource) - 1;
            for t in s.slot..=end.min(inst.slots) {
                busy[s.resource][inst.interval_of(t)] += 1;
            }
            let w = inst.tasks[s.task].workflow;
            finish[w] = finish[w].max(end);
        }
        let active = busy.iter().map(|row| row.iter().map(|&z| u8::from(z > 0)).collect()).collect();
        let finishes: Vec<Finish> =
            finish.iter().enumerate().map(|(workflow, &slot)| Finish { workflow, slot }).collect();
        let profit = finishes.iter().map(|f| value_function(inst.workflows[f.workflow].deadline, f.slot)).sum();
        MipSolution { starts, active, busy, finishes, profit }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlowdownPair {
    pub workflow: WorkflowId,
    pub optimal: f64,
    pub heuristic: f64,
}

fn outcomes_by_workflow<'a>(
    inst: &MipInstance,
    outcomes: &'a [OutcomeRecord],
) -> Result<Vec<&'a OutcomeRecord>, MipError> {
    if inst.workflows.is_empty() {
        return Err(MipError::Empty);
    }
    let by_id: BTreeMap<WorkflowId, &OutcomeRecord> = outcomes.iter().map(|o| (o.workflow, o)).collect();
    if by_id.len() != outcomes.len() || by_id.len() != inst.workflows.len() {
        return Err(MipError::WorkloadMismatch(format!(
            "{} outcomes for {} workflows",
            outcomes.len(),
            inst.workflows.len()
        )));
    }
    inst.workflows
        .iter()
        .map(|w| {
            let o = by_id.get(&w.id).ok_or_else(|| MipError::WorkloadMismatch(format!("workflow {} missing", w.id)))?;
            if o.outcome.arrival != u64::from(w.arrival - 1) * inst.slot_s {
                return Err(MipError::WorkloadMismatch(format!("workflow {} arrival differs", w.id)));
            }
            Ok(*o)
        })
        .collect()
}

/// Completion slot of a simulated workflow.
fn finish_slot(inst: &MipInstance, o: &OutcomeRecord) -> u32 {
    o.outcome.last_finish.div_ceil(inst.slot_s) as u32
}

/// Per-workflow slowdowns of the optimal plan and a simulated run, both
/// relative to the instance's critical path.
pub fn compare(
    inst: &MipInstance,
    solution: &MipSolution,
    outcomes: &[OutcomeRecord],
) -> Result<Vec<SlowdownPair>, MipError> {
    let matched = outcomes_by_workflow(inst, outcomes)?;
    let mut finish = vec![0u32; inst.workflows.len()];
    for f in &solution.finishes {
        if f.workflow >= finish.len() {
            return Err(MipError::WorkloadMismatch(format!("solution names workflow {}", f.workflow)));
        }
        finish[f.workflow] = f.slot;
    }
    Ok(inst
        .workflows
        .iter()
        .zip(matched)
        .enumerate()
        .map(|(w, (wf, o))| {
            let ideal = f64::from(wf.critical_path);
            SlowdownPair {
                workflow: wf.id,
                optimal: f64::from(finish[w] + 1 - wf.arrival) / ideal,
                heuristic: f64::from(finish_slot(inst, o) + 1 - wf.arrival) / ideal,
            }
        })
        .collect())
}

/// Objective value the simulated completions would earn.
pub fn realized_profit(inst: &MipInstance, outcomes: &[OutcomeRecord]) -> Result<i64, MipError> {
    let matched = outcomes_by_workflow(inst, outcomes)?;
    Ok(inst.workflows.iter().zip(matched).map(|(w, o)| value_function(w.deadline, finish_slot(inst, o))).sum())
}

#[cfg(test)]
pub(crate) mod tests;
