use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{UserId, WorkflowId};

/// Serialized task: an id unique within its workflow and a runtime in whole
/// seconds for every resource type, keyed by type name.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub id: u32,
    pub runtimes: BTreeMap<String, u64>,
}

/// Serialized workflow as found in workload files.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowSpec {
    pub id: WorkflowId,
    pub user: UserId,
    pub priority: u8,
    pub arrival_s: u64,
    pub tasks: Vec<TaskSpec>,
    /// `(parent, child)` pairs of task ids.
    pub edges: Vec<(u32, u32)>,
}

/// Workload file document.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workload {
    pub workflows: Vec<WorkflowSpec>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ValidationError {
    #[error("workflow {0} has no tasks")]
    Empty(WorkflowId),
    #[error("workflow {0}: task id {1} appears twice")]
    DuplicateTask(WorkflowId, u32),
    #[error("workflow {0}: edge references unknown task {1}")]
    DanglingEdge(WorkflowId, u32),
    #[error("workflow {0}: precedence edges contain a cycle")]
    CycleDetected(WorkflowId),
    #[error("workflow {0} has {1} entry tasks")]
    MultipleEntries(WorkflowId, usize),
    #[error("workflow {0} has {1} exit tasks")]
    MultipleExits(WorkflowId, usize),
    #[error("workflow {0}: task {1} lacks a runtime for type `{2}`")]
    MissingRuntime(WorkflowId, u32, String),
    #[error("workflow {0}: task {1} has a runtime for unknown type `{2}`")]
    UnknownType(WorkflowId, u32, String),
    #[error("workflow {0}: task {1} runtime must be at least 1 s")]
    ZeroRuntime(WorkflowId, u32),
    #[error("workflow {0}: priority {1} outside 0..=9")]
    InvalidPriority(WorkflowId, u8),
}

/// A validated workflow with dense task indices. Task `i` corresponds to
/// `task_ids[i]` of the source document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Workflow {
    pub id: WorkflowId,
    pub user: UserId,
    pub priority: u8,
    pub arrival: u64,
    pub task_ids: Vec<u32>,
    /// `runtimes[task][type]` in seconds.
    pub runtimes: Vec<Vec<u64>>,
    pub parents: Vec<Vec<usize>>,
    pub children: Vec<Vec<usize>>,
    pub topo_order: Vec<usize>,
    /// Position of each task in `topo_order`.
    pub topo_index: Vec<usize>,
    pub entry: usize,
    pub exit: usize,
}

impl Workflow {
    pub fn len(&self) -> usize {
        self.task_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.task_ids.is_empty()
    }

    pub fn min_runtime(&self, task: usize) -> u64 {
        self.runtimes[task].iter().copied().min().unwrap_or(0)
    }

    /// Sum over tasks of their fastest runtime.
    pub fn total_min_runtime(&self) -> u64 {
        (0..self.len()).map(|t| self.min_runtime(t)).sum()
    }

    /// Converts back to the serialized form.
    pub fn to_spec(&self, type_names: &[String]) -> WorkflowSpec {
        let tasks = self
            .task_ids
            .iter()
            .zip(&self.runtimes)
            .map(|(&id, rts)| TaskSpec { id, runtimes: type_names.iter().cloned().zip(rts.iter().copied()).collect() })
            .collect();
        let mut edges = Vec::new();
        for (child, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                edges.push((self.task_ids[p], self.task_ids[child]));
            }
        }
        edges.sort_unstable();
        WorkflowSpec { id: self.id, user: self.user, priority: self.priority, arrival_s: self.arrival, tasks, edges }
    }
}

/// Checks the structural model (acyclic, single entry and exit, full
/// runtime table) and builds the indexed form. `types` lists the system's
/// resource type names in index order.
pub fn validate_workflow(spec: &WorkflowSpec, types: &[String]) -> Result<Workflow, ValidationError> {
    let wid = spec.id;
    if spec.tasks.is_empty() {
        return Err(ValidationError::Empty(wid));
    }
    if spec.priority > 9 {
        return Err(ValidationError::InvalidPriority(wid, spec.priority));
    }
    let mut index = BTreeMap::new();
    for (i, t) in spec.tasks.iter().enumerate() {
        if index.insert(t.id, i).is_some() {
            return Err(ValidationError::DuplicateTask(wid, t.id));
        }
    }
    let n = spec.tasks.len();
    let mut parents = vec![Vec::new(); n];
    let mut children = vec![Vec::new(); n];
    for &(p, c) in &spec.edges {
        let pi = *index.get(&p).ok_or(ValidationError::DanglingEdge(wid, p))?;
        let ci = *index.get(&c).ok_or(ValidationError::DanglingEdge(wid, c))?;
        if pi == ci {
            return Err(ValidationError::CycleDetected(wid));
        }
        if !children[pi].contains(&ci) {
            children[pi].push(ci);
            parents[ci].push(pi);
        }
    }

    // Kahn's algorithm, smallest index first so the order is reproducible.
    let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut topo_order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        topo_order.push(v);
        for &c in &children[v] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if topo_order.len() != n {
        return Err(ValidationError::CycleDetected(wid));
    }
    let entries: Vec<usize> = (0..n).filter(|&i| parents[i].is_empty()).collect();
    if entries.len() != 1 {
        return Err(ValidationError::MultipleEntries(wid, entries.len()));
    }
    let exits: Vec<usize> = (0..n).filter(|&i| children[i].is_empty()).collect();
    if exits.len() != 1 {
        return Err(ValidationError::MultipleExits(wid, exits.len()));
    }

    let mut runtimes = Vec::with_capacity(n);
    for t in &spec.tasks {
        if let Some(unknown) = t.runtimes.keys().find(|k| !types.contains(k)) {
            return Err(ValidationError::UnknownType(wid, t.id, unknown.clone()));
        }
        let mut row = Vec::with_capacity(types.len());
        for ty in types {
            let rt = *t.runtimes.get(ty).ok_or_else(|| ValidationError::MissingRuntime(wid, t.id, ty.clone()))?;
            if rt == 0 {
                return Err(ValidationError::ZeroRuntime(wid, t.id));
            }
            row.push(rt);
        }
        runtimes.push(row);
    }

    let mut topo_index = vec![0; n];
    for (pos, &v) in topo_order.iter().enumerate() {
        topo_index[v] = pos;
    }
    Ok(Workflow {
        id: wid,
        user: spec.user,
        priority: spec.priority,
        arrival: spec.arrival_s,
        task_ids: spec.tasks.iter().map(|t| t.id).collect(),
        runtimes,
        parents,
        children,
        topo_order,
        topo_index,
        entry: entries[0],
        exit: exits[0],
    })
}

/// Makespan on the reference system: unbounded machines, no queueing, each
/// task on its fastest type. The result lower-bounds any simulated makespan.
pub fn ideal_makespan(wf: &Workflow) -> u64 {
    let mut finish = vec![0u64; wf.len()];
    for &v in &wf.topo_order {
        let ready = wf.parents[v].iter().map(|&p| finish[p]).max().unwrap_or(0);
        finish[v] = ready + wf.min_runtime(v);
    }
    finish.into_iter().max().unwrap_or(0)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn types2() -> Vec<String> {
        vec!["Small".into(), "Large".into()]
    }

    /// Builds a spec where task `i` has id `i` and the given runtimes on
    /// (Small, Large).
    pub fn spec(id: u32, rts: &[(u64, u64)], edges: &[(u32, u32)]) -> WorkflowSpec {
        WorkflowSpec {
            id: WorkflowId(id),
            user: UserId(0),
            priority: 5,
            arrival_s: 0,
            tasks: rts
                .iter()
                .enumerate()
                .map(|(i, &(s, l))| TaskSpec {
                    id: i as u32,
                    runtimes: [("Small".to_string(), s), ("Large".to_string(), l)].into_iter().collect(),
                })
                .collect(),
            edges: edges.to_vec(),
        }
    }

    #[test]
    fn chain_is_valid() {
        let wf = validate_workflow(&spec(1, &[(1, 1); 3], &[(0, 1), (1, 2)]), &types2()).unwrap();
        assert_eq!(wf.entry, 0);
        assert_eq!(wf.exit, 2);
        assert_eq!(wf.topo_order, vec![0, 1, 2]);
    }

    #[test]
    fn two_cycle_detected() {
        let err = validate_workflow(&spec(1, &[(1, 1); 2], &[(0, 1), (1, 0)]), &types2()).unwrap_err();
        assert_eq!(err, ValidationError::CycleDetected(WorkflowId(1)));
    }

    #[test]
    fn two_parentless_tasks_rejected() {
        let err = validate_workflow(&spec(1, &[(1, 1); 3], &[(0, 2), (1, 2)]), &types2()).unwrap_err();
        assert_eq!(err, ValidationError::MultipleEntries(WorkflowId(1), 2));
    }

    #[test]
    fn multiple_exits_and_dangling_edges() {
        let err = validate_workflow(&spec(1, &[(1, 1); 3], &[(0, 1), (0, 2)]), &types2()).unwrap_err();
        assert_eq!(err, ValidationError::MultipleExits(WorkflowId(1), 2));
        let err = validate_workflow(&spec(1, &[(1, 1); 2], &[(0, 7)]), &types2()).unwrap_err();
        assert_eq!(err, ValidationError::DanglingEdge(WorkflowId(1), 7));
    }

    #[test]
    fn runtime_table_checked() {
        let mut s = spec(1, &[(1, 1)], &[]);
        s.tasks[0].runtimes.remove("Large");
        assert!(matches!(validate_workflow(&s, &types2()), Err(ValidationError::MissingRuntime(..))));
        let s = spec(1, &[(0, 1)], &[]);
        assert!(matches!(validate_workflow(&s, &types2()), Err(ValidationError::ZeroRuntime(..))));
        let mut s = spec(1, &[(1, 1)], &[]);
        s.priority = 10;
        assert!(matches!(validate_workflow(&s, &types2()), Err(ValidationError::InvalidPriority(..))));
    }

    #[test]
    fn ideal_makespan_examples() {
        let chain = validate_workflow(&spec(1, &[(2, 7), (3, 3), (9, 5)], &[(0, 1), (1, 2)]), &types2()).unwrap();
        assert_eq!(ideal_makespan(&chain), 10);
        let single = validate_workflow(&spec(1, &[(4, 6)], &[]), &types2()).unwrap();
        assert_eq!(ideal_makespan(&single), 4);
        let diamond = validate_workflow(
            &spec(1, &[(1, 1), (2, 2), (9, 9), (1, 1)], &[(0, 1), (0, 2), (1, 3), (2, 3)]),
            &types2(),
        )
        .unwrap();
        assert_eq!(ideal_makespan(&diamond), 11);
    }

    #[test]
    fn spec_round_trip() {
        let s = spec(3, &[(1, 2), (3, 4), (5, 6), (7, 8)], &[(0, 1), (0, 2), (1, 3), (2, 3)]);
        let wf = validate_workflow(&s, &types2()).unwrap();
        assert_eq!(wf.to_spec(&types2()), s);
        let json = serde_json::to_string(&Workload { workflows: vec![s.clone()] }).unwrap();
        assert!(json.contains("\"edges\":[[0,1],[0,2],[1,3],[2,3]]"));
        let back: Workload = serde_json::from_str(&json).unwrap();
        assert_eq!(back.workflows[0], s);
    }
}
