use std::fmt;

use serde::Serialize;

use super::{value_function, MipInstance, MipSolution};

/// Constraint family of the slot model, numbered as in the LP export.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Constraint {
    /// Variable out of range, duplicated, or matrix of the wrong shape.
    Domain,
    StartOnce,
    ActiveSlots,
    ActiveState,
    Overlap,
    Precedence,
    Arrival,
    FinishOnce,
    Completion,
    Budget,
    /// Reported profit differs from the objective.
    Objective,
}

impl Constraint {
    /// Row-name prefix used in the LP file (0 for non-row checks).
    pub fn number(self) -> u8 {
        match self {
            Constraint::Domain | Constraint::Objective => 0,
            Constraint::StartOnce => 1,
            Constraint::ActiveSlots => 2,
            Constraint::ActiveState => 3,
            Constraint::Overlap => 4,
            Constraint::Precedence => 5,
            Constraint::Arrival => 6,
            Constraint::FinishOnce => 7,
            Constraint::Completion => 8,
            Constraint::Budget => 9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub constraint: Constraint,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.constraint, self.detail)
    }
}

/// Every violated constraint of `sol`, evaluated on its raw variable values.
pub fn check_solution(inst: &MipInstance, sol: &MipSolution) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut v = |constraint: Constraint, detail: String| out.push(Violation { constraint, detail });
    let (n, nk, t_max, m_max) = (inst.tasks.len(), inst.resources.len(), inst.slots, inst.intervals() as usize);
    let l = inst.per_billing;

    // x as a count per (task, resource, slot); values above one break the domain.
    let mut x = vec![vec![vec![0u32; t_max as usize + 1]; nk]; n];
    for s in &sol.starts {
        if s.task >= n || s.resource >= nk || s.slot == 0 || s.slot > t_max {
            v(Constraint::Domain, format!("start {s:?} out of range"));
            continue;
        }
        x[s.task][s.resource][s.slot as usize] += 1;
    }
    for (j, row) in x.iter().enumerate() {
        for (k, slots) in row.iter().enumerate() {
            for (t, &c) in slots.iter().enumerate() {
                if c > 1 {
                    v(Constraint::Domain, format!("x[{j},{k},{t}] = {c}"));
                }
            }
        }
    }
    let mut u = vec![vec![0u32; t_max as usize + 1]; inst.workflows.len()];
    for f in &sol.finishes {
        if f.workflow >= inst.workflows.len() || f.slot == 0 || f.slot > t_max {
            v(Constraint::Domain, format!("finish {f:?} out of range"));
            continue;
        }
        u[f.workflow][f.slot as usize] += 1;
    }
    for (w, row) in u.iter().enumerate() {
        if let Some(t) = row.iter().position(|&c| c > 1) {
            v(Constraint::Domain, format!("u[{w},{t}] = {}", row[t]));
        }
    }
    let shape_ok = |rows: usize, cols: usize, lens: Vec<usize>| rows == nk && lens.iter().all(|&c| c == cols);
    if !shape_ok(sol.active.len(), m_max, sol.active.iter().map(Vec::len).collect())
        || !shape_ok(sol.busy.len(), m_max, sol.busy.iter().map(Vec::len).collect())
    {
        v(Constraint::Domain, format!("y and z must be {nk} x {m_max}"));
        return out;
    }

    let start_sum = |j: usize, f: &dyn Fn(usize, u32) -> i64| -> i64 {
        (0..nk)
            .flat_map(|k| (1..=t_max).map(move |t| (k, t)))
            .map(|(k, t)| i64::from(x[j][k][t as usize]) * f(k, t))
            .sum()
    };
    let occupancy = |k: usize, t: u32| -> u32 {
        (0..n)
            .map(|j| {
                let lo = t.saturating_sub(inst.runtime(j, k)) + 1;
                (lo.max(1)..=t).map(|r| x[j][k][r as usize]).sum::<u32>()
            })
            .sum()
    };

    for j in 0..n {
        let starts = start_sum(j, &|_, _| 1);
        if starts != 1 {
            v(Constraint::StartOnce, format!("task {j} starts {starts} times"));
        }
    }
    for k in 0..nk {
        for m in 0..m_max {
            let first = m as u32 * l + 1;
            let z: u32 = (first..first + l).map(|t| occupancy(k, t)).sum();
            let (zv, yv) = (sol.busy[k][m], sol.active[k][m]);
            if zv > l || yv > 1 {
                v(Constraint::Domain, format!("z[{k},{m}] = {zv}, y[{k},{m}] = {yv}"));
            }
            if z != zv {
                v(Constraint::ActiveSlots, format!("z[{k},{m}] = {zv} but {z} slots are busy"));
            }
            if u32::from(yv) != zv.min(1) {
                v(Constraint::ActiveState, format!("y[{k},{m}] = {yv} with z = {zv}"));
            }
        }
        for t in 1..=t_max {
            let occ = occupancy(k, t);
            if occ > 1 {
                v(Constraint::Overlap, format!("resource {k} runs {occ} tasks in slot {t}"));
            }
        }
    }
    for &(p, c) in &inst.edges {
        let child = start_sum(c, &|_, t| i64::from(t));
        let parent_ready = start_sum(p, &|k, t| i64::from(t + inst.runtime(p, k)));
        if child < parent_ready {
            v(Constraint::Precedence, format!("task {c} starts before parent {p} finishes"));
        }
    }
    let completion: Vec<i64> =
        u.iter().map(|row| row.iter().enumerate().map(|(t, &c)| t as i64 * i64::from(c)).sum()).collect();
    for (j, task) in inst.tasks.iter().enumerate() {
        let wf = &inst.workflows[task.workflow];
        let start = start_sum(j, &|_, t| i64::from(t));
        if start < i64::from(wf.arrival) {
            v(Constraint::Arrival, format!("task {j} starts at {start} before arrival {}", wf.arrival));
        }
        let end = start_sum(j, &|k, t| i64::from(t + inst.runtime(j, k)) - 1);
        if end > completion[task.workflow] {
            v(Constraint::Completion, format!("task {j} ends at {end} after its workflow completes"));
        }
    }
    for (w, row) in u.iter().enumerate() {
        let count: u32 = row.iter().sum();
        if count != 1 {
            v(Constraint::FinishOnce, format!("workflow {w} finishes {count} times"));
        }
    }
    for m in 0..m_max {
        let cost: u64 = (0..nk).map(|k| inst.resources[k].cost * u64::from(sol.active[k][m])).sum();
        if cost > inst.budget {
            v(Constraint::Budget, format!("interval {m} costs {cost} over budget {}", inst.budget));
        }
    }
    let profit: i64 = u
        .iter()
        .enumerate()
        .flat_map(|(w, row)| row.iter().enumerate().map(move |(t, &c)| (w, t, c)))
        .filter(|&(_, t, c)| c > 0 && t > 0)
        .map(|(w, t, c)| i64::from(c) * value_function(inst.workflows[w].deadline, t as u32))
        .sum();
    if profit != sol.profit {
        v(Constraint::Objective, format!("profit {} but objective is {profit}", sol.profit));
    }
    out
}
