//! Depth-first branch and bound over (resource, start slot) per task.

use serde::{Deserialize, Serialize};

use super::{value_function, MipError, MipInstance, MipSolution, Start};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveLimits {
    pub max_tasks: usize,
    pub max_resources: usize,
    pub max_slots: u32,
    /// Search nodes before giving up.
    pub max_nodes: u64,
}

impl Default for SolveLimits {
    fn default() -> Self {
        SolveLimits { max_tasks: 8, max_resources: 4, max_slots: 24, max_nodes: 200_000_000 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SolveStats {
    pub nodes: u64,
    pub incumbents: u64,
}

struct Search<'a> {
    inst: &'a MipInstance,
    parents: Vec<Vec<usize>>,
    /// Resources by ascending cost, then index.
    order: Vec<usize>,
    min_rt: Vec<u32>,
    busy: Vec<Vec<bool>>,
    /// Busy slots per resource and billing interval.
    load: Vec<Vec<u32>>,
    spend: Vec<u64>,
    /// Slot after the last one of each placed task.
    ready: Vec<u32>,
    starts: Vec<Start>,
    best: Option<(i64, Vec<Start>)>,
    stats: SolveStats,
    max_nodes: u64,
}

impl Search<'_> {
    /// Upper bound on the profit of any completion of the current partial schedule.
    fn bound(&self, next: usize) -> i64 {
        let inst = self.inst;
        let mut finish: Vec<u32> = inst.workflows.iter().map(|w| w.deadline).collect();
        let mut est = vec![0u32; inst.tasks.len()];
        for j in 0..inst.tasks.len() {
            let w = inst.tasks[j].workflow;
            let end = if j < next {
                self.ready[j] - 1
            } else {
                let s = self.parents[j].iter().map(|&p| est[p]).max().unwrap_or(0).max(inst.workflows[w].arrival);
                s + self.min_rt[j] - 1
            };
            est[j] = end + 1;
            finish[w] = finish[w].max(end);
        }
        inst.workflows.iter().zip(finish).map(|(wf, t)| value_function(wf.deadline, t)).sum()
    }

    fn place(&mut self, j: usize, k: usize, t: u32, on: bool) {
        let r = self.inst.runtime(j, k);
        for s in t..t + r {
            self.busy[k][s as usize] = on;
            let m = self.inst.interval_of(s);
            if on {
                if self.load[k][m] == 0 {
                    self.spend[m] += self.inst.resources[k].cost;
                }
                self.load[k][m] += 1;
            } else {
                self.load[k][m] -= 1;
                if self.load[k][m] == 0 {
                    self.spend[m] -= self.inst.resources[k].cost;
                }
            }
        }
    }

    fn fits(&self, j: usize, k: usize, t: u32) -> bool {
        let inst = self.inst;
        let r = inst.runtime(j, k);
        if (t..t + r).any(|s| self.busy[k][s as usize]) {
            return false;
        }
        let cost = inst.resources[k].cost;
        let first = inst.interval_of(t);
        let last = inst.interval_of(t + r - 1);
        (first..=last).all(|m| self.load[k][m] > 0 || self.spend[m] + cost <= inst.budget)
    }

    fn unused(&self, k: usize) -> bool {
        self.load[k].iter().all(|&c| c == 0)
    }

    fn dfs(&mut self, j: usize) -> Result<(), MipError> {
        self.stats.nodes += 1;
        if self.stats.nodes > self.max_nodes {
            return Err(MipError::LimitExceeded(format!("more than {} search nodes", self.max_nodes)));
        }
        let inst = self.inst;
        if j == inst.tasks.len() {
            let profit = self.bound(j);
            if self.best.as_ref().is_none_or(|(p, _)| profit > *p) {
                self.best = Some((profit, self.starts.clone()));
                self.stats.incumbents += 1;
            }
            return Ok(());
        }
        if let Some((p, _)) = &self.best {
            if self.bound(j) <= *p {
                return Ok(());
            }
        }
        let w = inst.tasks[j].workflow;
        let earliest = self.parents[j].iter().map(|&p| self.ready[p]).max().unwrap_or(0).max(inst.workflows[w].arrival);
        // Unused resources of the same type and cost are interchangeable.
        let mut tried_unused: Vec<(usize, u64)> = Vec::new();
        for oi in 0..self.order.len() {
            let k = self.order[oi];
            let res = &inst.resources[k];
            if self.unused(k) {
                if tried_unused.contains(&(res.rtype, res.cost)) {
                    continue;
                }
                tried_unused.push((res.rtype, res.cost));
            }
            let r = inst.runtime(j, k);
            if earliest + r - 1 > inst.slots {
                continue;
            }
            for t in earliest..=inst.slots + 1 - r {
                if !self.fits(j, k, t) {
                    continue;
                }
                self.place(j, k, t, true);
                self.ready[j] = t + r;
                self.starts.push(Start { task: j, resource: k, slot: t });
                let res = self.dfs(j + 1);
                self.starts.pop();
                self.place(j, k, t, false);
                res?;
            }
        }
        Ok(())
    }
}

/// A profit-maximal schedule, proven optimal by exhausting the search.
pub fn solve_exact(inst: &MipInstance, limits: &SolveLimits) -> Result<(MipSolution, SolveStats), MipError> {
    inst.validate()?;
    if inst.tasks.len() > limits.max_tasks {
        return Err(MipError::LimitExceeded(format!("{} tasks > {}", inst.tasks.len(), limits.max_tasks)));
    }
    if inst.resources.len() > limits.max_resources {
        return Err(MipError::LimitExceeded(format!("{} resources > {}", inst.resources.len(), limits.max_resources)));
    }
    if inst.slots > limits.max_slots {
        return Err(MipError::LimitExceeded(format!("{} slots > {}", inst.slots, limits.max_slots)));
    }
    let mut order: Vec<usize> = (0..inst.resources.len()).collect();
    order.sort_by_key(|&k| (inst.resources[k].cost, k));
    let m = inst.intervals() as usize;
    let mut search = Search {
        inst,
        parents: inst.parents(),
        order,
        min_rt: (0..inst.tasks.len()).map(|j| inst.min_runtime(j)).collect(),
        busy: vec![vec![false; inst.slots as usize + 1]; inst.resources.len()],
        load: vec![vec![0; m]; inst.resources.len()],
        spend: vec![0; m],
        ready: vec![0; inst.tasks.len()],
        starts: Vec::with_capacity(inst.tasks.len()),
        best: None,
        stats: SolveStats::default(),
        max_nodes: limits.max_nodes,
    };
    search.dfs(0)?;
    let stats = search.stats;
    let (_, starts) = search.best.ok_or(MipError::Infeasible)?;
    Ok((MipSolution::from_starts(inst, starts), stats))
}
