use std::cmp::Reverse;

use num_rational::Ratio;

use super::{allocation_delta, release_unplanned, PlanContext, PlanDecision, Planner, RuntimeOracle};
use crate::model::{SystemState, TaskRef, TaskStatus};

/// Resources per type needed to run each workflow on its own fastest
/// resources, with no limit on their number.
pub fn scf_unconstrained_plans(state: &SystemState, ctx: &PlanContext<'_>) -> Vec<u64> {
    let types = ctx.system.types.len();
    let costs = ctx.system.costs();
    let oracle = RuntimeOracle::new(state, &costs);
    let fresh_ready = ctx.now + ctx.system.boot_delay_s;
    let mut supply = vec![0u64; types];
    for wf in state.active_workflows(ctx.user) {
        let run = &state.workflows[wf];
        let mut planner = Planner::new(state, oracle, ctx.now, ctx.horizon());
        for (task, st) in run.status.iter().enumerate() {
            if matches!(st, TaskStatus::Running { .. }) {
                planner.add_running(TaskRef { wf, task });
            }
        }
        for &task in &run.spec.topo_order {
            if run.status[task] == TaskStatus::Eligible {
                planner.place_fastest_growing(TaskRef { wf, task }, fresh_ready);
            }
        }
        planner.place_workflow(wf, |p, t| p.place_fastest_growing(t, fresh_ready));
        for (s, work) in supply.iter_mut().zip(planner.remaining_work(types)) {
            *s += work.div_ceil(ctx.system.interval_s);
        }
    }
    supply
}

/// Scales `initial` down to fit `budget`, then spends what is left one
/// instance per predicted type per round, cheapest first. `caps` bounds
/// each type.
pub fn scf_scale_supply(initial: &[u64], budget: u64, costs: &[u64], caps: Option<&[u64]>) -> Vec<u64> {
    let total: u64 = initial.iter().zip(costs).map(|(n, q)| n * q).sum();
    if total == 0 {
        return vec![0; initial.len()];
    }
    let cap = |i: usize| caps.map_or(u64::MAX, |c| c[i]);
    let factor = Ratio::new(budget, total).min(Ratio::from_integer(1));
    let mut scaled: Vec<u64> =
        initial.iter().enumerate().map(|(i, &n)| (factor * n).to_integer().min(cap(i))).collect();
    let mut left = budget - scaled.iter().zip(costs).map(|(n, q)| n * q).sum::<u64>();
    let mut order: Vec<usize> = (0..initial.len()).filter(|&i| initial[i] > 0).collect();
    order.sort_by_key(|&i| (costs[i], i));
    loop {
        let mut added = false;
        for &i in &order {
            if costs[i] <= left && scaled[i] < cap(i) {
                scaled[i] += 1;
                left -= costs[i];
                added = true;
            }
        }
        if !added {
            break;
        }
    }
    scaled
}

pub fn scf_decide(state: &SystemState, ctx: &PlanContext<'_>) -> PlanDecision {
    let types = ctx.system.types.len();
    let costs = ctx.system.costs();
    let caps: Vec<u64> = ctx.system.types.iter().map(|t| u64::from(t.count)).collect();
    let initial = scf_unconstrained_plans(state, ctx);
    let targets = scf_scale_supply(&initial, ctx.budget, &costs, Some(&caps));
    let allocate = allocation_delta(state, ctx.user, &targets, types);

    let oracle = RuntimeOracle::new(state, &costs);
    let mut planner = Planner::new(state, oracle, ctx.now, ctx.horizon());
    for r in state.reserved_by(ctx.user) {
        planner.add_reserved(r.id);
    }
    for (ty, &n) in allocate.iter().enumerate() {
        for ordinal in 0..n as usize {
            planner.add_new(ty, ordinal, ctx.now + ctx.system.boot_delay_s);
        }
    }
    let mut order: Vec<usize> = state.active_workflows(ctx.user).collect();
    order.sort_by_key(|&w| {
        let s = &state.workflows[w].spec;
        (Reverse(s.priority), s.arrival, s.id)
    });
    for wf in order {
        planner.place_workflow(wf, |p, t| p.place_any(t));
    }
    let plan = planner.into_plan();
    let deallocate = release_unplanned(state, ctx.user, &plan);
    PlanDecision { allocate, plan, deallocate }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::workflow::tests::{spec, types2};
    use crate::model::{validate_workflow, ResourceId, SystemConfig, UserId, WorkflowSpec};

    fn state(specs: &[WorkflowSpec]) -> SystemState {
        let mut st = SystemState::new(&SystemConfig::small_large(60));
        st.register_user(UserId(0));
        for s in specs {
            st.arrive(Arc::new(validate_workflow(s, &types2()).unwrap()));
        }
        st
    }

    fn ctx(system: &SystemConfig, budget: u64) -> PlanContext<'_> {
        PlanContext { now: 0, system, user: UserId(0), budget, seed: 1 }
    }

    #[test]
    fn unconstrained_examples() {
        let system = SystemConfig::small_large(60);
        // entry and exit of 1 s on Large around three 10 s parallel tasks
        let wf =
            spec(1, &[(5, 1), (20, 10), (20, 10), (20, 10), (5, 1)], &[(0, 1), (0, 2), (0, 3), (1, 4), (2, 4), (3, 4)]);
        assert_eq!(scf_unconstrained_plans(&state(&[wf]), &ctx(&system, 100)), vec![0, 1]);
        let chain = spec(1, &[(40, 50), (40, 50)], &[(0, 1)]);
        assert_eq!(scf_unconstrained_plans(&state(&[chain]), &ctx(&system, 100)), vec![2, 0]);
        assert_eq!(scf_unconstrained_plans(&state(&[]), &ctx(&system, 100)), vec![0, 0]);
    }

    #[test]
    fn parallel_tasks_get_fresh_resources() {
        let system = SystemConfig::small_large(60);
        let wf =
            spec(1, &[(5, 1), (20, 10), (20, 10), (20, 10), (5, 1)], &[(0, 1), (0, 2), (0, 3), (1, 4), (2, 4), (3, 4)]);
        let st = state(&[wf]);
        let costs = system.costs();
        let mut p = Planner::new(&st, RuntimeOracle::new(&st, &costs), 0, 60);
        p.place_workflow(0, |p, t| p.place_fastest_growing(t, 0));
        assert_eq!(p.plan().timelines.len(), 3);
        p.plan().validate(&st).unwrap();
    }

    #[test]
    fn scale_examples() {
        assert_eq!(scf_scale_supply(&[4, 4], 12, &[1, 5], None), vec![2, 2]);
        assert_eq!(scf_scale_supply(&[2, 2], 24, &[1, 5], None), vec![4, 4]);
        assert_eq!(scf_scale_supply(&[2, 2], 12, &[1, 5], None), vec![2, 2]);
        // round robin skips the unaffordable Large but keeps filling Smalls
        assert_eq!(scf_scale_supply(&[1, 1], 14, &[1, 5], None), vec![4, 2]);
        assert_eq!(scf_scale_supply(&[1, 0], 100, &[1, 5], Some(&[32, 32])), vec![32, 0]);
        assert_eq!(scf_scale_supply(&[0, 0], 100, &[1, 5], None), vec![0, 0]);
    }

    #[test]
    fn decide_examples() {
        let system = SystemConfig::small_large(60);
        let mut st = state(&[]);
        st.allocate(ResourceId(40), UserId(0), 0, 60).unwrap();
        st.finish_boot(ResourceId(40)).unwrap();
        let d = scf_decide(&st, &ctx(&system, 20));
        assert_eq!((d.allocate.clone(), d.deallocate.clone()), (vec![0, 0], vec![ResourceId(40)]));

        let mut hi = spec(1, &[(30, 60)], &[]);
        hi.priority = 9;
        let mut lo = spec(2, &[(30, 60)], &[]);
        lo.priority = 1;
        let st = state(&[lo, hi]);
        let d = scf_decide(&st, &ctx(&system, 1));
        assert_eq!(d.allocate, vec![1, 0]);
        let first = &d.plan.timelines.values().next().unwrap()[0];
        assert_eq!(first.task.wf, 1, "the priority 9 workflow is planned first");
        assert_eq!(first.start, 0);
        d.plan.validate(&st).unwrap();
    }
}
