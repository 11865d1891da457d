use std::collections::BTreeMap;

use num_rational::Rational64;
use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{allocation_delta, release_unplanned, PlanContext, PlanDecision, PlanError, Planner, RuntimeOracle};
use crate::model::{SystemState, TaskRef};

/// Splits what is left of `budget` after `allocated_cost` among workflows
/// in proportion to their priorities. All-zero priorities split evenly.
pub fn plf_distribute_budget(
    budget: u64,
    allocated_cost: u64,
    priorities: &[u8],
) -> Result<Vec<Rational64>, PlanError> {
    if allocated_cost > budget {
        return Err(PlanError::OverCommitted { budget, reserved: allocated_cost });
    }
    let remaining = Rational64::from_integer((budget - allocated_cost) as i64);
    if priorities.is_empty() {
        return Ok(Vec::new());
    }
    let total: i64 = priorities.iter().map(|&p| i64::from(p)).sum();
    Ok(if total == 0 {
        vec![remaining / priorities.len() as i64; priorities.len()]
    } else {
        priorities.iter().map(|&p| remaining * i64::from(p) / total).collect()
    })
}

/// Result of the fastest-type assignment.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InitialSupply {
    /// Instances per type.
    pub counts: Vec<u64>,
    /// Tasks with a chosen type, in assignment order.
    pub typed: Vec<(TaskRef, usize)>,
    /// Eligible tasks left without a type.
    pub unassigned: Vec<TaskRef>,
    /// Unspent budget per workflow slot.
    pub leftovers: BTreeMap<usize, Rational64>,
}

/// Gives each eligible task (highest priority first) its fastest type while
/// its own workflow can pay for it.
pub fn plf_initial_supply(
    eligible: &[TaskRef],
    budgets: BTreeMap<usize, Rational64>,
    oracle: &RuntimeOracle<'_>,
    types: usize,
) -> InitialSupply {
    let mut out = InitialSupply { counts: vec![0; types], leftovers: budgets, ..Default::default() };
    for &t in eligible {
        let ty = oracle.fastest(t);
        let price = Rational64::from_integer(oracle.cost(ty) as i64);
        let left = out.leftovers.entry(t.wf).or_insert_with(Rational64::zero);
        if *left >= price {
            *left -= price;
            out.counts[ty] += 1;
            out.typed.push((t, ty));
        } else {
            out.unassigned.push(t);
        }
    }
    out
}

/// Pools the leftovers and types further unassigned tasks the pool can pay
/// for. Returns the unspent pool.
pub fn plf_consolidate_budget(supply: &mut InitialSupply, oracle: &RuntimeOracle<'_>) -> Rational64 {
    let mut pool: Rational64 = supply.leftovers.values().copied().sum();
    let mut still = Vec::new();
    for t in std::mem::take(&mut supply.unassigned) {
        let ty = oracle.fastest(t);
        let price = Rational64::from_integer(oracle.cost(ty) as i64);
        if pool >= price {
            pool -= price;
            supply.counts[ty] += 1;
            supply.typed.push((t, ty));
        } else {
            still.push(t);
        }
    }
    supply.unassigned = still;
    for v in supply.leftovers.values_mut() {
        *v = Rational64::zero();
    }
    pool
}

pub fn plf_decide(state: &SystemState, ctx: &PlanContext<'_>) -> Result<PlanDecision, PlanError> {
    let types = ctx.system.types.len();
    let costs = ctx.system.costs();
    let oracle = RuntimeOracle::new(state, &costs);
    let user = ctx.user;

    let workflows: Vec<usize> = state.active_workflows(user).collect();
    let priorities: Vec<u8> = workflows.iter().map(|&w| state.workflows[w].spec.priority).collect();
    let shares = plf_distribute_budget(ctx.budget, state.reserved_cost(user, &costs), &priorities)?;
    let budgets: BTreeMap<usize, Rational64> = workflows.iter().copied().zip(shares).collect();

    let eligible: Vec<TaskRef> = state.eligible_iter(user).collect();
    let mut supply = plf_initial_supply(&eligible, budgets, &oracle, types);
    plf_consolidate_budget(&mut supply, &oracle);

    let mut targets: Vec<u64> = supply.counts.clone();
    for r in state.reserved_by(user) {
        if r.running_task.is_some() {
            targets[r.rtype.0] += 1;
        }
    }
    let allocate = allocation_delta(state, user, &targets, types);

    let mut planner = Planner::new(state, oracle, ctx.now, ctx.horizon());
    for r in state.reserved_by(user) {
        planner.add_reserved(r.id);
    }
    for (ty, &n) in allocate.iter().enumerate() {
        for ordinal in 0..n as usize {
            planner.add_new(ty, ordinal, ctx.now + ctx.system.boot_delay_s);
        }
    }
    let mut order = workflows;
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(ctx.seed));
    let mut typed_by_wf: BTreeMap<usize, Vec<(TaskRef, usize)>> = BTreeMap::new();
    for &(t, ty) in &supply.typed {
        typed_by_wf.entry(t.wf).or_default().push((t, ty));
    }
    for wf in &order {
        for &(t, ty) in typed_by_wf.get(wf).into_iter().flatten() {
            planner.place_typed(t, ty);
        }
    }
    for &wf in &order {
        planner.place_workflow(wf, |p, t| p.place_any(t));
    }
    let plan = planner.into_plan();
    let deallocate = release_unplanned(state, user, &plan);
    Ok(PlanDecision { allocate, plan, deallocate })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::workflow::tests::{spec, types2};
    use crate::model::{validate_workflow, ResourceId, SystemConfig, UserId, WorkflowSpec};

    fn q(n: i64) -> Rational64 {
        Rational64::from_integer(n)
    }

    fn state(specs: &[WorkflowSpec]) -> SystemState {
        let mut st = SystemState::new(&SystemConfig::small_large(60));
        st.register_user(UserId(0));
        for s in specs {
            st.arrive(Arc::new(validate_workflow(s, &types2()).unwrap()));
        }
        st
    }

    #[test]
    fn distribute_examples() {
        assert_eq!(plf_distribute_budget(20, 10, &[3, 7]).unwrap(), vec![q(3), q(7)]);
        assert_eq!(plf_distribute_budget(10, 0, &[4]).unwrap(), vec![q(10)]);
        assert_eq!(plf_distribute_budget(10, 10, &[4, 2]).unwrap(), vec![q(0), q(0)]);
        assert_eq!(plf_distribute_budget(10, 0, &[0, 0]).unwrap(), vec![q(5), q(5)]);
        assert_eq!(plf_distribute_budget(1, 0, &[1, 2]).unwrap(), vec![Rational64::new(1, 3), Rational64::new(2, 3)]);
        assert_eq!(plf_distribute_budget(5, 6, &[1]), Err(PlanError::OverCommitted { budget: 5, reserved: 6 }));
    }

    #[test]
    fn initial_supply_examples() {
        let st = state(&[spec(1, &[(4, 2)], &[]), spec(2, &[(3, 3)], &[])]);
        let costs = [1, 5];
        let oracle = RuntimeOracle::new(&st, &costs);
        let t0 = TaskRef { wf: 0, task: 0 };
        let s = plf_initial_supply(&[t0], BTreeMap::from([(0, q(5))]), &oracle, 2);
        assert_eq!((s.counts.clone(), s.leftovers[&0]), (vec![0, 1], q(0)));
        let s = plf_initial_supply(&[t0], BTreeMap::from([(0, q(4))]), &oracle, 2);
        assert_eq!((s.counts.clone(), s.leftovers[&0], s.unassigned.len()), (vec![0, 0], q(4), 1));
        assert_eq!(oracle.fastest(TaskRef { wf: 1, task: 0 }), 0, "tie goes to the cheaper type");
    }

    #[test]
    fn consolidation_examples() {
        let st = state(&[spec(1, &[(4, 2)], &[]), spec(2, &[(4, 2)], &[])]);
        let costs = [1, 5];
        let oracle = RuntimeOracle::new(&st, &costs);
        let mut s = InitialSupply {
            counts: vec![0, 0],
            unassigned: vec![TaskRef { wf: 1, task: 0 }],
            leftovers: BTreeMap::from([(0, q(3)), (1, q(2))]),
            ..Default::default()
        };
        assert_eq!(plf_consolidate_budget(&mut s, &oracle), q(0));
        assert_eq!(s.counts, vec![0, 1]);
        let mut s = InitialSupply {
            counts: vec![0, 0],
            unassigned: vec![TaskRef { wf: 1, task: 0 }],
            leftovers: BTreeMap::from([(0, q(4))]),
            ..Default::default()
        };
        assert_eq!(plf_consolidate_budget(&mut s, &oracle), q(4));
        assert_eq!(s.unassigned.len(), 1);
        let mut s = InitialSupply { counts: vec![0, 0], ..Default::default() };
        assert_eq!(plf_consolidate_budget(&mut s, &oracle), q(0));
    }

    fn ctx(system: &SystemConfig, budget: u64) -> PlanContext<'_> {
        PlanContext { now: 0, system, user: UserId(0), budget, seed: 7 }
    }

    #[test]
    fn decide_without_work_releases_idle() {
        let system = SystemConfig::small_large(60);
        let mut st = state(&[]);
        st.allocate(ResourceId(0), UserId(0), 0, 60).unwrap();
        st.finish_boot(ResourceId(0)).unwrap();
        let d = plf_decide(&st, &ctx(&system, 12)).unwrap();
        assert_eq!(d.allocate, vec![0, 0]);
        assert_eq!(d.deallocate, vec![ResourceId(0)]);
    }

    #[test]
    fn decide_single_task_allocates_fastest() {
        let system = SystemConfig::small_large(60);
        let st = state(&[spec(1, &[(4, 2)], &[])]);
        let d = plf_decide(&st, &ctx(&system, 100)).unwrap();
        assert_eq!(d.allocate, vec![0, 1]);
        assert_eq!(d.plan.len(), 1);
        d.plan.validate(&st).unwrap();
    }

    #[test]
    fn decide_with_budget_spent_fills_existing() {
        let system = SystemConfig::small_large(60);
        let mut st = state(&[spec(1, &[(4, 2), (4, 2)], &[(0, 1)])]);
        st.allocate(ResourceId(0), UserId(0), 0, 60).unwrap();
        st.finish_boot(ResourceId(0)).unwrap();
        let d = plf_decide(&st, &ctx(&system, 1)).unwrap();
        assert_eq!(d.allocate, vec![0, 0]);
        assert_eq!(d.plan.timelines[&super::super::PlanResource::Existing(ResourceId(0))].len(), 2);
        assert!(d.deallocate.is_empty());
    }
}
