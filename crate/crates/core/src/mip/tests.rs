use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::model::workflow::tests::spec;
use crate::model::ResourceType;

fn system(small: u32, large: u32, large_cost: u64) -> SystemConfig {
    SystemConfig {
        types: vec![
            ResourceType { name: "Small".into(), cost: 1, count: small },
            ResourceType { name: "Large".into(), cost: large_cost, count: large },
        ],
        interval_s: 10,
        boot_delay_s: 0,
    }
}

fn settings(budget: u64, intervals: Option<u32>) -> SlotSettings {
    SlotSettings { slot_s: 5, per_billing: 2, budget, intervals }
}

/// Best profit over every assignment of one start per task.
pub(crate) fn exhaustive(inst: &MipInstance) -> Option<i64> {
    let choices: Vec<(usize, u32)> =
        (0..inst.resources.len()).flat_map(|k| (1..=inst.slots).map(move |t| (k, t))).collect();
    let n = inst.tasks.len();
    let mut idx = vec![0usize; n];
    let mut best = None;
    loop {
        let starts = idx
            .iter()
            .enumerate()
            .map(|(task, &c)| Start { task, resource: choices[c].0, slot: choices[c].1 })
            .collect();
        let sol = MipSolution::from_starts(inst, starts);
        if check_solution(inst, &sol).is_empty() && best.is_none_or(|b| sol.profit > b) {
            best = Some(sol.profit);
        }
        let mut d = 0;
        loop {
            if d == n {
                return best;
            }
            idx[d] += 1;
            if idx[d] < choices.len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

pub(crate) fn random_instance(rng: &mut ChaCha8Rng, max_tasks: usize, slots: u32) -> Option<MipInstance> {
    let tasks = rng.random_range(1..=max_tasks);
    let workflows = rng.random_range(1..=tasks.min(2));
    let mut specs = Vec::new();
    let mut left = tasks;
    for w in 0..workflows {
        let n = if w + 1 == workflows { left } else { rng.random_range(1..left) };
        left -= n;
        let rts: Vec<(u64, u64)> = (0..n).map(|_| (rng.random_range(1..=3) * 5, rng.random_range(1..=2) * 5)).collect();
        let mut edges: Vec<(u32, u32)> = (1..n as u32).map(|c| (rng.random_range(0..c), c)).collect();
        for c in 2..n as u32 {
            for p in 0..c {
                if rng.random_bool(0.3) {
                    edges.push((p, c));
                }
            }
        }
        let last = n as u32 - 1;
        for p in 0..last {
            if !edges.iter().any(|e| e.0 == p) {
                edges.push((p, last));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        let mut s = spec(w as u32, &rts, &edges);
        s.arrival_s = rng.random_range(0..3) * 5;
        specs.push(s);
    }
    let budget = rng.random_range(1..=3);
    build_instance(&Workload { workflows: specs }, &system(1, 1, 2), &settings(budget, Some(slots / 2))).ok()
}

#[test]
fn slot_rounding_and_deadlines() {
    let one = spec(1, &[(5, 5)], &[]);
    let inst = build_instance(&Workload { workflows: vec![one] }, &system(1, 0, 2), &settings(1, None)).unwrap();
    assert_eq!(inst.tasks[0].runtimes, vec![1, 1]);
    assert_eq!(inst.slots, 2);

    let chain = spec(1, &[(5, 5), (5, 5)], &[(0, 1)]);
    let inst = build_instance(&Workload { workflows: vec![chain] }, &system(1, 0, 2), &settings(1, None)).unwrap();
    assert_eq!((inst.workflows[0].arrival, inst.workflows[0].critical_path, inst.workflows[0].deadline), (1, 2, 2));

    let a = spec(1, &[(5, 5)], &[]);
    let mut b = spec(2, &[(5, 5)], &[]);
    b.arrival_s = 30;
    let inst = build_instance(&Workload { workflows: vec![a, b] }, &system(1, 0, 2), &settings(1, None)).unwrap();
    assert_eq!(inst.workflows[1].arrival - inst.workflows[0].arrival, 6);

    let rts = spec(1, &[(12, 13), (2, 7)], &[(0, 1)]);
    let inst = build_instance(&Workload { workflows: vec![rts] }, &system(1, 1, 2), &settings(2, None)).unwrap();
    assert_eq!(inst.tasks[0].runtimes, vec![2, 3]);
    assert_eq!(inst.tasks[1].runtimes, vec![1, 1]);
}

#[test]
fn horizon_and_budget_errors() {
    let w = Workload { workflows: vec![spec(1, &[(20, 20), (20, 20)], &[(0, 1)])] };
    let err = build_instance(&w, &system(1, 0, 2), &settings(1, Some(1))).unwrap_err();
    assert_eq!(err, MipError::HorizonTooShort { needed: 8, slots: 2 });
    let err = build_instance(&w, &system(0, 1, 5), &settings(1, None)).unwrap_err();
    assert_eq!(err, MipError::NoAffordableResource(1));
    assert_eq!(build_instance(&Workload::default(), &system(1, 0, 2), &settings(1, None)), Err(MipError::Empty));
}

#[test]
fn value_function_examples() {
    assert_eq!(value_function(5, 5), 1);
    assert_eq!(value_function(5, 7), -2);
    assert_eq!(value_function(5, 1), 1);
}

#[test]
fn lp_export_counts() {
    let one = spec(1, &[(5, 5)], &[]);
    let inst = build_instance(&Workload { workflows: vec![one] }, &system(1, 0, 2), &settings(1, None)).unwrap();
    let text = export_lp(&inst).unwrap();
    let s = parse_lp_summary(&text).unwrap();
    assert_eq!(s.per_family[1], 1);
    assert!(text.contains("x_0_0_2"));
    assert_eq!(s.binaries, 2 + 1 + 2);
    assert!(text.contains(" c9_1: + y_0_1 <= 1"));
    assert_eq!(s, lp_summary(&inst));

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        if let Some(inst) = random_instance(&mut rng, 6, 12) {
            let text = export_lp(&inst).unwrap();
            assert_eq!(parse_lp_summary(&text).unwrap(), lp_summary(&inst));
        }
    }
    let mut empty = inst.clone();
    empty.tasks.clear();
    assert_eq!(export_lp(&empty), Err(MipError::Empty));
}

#[test]
fn forced_optimum() {
    let one = spec(1, &[(5, 5)], &[]);
    let inst = build_instance(&Workload { workflows: vec![one] }, &system(1, 0, 2), &settings(1, None)).unwrap();
    let (sol, _) = solve_exact(&inst, &SolveLimits::default()).unwrap();
    assert_eq!(sol.starts, vec![Start { task: 0, resource: 0, slot: 1 }]);
    assert_eq!(sol.profit, 1);
    assert!(check_solution(&inst, &sol).is_empty());
}

#[test]
fn two_tasks_one_resource() {
    let a = spec(1, &[(5, 5)], &[]);
    let b = spec(2, &[(5, 5)], &[]);
    let inst = build_instance(&Workload { workflows: vec![a, b] }, &system(1, 0, 2), &settings(1, None)).unwrap();
    let (sol, _) = solve_exact(&inst, &SolveLimits::default()).unwrap();
    assert_eq!(sol.profit, 0);
    assert_eq!(exhaustive(&inst), Some(0));
}

#[test]
fn tight_budget_avoids_expensive_resource() {
    let w = spec(1, &[(10, 5), (10, 5)], &[(0, 1)]);
    let inst = build_instance(&Workload { workflows: vec![w] }, &system(1, 1, 3), &settings(2, Some(3))).unwrap();
    let (sol, _) = solve_exact(&inst, &SolveLimits::default()).unwrap();
    assert!(sol.starts.iter().all(|s| inst.resources[s.resource].cost <= 2));
    assert_eq!(Some(sol.profit), exhaustive(&inst));
}

#[test]
fn matches_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 25 {
        let Some(inst) = random_instance(&mut rng, 3, 6) else { continue };
        let oracle = exhaustive(&inst);
        match solve_exact(&inst, &SolveLimits::default()) {
            Ok((sol, _)) => {
                assert_eq!(Some(sol.profit), oracle, "{inst:?}");
                assert!(check_solution(&inst, &sol).is_empty());
            }
            Err(MipError::Infeasible) => assert_eq!(oracle, None),
            Err(e) => panic!("{e}"),
        }
        checked += 1;
    }
}

#[test]
fn detects_injected_faults() {
    let w = spec(1, &[(5, 5), (5, 5)], &[(0, 1)]);
    let inst = build_instance(&Workload { workflows: vec![w] }, &system(1, 1, 2), &settings(3, None)).unwrap();
    let (sol, _) = solve_exact(&inst, &SolveLimits::default()).unwrap();
    let mut twice = sol.clone();
    twice.starts.push(Start { task: 0, resource: 1, slot: 2 });
    let v = check_solution(&inst, &twice);
    assert!(v.iter().any(|v| v.constraint == Constraint::StartOnce), "{v:?}");

    let mut idle = sol.clone();
    let k = sol.starts[0].resource;
    idle.active[k][0] = 0;
    let v = check_solution(&inst, &idle);
    assert!(v.iter().any(|v| v.constraint == Constraint::ActiveState), "{v:?}");

    let mut order = sol.clone();
    order.starts[1].slot = order.starts[0].slot;
    order.starts[1].resource = 1 - order.starts[0].resource;
    assert!(check_solution(&inst, &order).iter().any(|v| v.constraint == Constraint::Precedence));
}

#[test]
fn limits_are_enforced() {
    let w = spec(1, &[(5, 5); 9], &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 8)]);
    let inst = build_instance(&Workload { workflows: vec![w] }, &system(2, 0, 2), &settings(2, None)).unwrap();
    assert!(matches!(solve_exact(&inst, &SolveLimits::default()), Err(MipError::LimitExceeded(_))));
}

#[test]
fn compare_against_outcomes() {
    use crate::metrics::WorkflowOutcome;
    let a = spec(1, &[(5, 5), (10, 10)], &[(0, 1)]);
    let inst = build_instance(&Workload { workflows: vec![a] }, &system(1, 0, 2), &settings(1, None)).unwrap();
    let (sol, _) = solve_exact(&inst, &SolveLimits::default()).unwrap();
    let same = OutcomeRecord {
        user: crate::model::UserId(0),
        workflow: WorkflowId(1),
        outcome: WorkflowOutcome { arrival: 0, first_start: 0, last_finish: 15, ideal_makespan: 15 },
    };
    let pairs = compare(&inst, &sol, std::slice::from_ref(&same)).unwrap();
    assert_eq!(pairs[0].optimal, pairs[0].heuristic);
    assert_eq!(realized_profit(&inst, std::slice::from_ref(&same)).unwrap(), sol.profit);
    let mut late = same.clone();
    late.outcome.last_finish = 30;
    assert!(compare(&inst, &sol, &[late]).unwrap()[0].heuristic > 1.0);
    let mut other = same.clone();
    other.workflow = WorkflowId(7);
    assert!(matches!(compare(&inst, &sol, &[other]), Err(MipError::WorkloadMismatch(_))));
}

#[test]
fn round_trips_to_workload() {
    let mut a = spec(1, &[(5, 5), (12, 9)], &[(0, 1)]);
    a.arrival_s = 10;
    let inst = build_instance(&Workload { workflows: vec![a] }, &system(1, 1, 2), &settings(3, None)).unwrap();
    let w = inst.to_workload(crate::model::UserId(0));
    assert_eq!(w.workflows[0].arrival_s, 10);
    assert_eq!(w.workflows[0].tasks[1].runtimes["Small"], 10);
    let again = build_instance(&w, &system(1, 1, 2), &settings(3, None)).unwrap();
    assert_eq!(again, inst);
    let json = serde_json::to_string(&inst).unwrap();
    assert_eq!(serde_json::from_str::<MipInstance>(&json).unwrap(), inst);
}
