use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::model::{validate_workflow, ValidationError, Workload};

/// Arrivals per second keeping `capacity` machines `utilization` busy when
/// workflows need `mean_work` machine-seconds each.
pub fn arrival_rate(utilization: f64, capacity: u32, mean_work: f64) -> f64 {
    utilization * f64::from(capacity) / mean_work
}

/// Poisson arrival instants (whole seconds) for `count` workflows; the
/// first arrives at zero.
pub fn poisson_times(count: usize, rate: f64, seed: u64) -> Vec<u64> {
    assert!(rate > 0.0 && rate.is_finite(), "arrival rate must be positive");
    let exp = Exp::new(rate).expect("positive rate");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0.0f64;
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        if k > 0 {
            t += exp.sample(&mut rng);
        }
        out.push(t.floor() as u64);
    }
    out
}

/// Arrival times for `workload` at target `utilization`, using each
/// workflow's total fastest runtime as its work.
pub fn poisson_arrivals(
    workload: &Workload,
    types: &[String],
    utilization: f64,
    capacity: u32,
    seed: u64,
) -> Result<Vec<u64>, ValidationError> {
    assert!(utilization > 0.0 && utilization < 1.0, "utilization must be in (0, 1)");
    if workload.workflows.is_empty() {
        return Ok(Vec::new());
    }
    let mut work = 0u64;
    for spec in &workload.workflows {
        work += validate_workflow(spec, types)?.total_min_runtime();
    }
    let mean = work as f64 / workload.workflows.len() as f64;
    Ok(poisson_times(workload.workflows.len(), arrival_rate(utilization, capacity, mean), seed))
}

/// Overwrites arrival times in place, keeping workflow order.
pub fn assign_arrivals(
    workload: &mut Workload,
    types: &[String],
    utilization: f64,
    capacity: u32,
    seed: u64,
) -> Result<(), ValidationError> {
    let times = poisson_arrivals(workload, types, utilization, capacity, seed)?;
    for (spec, t) in workload.workflows.iter_mut().zip(times) {
        spec.arrival_s = t;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_matches_reference_mix() {
        let r = arrival_rate(0.2, 64, 467.0);
        assert!((r - 0.0274).abs() < 5e-5, "{r}");
        assert!(arrival_rate(1e-9, 64, 467.0) < 1e-9);
    }

    #[test]
    fn deterministic_and_monotone() {
        let a = poisson_times(200, 0.03, 11);
        assert_eq!(a, poisson_times(200, 0.03, 11));
        assert_ne!(a, poisson_times(200, 0.03, 12));
        assert_eq!(a[0], 0);
        assert!(a.windows(2).all(|w| w[0] <= w[1]));
        let mean_gap = a[199] as f64 / 199.0;
        assert!((mean_gap - 1.0 / 0.03).abs() < 8.0, "{mean_gap}");
    }
}
