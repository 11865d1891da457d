//! Throughput-based resource profile (steps S1 and S2).

use super::{PfaError, Smoothing, ThroughputHistory};
use crate::scalar::{floor_count, Scalar};

/// Average tasks completed per allocated resource in one interval.
pub fn throughput<S: Scalar>(completed: u32, allocated: u32) -> S {
    if allocated > 0 {
        S::ratio(u64::from(completed), u64::from(allocated))
    } else {
        S::zero()
    }
}

/// Per-type throughputs of one interval.
pub fn throughputs<S: Scalar>(completed: &[u32], allocated: &[u32]) -> Vec<S> {
    completed.iter().zip(allocated).map(|(&c, &n)| throughput(c, n)).collect()
}

/// Normalizes throughputs into ratios summing to one, or all zeros.
pub fn instant_ratios<S: Scalar>(tau: &[S]) -> Vec<S> {
    let total = tau.iter().fold(S::zero(), |a, &b| a + b);
    if total > S::zero() {
        tau.iter().map(|&t| t / total).collect()
    } else {
        vec![S::zero(); tau.len()]
    }
}

pub fn equal_share<S: Scalar>(types: usize) -> Vec<S> {
    vec![S::one() / S::from_count(types as u64); types]
}

/// Smoothed resource-type ratios. `previous` is the last smoothed value,
/// used by the EWMA recursion. Falls back to an equal share when a type has
/// no usable throughput.
pub fn smooth_ratios<S: Scalar>(history: &ThroughputHistory, smoothing: &Smoothing, previous: &[S]) -> Vec<S> {
    let types = history.types();
    match *smoothing {
        Smoothing::MovingAverage { depth } => {
            let mut sums = vec![S::zero(); types];
            let mut samples = 0u64;
            for counts in history.recent(depth) {
                let rho_hat = instant_ratios::<S>(&throughputs(&counts.completed, &counts.allocated));
                if rho_hat.iter().fold(S::zero(), |a, &b| a + b) > S::zero() {
                    samples += 1;
                    for (s, r) in sums.iter_mut().zip(rho_hat) {
                        *s = *s + r;
                    }
                }
            }
            if samples == 0 || sums.iter().any(|&s| s <= S::zero()) {
                return equal_share(types);
            }
            let n = S::from_count(samples);
            sums.into_iter().map(|s| s / n).collect()
        }
        Smoothing::Ewma { alpha } => {
            let Some(counts) = history.latest() else {
                return equal_share(types);
            };
            let rho_hat = instant_ratios::<S>(&throughputs(&counts.completed, &counts.allocated));
            if rho_hat.iter().any(|&r| r <= S::zero()) {
                return equal_share(types);
            }
            let alpha: S = S::from_f64(alpha).expect("alpha representable");
            previous.iter().zip(rho_hat).map(|(&prev, cur)| alpha * prev + (S::one() - alpha) * cur).collect()
        }
    }
}

/// Supply achievable with the profile `rho` under `budget`.
#[derive(Clone, Debug, PartialEq)]
pub struct Profile<S> {
    /// Budget fraction per type.
    pub nu: Vec<S>,
    /// Instances per type affordable within the profile.
    pub mu_hat: Vec<u64>,
    /// Total of `mu_hat`.
    pub mu_tilde: u64,
}

pub fn profile_supply<S: Scalar>(rho: &[S], costs: &[u64], budget: u64) -> Result<Profile<S>, PfaError> {
    let max_cost = costs.iter().copied().max().unwrap_or(0);
    if budget < max_cost {
        return Err(PfaError::BudgetTooSmall { budget, max_cost });
    }
    let weighted: Vec<S> = rho.iter().zip(costs).map(|(&r, &q)| S::from_count(q) * r).collect();
    let total = weighted.iter().fold(S::zero(), |a, &b| a + b);
    if total <= S::zero() {
        return Ok(Profile { nu: vec![S::zero(); rho.len()], mu_hat: vec![0; rho.len()], mu_tilde: 0 });
    }
    let nu: Vec<S> = weighted.iter().map(|&w| w / total).collect();
    // b * nu_i / q_i simplifies to b * rho_i / sum(q * rho), which avoids a
    // multiply-then-divide by q_i in inexact scalars.
    let b = S::from_count(budget);
    let mu_hat: Vec<u64> = rho.iter().map(|&r| floor_count(b * r / total)).collect();
    let mu_tilde = mu_hat.iter().sum();
    Ok(Profile { nu, mu_hat, mu_tilde })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64 as Q;

    fn q(n: i64, d: i64) -> Q {
        Q::new(n, d)
    }

    #[test]
    fn throughput_examples() {
        assert_eq!(throughput::<f64>(10, 5), 2.0);
        assert_eq!(throughput::<f64>(4, 0), 0.0);
        assert_eq!(throughput::<f64>(0, 3), 0.0);
    }

    #[test]
    fn instant_ratio_examples() {
        assert_eq!(instant_ratios(&[2.0, 2.0]), vec![0.5, 0.5]);
        assert_eq!(instant_ratios(&[1.0, 3.0]), vec![0.25, 0.75]);
        assert_eq!(instant_ratios(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn smoothing_examples() {
        let empty = ThroughputHistory::new(2, 10);
        let ma = Smoothing::MovingAverage { depth: 3 };
        assert_eq!(smooth_ratios::<Q>(&empty, &ma, &[]), vec![q(1, 2), q(1, 2)]);

        // rho_hat (1/4, 3/4) then (3/4, 1/4)
        let mut h = ThroughputHistory::new(2, 10);
        h.push_counts(&[1, 3], &[1, 1]);
        h.push_counts(&[3, 1], &[1, 1]);
        let ma1 = Smoothing::MovingAverage { depth: 1 };
        assert_eq!(smooth_ratios::<Q>(&h, &ma1, &[]), vec![q(1, 2), q(1, 2)]);
        // depth 0 only sees the latest interval
        let ma0 = Smoothing::MovingAverage { depth: 0 };
        assert_eq!(smooth_ratios::<Q>(&h, &ma0, &[]), vec![q(3, 4), q(1, 4)]);

        let mut h = ThroughputHistory::new(2, 10);
        h.push_counts(&[4, 0], &[2, 2]);
        let ewma = Smoothing::Ewma { alpha: 0.8 };
        assert_eq!(smooth_ratios::<f64>(&h, &ewma, &[0.5, 0.5]), vec![0.5, 0.5]);
    }

    #[test]
    fn ewma_recursion() {
        let mut h = ThroughputHistory::new(2, 10);
        h.push_counts(&[1, 3], &[1, 1]);
        let ewma = Smoothing::Ewma { alpha: 0.5 };
        assert_eq!(smooth_ratios::<Q>(&h, &ewma, &[q(1, 2), q(1, 2)]), vec![q(3, 8), q(5, 8)]);
    }

    #[test]
    fn ma_skips_idle_intervals_but_falls_back_on_zero_type() {
        let mut h = ThroughputHistory::new(2, 10);
        h.push_counts(&[2, 2], &[1, 1]);
        h.push_counts(&[0, 0], &[1, 1]);
        let ma = Smoothing::MovingAverage { depth: 5 };
        assert_eq!(smooth_ratios::<Q>(&h, &ma, &[]), vec![q(1, 2), q(1, 2)]);
        let mut h = ThroughputHistory::new(2, 10);
        h.push_counts(&[0, 5], &[1, 1]);
        assert_eq!(smooth_ratios::<Q>(&h, &ma, &[]), vec![q(1, 2), q(1, 2)]);
    }

    #[test]
    fn profile_examples() {
        let p = profile_supply(&[q(1, 2), q(1, 2)], &[1, 5], 12).unwrap();
        assert_eq!(p.nu, vec![q(1, 6), q(5, 6)]);
        assert_eq!((p.mu_hat.clone(), p.mu_tilde), (vec![2, 2], 4));
        let p = profile_supply(&[q(1, 1), q(0, 1)], &[1, 5], 10).unwrap();
        assert_eq!(p.nu, vec![q(1, 1), q(0, 1)]);
        assert_eq!((p.mu_hat, p.mu_tilde), (vec![10, 0], 10));
        let p = profile_supply(&[0.5, 0.5], &[1, 1], 4).unwrap();
        assert_eq!((p.mu_hat, p.mu_tilde), (vec![2, 2], 4));
        assert_eq!(profile_supply(&[0.5, 0.5], &[1, 5], 4), Err(PfaError::BudgetTooSmall { budget: 4, max_cost: 5 }));
    }

    #[test]
    fn f64_profile_matches_exact_on_reference_budgets() {
        for budget in [60u64, 80, 100, 120] {
            for (a, b) in [(1, 1), (1, 3), (2, 5), (7, 3)] {
                let exact = profile_supply(&[q(a, a + b), q(b, a + b)], &[1, 5], budget).unwrap();
                let fp = a as f64 / (a + b) as f64;
                let float = profile_supply(&[fp, 1.0 - fp], &[1, 5], budget).unwrap();
                assert_eq!(exact.mu_hat, float.mu_hat, "budget {budget} ratio {a}:{b}");
            }
        }
    }
}
