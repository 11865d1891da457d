//! Matching the affordable supply to the predicted demand (step S5).

/// Targets per type for predicted demand `sigma`, given the affordable
/// supply `mu_hat` (totalling `mu_tilde`).
pub fn reconcile(mu_hat: &[u64], mu_tilde: u64, sigma: u64, costs: &[u64], budget: u64) -> Vec<u64> {
    reconcile_bounded(mu_hat, mu_tilde, sigma, costs, budget, None)
}

/// As [`reconcile`], but inflation never grows a type past `caps`.
pub fn reconcile_bounded(
    mu_hat: &[u64],
    mu_tilde: u64,
    sigma: u64,
    costs: &[u64],
    budget: u64,
    caps: Option<&[u64]>,
) -> Vec<u64> {
    use std::cmp::Ordering::*;
    match mu_tilde.cmp(&sigma) {
        Equal => mu_hat.to_vec(),
        Greater => mu_hat.iter().map(|&m| (sigma * m).div_ceil(mu_tilde)).collect(),
        Less => inflate(mu_hat, sigma, costs, budget, caps),
    }
}

fn inflate(mu_hat: &[u64], sigma: u64, costs: &[u64], budget: u64, caps: Option<&[u64]>) -> Vec<u64> {
    let cap = |i: usize| caps.map_or(u64::MAX, |c| c[i]);
    let mut order: Vec<usize> = (0..costs.len()).collect();
    order.sort_by_key(|&i| (costs[i], i));
    let mut mu = mu_hat.to_vec();
    let mut spent: u64 = mu.iter().zip(costs).map(|(m, q)| m * q).sum();
    let mut total: u64 = mu.iter().sum();

    for &i in order.iter().take(order.len().saturating_sub(1)) {
        while total < sigma && spent + costs[i] <= budget && mu[i] < cap(i) {
            mu[i] += 1;
            spent += costs[i];
            total += 1;
        }
    }

    while total < sigma {
        let mut swapped = false;
        for k in (1..order.len()).rev() {
            let (hi, lo) = (order[k], order[k - 1]);
            let gain = costs[hi] / costs[lo];
            if mu[hi] == 0 || gain < 2 || mu[lo] + gain > cap(lo) {
                continue;
            }
            mu[hi] -= 1;
            mu[lo] += gain;
            spent = spent - costs[hi] + gain * costs[lo];
            total = total - 1 + gain;
            swapped = true;
            break;
        }
        if !swapped {
            break;
        }
    }
    debug_assert!(spent <= budget);
    mu
}
