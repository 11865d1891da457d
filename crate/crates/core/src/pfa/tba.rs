//! Token-based demand prediction (steps S3 and S4).

use serde::{Serialize, Serializer};

use super::{throughputs, Smoothing, ThroughputHistory};
use crate::model::Dag;
use crate::scalar::{ceil_count, Scalar};

/// Number of token waves to simulate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LookupDepth {
    Finite(u64),
    Unbounded,
}

impl LookupDepth {
    fn allows(self, wave: u64) -> bool {
        match self {
            LookupDepth::Finite(z) => wave <= z,
            LookupDepth::Unbounded => true,
        }
    }

    pub fn finite(self) -> Option<u64> {
        match self {
            LookupDepth::Finite(z) => Some(z),
            LookupDepth::Unbounded => None,
        }
    }
}

/// Serialized as a number, or `null` when unbounded.
impl Serialize for LookupDepth {
    fn serialize<Se: Serializer>(&self, s: Se) -> Result<Se::Ok, Se::Error> {
        self.finite().serialize(s)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TokenEstimate {
    /// Total tokenized tasks over the visited waves.
    pub theta: u64,
    /// Largest wave.
    pub lambda: u64,
    pub waves: u64,
}

/// Moves tokens through `dag` wave by wave. Wave 1 holds the roots; a task
/// joins the next wave once all of its parents hold tokens.
pub fn tba_propagate(dag: &Dag, depth: LookupDepth) -> TokenEstimate {
    let mut waiting = dag.parent_count.clone();
    let mut wave: Vec<usize> = dag.roots().collect();
    let mut est = TokenEstimate::default();
    while !wave.is_empty() && depth.allows(est.waves + 1) {
        est.waves += 1;
        est.theta += wave.len() as u64;
        est.lambda = est.lambda.max(wave.len() as u64);
        let mut next = Vec::new();
        for &v in &wave {
            for &c in &dag.children[v] {
                waiting[c] -= 1;
                if waiting[c] == 0 {
                    next.push(c);
                }
            }
        }
        wave = next;
    }
    est
}

/// Sum and sample count of the throughputs that feed the depth and demand
/// estimates; `None` when they total zero.
fn throughput_sample<S: Scalar>(history: &ThroughputHistory, smoothing: &Smoothing) -> Option<(S, u64)> {
    let (mut sum, mut count) = (S::zero(), 0u64);
    let depth = match *smoothing {
        Smoothing::MovingAverage { depth } => depth,
        Smoothing::Ewma { .. } => 0,
    };
    for counts in history.recent(depth) {
        let tau: Vec<S> = throughputs(&counts.completed, &counts.allocated);
        let total = tau.iter().fold(S::zero(), |a, &b| a + b);
        if total > S::zero() {
            sum = sum + total;
            count += tau.len() as u64;
        }
    }
    (count > 0).then_some((sum, count))
}

/// Mean per-type throughput used for prediction, if any was observed.
pub fn mean_throughput<S: Scalar>(history: &ThroughputHistory, smoothing: &Smoothing) -> Option<S> {
    throughput_sample::<S>(history, smoothing).map(|(sum, n)| sum / S::from_count(n))
}

/// `previous` is the last finite depth (initially 1).
pub fn lookup_depth<S: Scalar>(history: &ThroughputHistory, smoothing: &Smoothing, previous: u64) -> LookupDepth {
    let Some(mean) = mean_throughput::<S>(history, smoothing) else {
        return LookupDepth::Unbounded;
    };
    let z = match *smoothing {
        Smoothing::MovingAverage { .. } => mean,
        Smoothing::Ewma { alpha } => {
            let alpha: S = S::from_f64(alpha).expect("alpha representable");
            alpha * S::from_count(previous) + (S::one() - alpha) * mean
        }
    };
    LookupDepth::Finite(ceil_count(z).max(1))
}

/// Resources needed to process the `theta` tokenized tasks within one
/// interval, or the widest wave when no throughput was observed.
pub fn predict_demand<S: Scalar>(est: &TokenEstimate, history: &ThroughputHistory, smoothing: &Smoothing) -> u64 {
    match throughput_sample::<S>(history, smoothing) {
        Some((sum, n)) => ceil_count(S::from_count(est.theta) * S::from_count(n) / sum),
        None => est.lambda,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64 as Q;

    #[test]
    fn token_examples() {
        let chain = Dag::from_edges(3, &[(0, 1), (1, 2)]);
        let e = tba_propagate(&chain, LookupDepth::Finite(2));
        assert_eq!((e.theta, e.lambda), (2, 1));
        let diamond = Dag::from_edges(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]);
        let e = tba_propagate(&diamond, LookupDepth::Unbounded);
        assert_eq!((e.theta, e.lambda, e.waves), (4, 2, 3));
        let e = tba_propagate(&Dag::default(), LookupDepth::Unbounded);
        assert_eq!((e.theta, e.lambda), (0, 0));
        // depth one is the current frontier
        let e = tba_propagate(&diamond, LookupDepth::Finite(1));
        assert_eq!((e.theta, e.lambda), (1, 1));
    }

    #[test]
    fn depth_examples() {
        let ma = Smoothing::MovingAverage { depth: 4 };
        let empty = ThroughputHistory::new(2, 4);
        assert_eq!(lookup_depth::<f64>(&empty, &ma, 1), LookupDepth::Unbounded);

        let mut h = ThroughputHistory::new(2, 4);
        h.push_counts(&[2, 4], &[1, 1]);
        assert_eq!(lookup_depth::<Q>(&h, &ma, 1), LookupDepth::Finite(3));

        let ewma = Smoothing::Ewma { alpha: 0.7 };
        let mut h = ThroughputHistory::new(2, 4);
        h.push_counts(&[4, 4], &[1, 1]);
        assert_eq!(lookup_depth::<f64>(&h, &ewma, 2), LookupDepth::Finite(3));
        let mut idle = h.clone();
        idle.push_counts(&[0, 0], &[1, 1]);
        assert_eq!(lookup_depth::<f64>(&idle, &ewma, 2), LookupDepth::Unbounded);
    }

    #[test]
    fn demand_examples() {
        let ma = Smoothing::MovingAverage { depth: 4 };
        let mut h = ThroughputHistory::new(2, 4);
        h.push_counts(&[2, 2], &[1, 1]);
        let est = |theta, lambda| TokenEstimate { theta, lambda, waves: 1 };
        assert_eq!(predict_demand::<Q>(&est(8, 1), &h, &ma), 4);
        assert_eq!(predict_demand::<Q>(&est(7, 1), &h, &ma), 4);
        assert_eq!(predict_demand::<f64>(&est(8, 3), &ThroughputHistory::new(2, 4), &ma), 3);
    }
}
