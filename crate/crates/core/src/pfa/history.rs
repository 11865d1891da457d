use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// Completed tasks and allocated resources per type over one interval.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalCounts {
    pub completed: Vec<u32>,
    pub allocated: Vec<u32>,
}

/// Append-only per-user record of interval counts. Only the most recent
/// `window` entries are retained.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThroughputHistory {
    types: usize,
    window: usize,
    entries: VecDeque<IntervalCounts>,
    recorded: usize,
}

/// Minimum number of retained intervals.
pub const MIN_WINDOW: usize = 50;

impl ThroughputHistory {
    /// A history able to serve moving averages over `depth + 1` intervals.
    pub fn new(types: usize, depth: usize) -> Self {
        ThroughputHistory { types, window: depth.max(MIN_WINDOW) + 1, entries: VecDeque::new(), recorded: 0 }
    }

    pub fn types(&self) -> usize {
        self.types
    }

    pub fn push(&mut self, counts: IntervalCounts) {
        assert_eq!(counts.completed.len(), self.types, "completed counts per type");
        assert_eq!(counts.allocated.len(), self.types, "allocated counts per type");
        if self.entries.len() == self.window {
            self.entries.pop_front();
        }
        self.entries.push_back(counts);
        self.recorded += 1;
    }

    /// Convenience for tests and replays.
    pub fn push_counts(&mut self, completed: &[u32], allocated: &[u32]) {
        self.push(IntervalCounts { completed: completed.to_vec(), allocated: allocated.to_vec() });
    }

    /// Number of intervals ever recorded.
    pub fn recorded(&self) -> usize {
        self.recorded
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The most recent interval.
    pub fn latest(&self) -> Option<&IntervalCounts> {
        self.entries.back()
    }

    /// The latest `depth + 1` intervals, newest first.
    pub fn recent(&self, depth: usize) -> impl Iterator<Item = &IntervalCounts> + '_ {
        self.entries.iter().rev().take(depth + 1)
    }
}
