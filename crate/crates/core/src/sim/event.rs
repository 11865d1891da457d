use std::cmp::Ordering;

use crate::model::ResourceId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    TaskFinish(ResourceId),
    BootComplete(ResourceId),
    /// Index into the workload.
    Arrival(usize),
    AutoscaleTick,
    BillingBoundary,
    /// A planned start was reached; only triggers placement.
    PlanWake,
}

impl EventKind {
    pub fn precedence(&self) -> u8 {
        match self {
            EventKind::TaskFinish(_) => 0,
            EventKind::BootComplete(_) => 1,
            EventKind::Arrival(_) => 2,
            EventKind::AutoscaleTick => 3,
            EventKind::BillingBoundary => 4,
            EventKind::PlanWake => 5,
        }
    }
}

/// Ordered by time, then kind precedence, then insertion id.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub time: u64,
    pub kind: EventKind,
    pub id: u64,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.kind.precedence(), self.id).cmp(&(other.time, other.kind.precedence(), other.id))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
