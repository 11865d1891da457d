use std::io;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::metrics::WorkflowOutcome;
use crate::model::{ResourceId, SystemConfig, UserConfig, UserId, WorkflowId};
use crate::pfa::PfaDiagnostic;
use crate::plan::PlanDumpLine;

/// One row of the event log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time_s: u64,
    pub event: String,
    pub user: Option<UserId>,
    pub workflow: Option<WorkflowId>,
    pub task: Option<u32>,
    pub resource: Option<ResourceId>,
    pub rtype: Option<String>,
    pub detail: String,
}

/// State of one user over one billing interval.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalSnapshot {
    pub interval: usize,
    pub start_s: u64,
    pub user: UserId,
    /// Running plus eligible tasks at the interval start.
    pub demand: u32,
    /// Reserved resources during the interval.
    pub supply: u32,
    pub reserved: Vec<u32>,
    pub cost: u64,
    /// Resource-seconds spent running tasks.
    pub busy_seconds: u64,
    /// Tasks finished per type.
    pub completed: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub user: UserId,
    pub workflow: WorkflowId,
    pub outcome: WorkflowOutcome,
}

/// Wall-clock time of one policy invocation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecisionTiming {
    pub tick: usize,
    pub time_s: u64,
    pub user: UserId,
    pub total: Duration,
    pub steps: Vec<(&'static str, Duration)>,
}

#[derive(Clone, Debug)]
pub struct Trace {
    pub system: SystemConfig,
    pub users: Vec<UserConfig>,
    pub policy: String,
    pub seed: u64,
    pub events: Vec<EventRecord>,
    pub snapshots: Vec<IntervalSnapshot>,
    pub outcomes: Vec<OutcomeRecord>,
    pub decisions: Vec<DecisionTiming>,
    pub diagnostics: Vec<PfaDiagnostic>,
    pub plans: Vec<PlanDumpLine>,
    pub end_s: u64,
}

#[derive(Serialize)]
struct SnapshotRow {
    interval: usize,
    user: UserId,
    demand: u32,
    supply: u32,
    busy: u64,
    allocated_cost: u64,
}

#[derive(Serialize, Deserialize)]
struct OutcomeRow {
    user: UserId,
    workflow: WorkflowId,
    arrival: u64,
    first_start: u64,
    last_finish: u64,
    ideal_makespan: u64,
}

/// Reads rows written by [`Trace::write_outcomes`].
pub fn read_outcomes<R: io::Read>(r: R) -> csv::Result<Vec<OutcomeRecord>> {
    csv::Reader::from_reader(r)
        .deserialize::<OutcomeRow>()
        .map(|row| {
            row.map(|o| OutcomeRecord {
                user: o.user,
                workflow: o.workflow,
                outcome: WorkflowOutcome {
                    arrival: o.arrival,
                    first_start: o.first_start,
                    last_finish: o.last_finish,
                    ideal_makespan: o.ideal_makespan,
                },
            })
        })
        .collect()
}

#[derive(Serialize)]
struct TimingRow {
    tick: usize,
    time_s: u64,
    user: UserId,
    total_s: f64,
    steps: String,
}

impl Trace {
    pub fn write_events<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for e in &self.events {
            out.serialize(e)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_snapshots<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for s in &self.snapshots {
            out.serialize(SnapshotRow {
                interval: s.interval,
                user: s.user,
                demand: s.demand,
                supply: s.supply,
                busy: s.busy_seconds,
                allocated_cost: s.cost,
            })?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_outcomes<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for o in &self.outcomes {
            out.serialize(OutcomeRow {
                user: o.user,
                workflow: o.workflow,
                arrival: o.outcome.arrival,
                first_start: o.outcome.first_start,
                last_finish: o.outcome.last_finish,
                ideal_makespan: o.outcome.ideal_makespan,
            })?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_timings<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for d in &self.decisions {
            let steps: Vec<String> = d.steps.iter().map(|(n, t)| format!("{n}={:.9}", t.as_secs_f64())).collect();
            out.serialize(TimingRow {
                tick: d.tick,
                time_s: d.time_s,
                user: d.user,
                total_s: d.total.as_secs_f64(),
                steps: steps.join(";"),
            })?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_json_lines<W: io::Write, T: Serialize>(rows: &[T], mut w: W) -> io::Result<()> {
        for r in rows {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Event log and snapshots as CSV. Depends only on the simulated
    /// behaviour, not on timings.
    pub fn fingerprint(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_events(&mut buf).expect("in-memory write");
        self.write_snapshots(&mut buf).expect("in-memory write");
        buf
    }

    pub fn total_cost(&self) -> u64 {
        self.snapshots.iter().map(|s| s.cost).sum()
    }
}
