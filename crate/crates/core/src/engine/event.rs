use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::failure::FailureKind;
use crate::ids::{AttemptRef, JobId, NodeId, RackId};
use crate::time::SimTime;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    JobSubmitted { job: JobId },
    AttemptFinish { attempt: AttemptRef },
    AttemptFail { attempt: AttemptRef },
    Heartbeat { node: NodeId },
    HeartbeatExpiry { node: NodeId },
    /// Injection of entry `entry` of the compiled failure plan.
    Fault { entry: usize, fault: FailureKind },
    PartitionEnd { rack: RackId },
    TimeoutCheck { attempt: AttemptRef },
    SchedulerTick,
    /// JobTracker heartbeat-cycle boundary.
    JobTrackerCycle,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub at: SimTime,
    pub seq: u64,
    pub kind: EventKind,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap.
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-queue on `(at, seq)`; `seq` is the insertion counter.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rejects events in the past relative to `clock`.
    pub fn schedule(&mut self, clock: SimTime, at: SimTime, kind: EventKind) -> Result<u64> {
        if at < clock {
            return Err(Error::EventInPast { at, clock });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { at, seq, kind });
        Ok(seq)
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.at)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
