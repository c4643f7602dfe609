use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterState;
use crate::ids::{AttemptRef, JobId, NodeId, TaskId};
use crate::predictor::FeatureVector;
use crate::scheduler::SchedulerDecision;
use crate::time::SimTime;
use crate::workload::{AttemptStatus, Job, JobStatus, ResourceProfile, Task, TaskAttempt, TaskKind, TaskStatus};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Limits {
    pub attempt_timeout: SimTime,
    pub max_map_attempts: u32,
    pub max_reduce_attempts: u32,
    pub remote_read_factor: f64,
}

/// Everything a scheduler may look at. Owned and mutated by the engine only.
#[derive(Clone, Debug)]
pub struct SimState {
    pub clock: SimTime,
    pub seed: u64,
    pub cluster: ClusterState,
    pub jobs: Vec<Job>,
    pub tasks: Vec<Task>,
    /// Schedulable (PENDING and barrier-free) tasks per job.
    pub pending: BTreeMap<JobId, BTreeSet<TaskId>>,
    /// Running attempts per job.
    pub job_running: Vec<u32>,
    /// Cluster-wide terminal task counts so far.
    pub finished_tasks: u32,
    pub failed_tasks: u32,
    pub limits: Limits,
}

impl SimState {
    pub fn max_attempts(&self, kind: TaskKind) -> u32 {
        match kind {
            TaskKind::Map => self.limits.max_map_attempts,
            TaskKind::Reduce => self.limits.max_reduce_attempts,
        }
    }

    pub fn task(&self, id: TaskId) -> &Task {
        &self.tasks[id.index()]
    }

    pub fn job(&self, id: JobId) -> &Job {
        &self.jobs[id.index()]
    }

    pub fn attempt(&self, a: AttemptRef) -> &TaskAttempt {
        &self.tasks[a.task.index()].attempts[a.attempt.index()]
    }

    pub fn is_pending(&self, t: TaskId) -> bool {
        let task = &self.tasks[t.index()];
        task.status == TaskStatus::Pending && self.pending.get(&task.job).is_some_and(|s| s.contains(&t))
    }

    pub fn pending_tasks(&self) -> impl Iterator<Item = TaskId> + '_ {
        self.pending.values().flatten().copied()
    }

    pub fn workload_done(&self) -> bool {
        self.jobs.iter().all(|j| j.status.is_terminal())
    }

    pub fn running_attempts(&self) -> usize {
        self.job_running.iter().map(|&r| r as usize).sum()
    }

    pub fn jobs_with_status(&self, s: JobStatus) -> usize {
        self.jobs.iter().filter(|j| j.status == s).count()
    }
}

/// One launched attempt with the features captured at its launch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub attempt: AttemptRef,
    pub job: JobId,
    pub kind: TaskKind,
    pub node: NodeId,
    pub start: SimTime,
    pub end: Option<SimTime>,
    pub status: AttemptStatus,
    pub speculative: bool,
    pub local: bool,
    pub demand: ResourceProfile,
    pub features: FeatureVector,
}

/// Trace line: either a processed event or an action the engine took.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceEntry {
    Event { at: SimTime, seq: u64, event: super::EventKind },
    AttemptStart { at: SimTime, attempt: AttemptRef, node: NodeId, speculative: bool, local: bool },
    AttemptEnd { at: SimTime, attempt: AttemptRef, node: NodeId, status: AttemptStatus },
    /// Assignment to a node that was dead but still believed alive.
    NodeDeadError { at: SimTime, attempt: AttemptRef, node: NodeId },
    NodeLost { at: SimTime, node: NodeId },
    NodeRejoined { at: SimTime, node: NodeId },
    NodeStateChange { at: SimTime, node: NodeId, state: crate::cluster::NodeState },
    TaskRequeued { at: SimTime, task: TaskId, penalty: u32 },
    TaskTerminal { at: SimTime, task: TaskId, status: TaskStatus },
    JobReleased { at: SimTime, job: JobId },
    JobFinished { at: SimTime, job: JobId },
    JobFailed { at: SimTime, job: JobId },
    HeartbeatInterval { at: SimTime, interval: SimTime },
    Penalty { at: SimTime, task: TaskId, delta: u32, penalty: u32 },
    Rejected { at: SimTime, decision: SchedulerDecision, reason: String },
    NoOp { at: SimTime, entry: usize, reason: String },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineStats {
    pub events_processed: u64,
    pub node_dead_errors: u64,
    pub rejected_decisions: u64,
    pub timeouts: u64,
    pub nodes_lost: u64,
    pub speculative_launches: u64,
    pub noop_faults: u64,
    pub min_heartbeat_interval_ms: u64,
}
