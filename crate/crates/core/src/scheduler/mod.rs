//! Scheduler contract and the baseline FIFO / Fair / Capacity policies.

mod capacity;
mod fair;
mod fifo;
mod speculation;

use serde::{Deserialize, Serialize};

pub use capacity::{capacity_next, CapacityConfig, CapacityPolicy, QueueSpec};
pub use fair::{fair_next, FairConfig, FairPolicy, JobShare};
pub use fifo::{fifo_next, FifoPolicy};
pub use speculation::{baseline_speculation, SpeculationConfig};

use crate::cluster::HeartbeatConfig;
use crate::engine::SimState;
use crate::error::Result;
use crate::ids::{AttemptRef, JobId, NodeId, TaskId};
use crate::predictor::Confusion;
use crate::time::SimTime;
use crate::workload::{AttemptStatus, TaskKind};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum SchedulerDecision {
    Assign { task: TaskId, node: NodeId },
    SpeculativeAssign { task: TaskId, nodes: Vec<NodeId> },
    Wait,
    Requeue { task: TaskId, penalty_delta: u32 },
}

/// Engine-facing scheduler. `decide` is called repeatedly within a tick until it
/// returns `Wait`; the other hooks let stateful schedulers follow the run.
pub trait Scheduler: Send {
    fn name(&self) -> String;

    /// Startup check against the initial state (queue mappings and the like).
    fn validate(&self, _state: &SimState) -> Result<()> {
        Ok(())
    }

    fn begin_tick(&mut self, _state: &SimState) {}

    fn decide(&mut self, state: &SimState) -> SchedulerDecision;

    /// Earliest future time at which a pending wait should be re-evaluated.
    fn next_recheck(&self, _state: &SimState) -> Option<SimTime> {
        None
    }

    /// Penalty to add when an attempt of `task` timed out.
    fn on_attempt_timeout(&mut self, _task: TaskId) -> u32 {
        0
    }

    /// Penalty to add when every copy of a multi-copy round failed.
    fn on_round_failed(&mut self, _task: TaskId) -> u32 {
        0
    }

    fn on_attempt_terminal(&mut self, _attempt: AttemptRef, _status: AttemptStatus) {}

    fn on_task_terminal(&mut self, _task: TaskId) {}

    /// Called at each JobTracker heartbeat-cycle boundary; returns a new interval.
    fn on_heartbeat_cycle(&mut self, _failed_fraction: f64, _heartbeat: &HeartbeatConfig) -> Option<SimTime> {
        None
    }

    fn prediction_stats(&self) -> Option<Confusion> {
        None
    }

    /// Drains the decision audit log, if the scheduler keeps one.
    fn take_decision_log(&mut self) -> Vec<serde_json::Value> {
        Vec::new()
    }
}

/// Read-only view handed to a base policy, with optional restrictions imposed by a
/// wrapping scheduler.
pub struct PolicyView<'a> {
    pub state: &'a SimState,
    pub task_filter: Option<&'a dyn Fn(TaskId) -> bool>,
    pub node_filter: Option<&'a dyn Fn(NodeId) -> bool>,
}

impl<'a> PolicyView<'a> {
    pub fn new(state: &'a SimState) -> Self {
        PolicyView {
            state,
            task_filter: None,
            node_filter: None,
        }
    }

    pub fn task_allowed(&self, t: TaskId) -> bool {
        self.task_filter.is_none_or(|f| f(t))
    }

    /// Node is believed alive, has a free slot of `kind` and passes the filter.
    pub fn node_usable(&self, n: NodeId, kind: TaskKind) -> bool {
        let node = &self.state.cluster.nodes[n.index()];
        node.believed_alive() && node.free_slots(kind) > 0 && self.node_filter.is_none_or(|f| f(n))
    }

    pub fn any_usable(&self, kind: TaskKind) -> bool {
        self.state.cluster.nodes.iter().any(|n| self.node_usable(n.id, kind))
    }

    /// Placement rule shared by all baselines: a local replica holder for maps if one
    /// is usable, otherwise any usable node; most free slots first, then lowest id.
    pub fn place(&self, task: TaskId) -> Option<NodeId> {
        let t = &self.state.tasks[task.index()];
        let best = |candidates: &mut dyn Iterator<Item = NodeId>| {
            candidates
                .filter(|&n| self.node_usable(n, t.kind))
                .max_by_key(|&n| (self.state.cluster.nodes[n.index()].free_slots(t.kind), std::cmp::Reverse(n)))
        };
        if t.kind == TaskKind::Map {
            if let Some(n) = best(&mut t.preferred_nodes.iter().copied()) {
                return Some(n);
            }
        }
        best(&mut self.state.cluster.nodes.iter().map(|n| n.id))
    }

    /// First placeable task of `job` in task order.
    pub fn first_placeable(&self, job: JobId) -> Option<(TaskId, NodeId)> {
        let pending = self.state.pending.get(&job)?;
        let map_ok = self.any_usable(TaskKind::Map);
        let reduce_ok = self.any_usable(TaskKind::Reduce);
        for &t in pending {
            let kind = self.state.tasks[t.index()].kind;
            let ok = match kind {
                TaskKind::Map => map_ok,
                TaskKind::Reduce => reduce_ok,
            };
            if !ok || !self.task_allowed(t) {
                continue;
            }
            if let Some(n) = self.place(t) {
                return Some((t, n));
            }
        }
        None
    }
}

/// A pure task/node picker. Wrapping schedulers (ATLAS) restrict it through the view.
pub trait BasePolicy: Send + Sync {
    fn name(&self) -> &'static str;

    fn validate(&self, _state: &SimState) -> Result<()> {
        Ok(())
    }

    fn pick(&self, view: &PolicyView) -> Option<(TaskId, NodeId)>;
}

/// A bare baseline: assign whatever the policy picks.
pub struct BaselineScheduler {
    policy: Box<dyn BasePolicy>,
}

impl BaselineScheduler {
    pub fn new(policy: Box<dyn BasePolicy>) -> Self {
        BaselineScheduler { policy }
    }
}

impl Scheduler for BaselineScheduler {
    fn name(&self) -> String {
        self.policy.name().to_string()
    }

    fn validate(&self, state: &SimState) -> Result<()> {
        self.policy.validate(state)
    }

    fn decide(&mut self, state: &SimState) -> SchedulerDecision {
        match self.policy.pick(&PolicyView::new(state)) {
            Some((task, node)) => SchedulerDecision::Assign { task, node },
            None => SchedulerDecision::Wait,
        }
    }
}

/// Jobs with schedulable tasks, in FIFO order: release time, priority (desc), id.
pub(crate) fn fifo_job_order(state: &SimState) -> Vec<JobId> {
    let mut jobs: Vec<JobId> = state.pending.keys().copied().collect();
    jobs.sort_by_key(|&j| fifo_key(state, j));
    jobs
}

pub(crate) fn fifo_key(state: &SimState, j: JobId) -> (SimTime, std::cmp::Reverse<i32>, JobId) {
    let job = &state.jobs[j.index()];
    (job.released_at.unwrap_or(SimTime(u64::MAX)), std::cmp::Reverse(job.spec.priority), j)
}
