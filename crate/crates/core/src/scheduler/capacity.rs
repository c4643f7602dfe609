use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{fifo_job_order, BasePolicy, PolicyView, SchedulerDecision};
use crate::engine::SimState;
use crate::error::{Error, Result};
use crate::ids::{JobId, NodeId, TaskId};
use crate::workload::{JobType, TaskKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueueSpec {
    pub name: String,
    /// Guaranteed fraction of cluster slots.
    pub capacity: f64,
}

/// Queues plus the job-to-queue rule: an explicit `queue` on the job wins, then the
/// job-type mapping, then `default_queue`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityConfig {
    pub queues: Vec<QueueSpec>,
    #[serde(default)]
    pub by_type: BTreeMap<JobType, String>,
    pub default_queue: String,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        CapacityConfig {
            queues: vec![QueueSpec { name: "default".into(), capacity: 1.0 }],
            by_type: BTreeMap::new(),
            default_queue: "default".into(),
        }
    }
}

impl CapacityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.queues.is_empty() {
            return Err(Error::Invalid("capacity scheduler needs at least one queue".into()));
        }
        let mut sum = 0.0;
        for (i, q) in self.queues.iter().enumerate() {
            if !(q.capacity > 0.0 && q.capacity <= 1.0) {
                return Err(Error::Invalid(format!("queue `{}`: capacity must be in (0, 1]", q.name)));
            }
            if self.queues[..i].iter().any(|p| p.name == q.name) {
                return Err(Error::Invalid(format!("queue `{}` declared twice", q.name)));
            }
            sum += q.capacity;
        }
        if sum > 1.0 + 1e-9 {
            return Err(Error::Invalid(format!("queue capacities sum to {sum} > 1")));
        }
        for target in self.by_type.values().chain(std::iter::once(&self.default_queue)) {
            self.queue_index(target)?;
        }
        Ok(())
    }

    fn queue_index(&self, name: &str) -> Result<usize> {
        self.queues
            .iter()
            .position(|q| q.name == name)
            .ok_or_else(|| Error::Invalid(format!("unknown queue `{name}`")))
    }

    pub fn queue_of(&self, spec: &crate::workload::JobSpec) -> Result<usize> {
        let name = spec
            .queue
            .as_deref()
            .or_else(|| self.by_type.get(&spec.job_type).map(String::as_str))
            .unwrap_or(&self.default_queue);
        self.queue_index(name)
            .map_err(|_| Error::Invalid(format!("job `{}` maps to unknown queue `{name}`", spec.name)))
    }
}

#[derive(Clone, Debug, Default)]
pub struct CapacityPolicy {
    pub cfg: CapacityConfig,
}

impl CapacityPolicy {
    pub fn new(cfg: CapacityConfig) -> Self {
        CapacityPolicy { cfg }
    }
}

impl BasePolicy for CapacityPolicy {
    fn name(&self) -> &'static str {
        "capacity"
    }

    fn validate(&self, state: &SimState) -> Result<()> {
        self.cfg.validate()?;
        state.jobs.iter().try_for_each(|j| self.cfg.queue_of(&j.spec).map(|_| ()))
    }

    fn pick(&self, view: &PolicyView) -> Option<(TaskId, NodeId)> {
        let state = view.state;
        let total = (state.cluster.total_slots(TaskKind::Map) + state.cluster.total_slots(TaskKind::Reduce)) as f64;
        let nq = self.cfg.queues.len();
        let mut used = vec![0u32; nq];
        for job in &state.jobs {
            if let Ok(q) = self.cfg.queue_of(&job.spec) {
                used[q] += state.job_running[job.spec.id.index()];
            }
        }
        let mut per_queue: Vec<Vec<JobId>> = vec![Vec::new(); nq];
        for j in fifo_job_order(state) {
            if let Ok(q) = self.cfg.queue_of(&state.jobs[j.index()].spec) {
                per_queue[q].push(j);
            }
        }
        let mut order: Vec<usize> = (0..nq).filter(|&q| !per_queue[q].is_empty()).collect();
        order.sort_by(|&a, &b| {
            let ra = used[a] as f64 / self.cfg.queues[a].capacity;
            let rb = used[b] as f64 / self.cfg.queues[b].capacity;
            ra.partial_cmp(&rb).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
        });
        let under = |q: usize| (used[q] as f64) < self.cfg.queues[q].capacity * total;
        let first = |q: usize| per_queue[q].iter().find_map(|&j| view.first_placeable(j));
        // Guaranteed capacity first, then elastic use of idle capacity.
        order
            .iter()
            .filter(|&&q| under(q))
            .find_map(|&q| first(q))
            .or_else(|| order.iter().filter(|&&q| !under(q)).find_map(|&q| first(q)))
    }
}

pub fn capacity_next(state: &SimState, cfg: &CapacityConfig) -> SchedulerDecision {
    match CapacityPolicy::new(cfg.clone()).pick(&PolicyView::new(state)) {
        Some((task, node)) => SchedulerDecision::Assign { task, node },
        None => SchedulerDecision::Wait,
    }
}
