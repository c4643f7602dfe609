use serde::{Deserialize, Serialize};

use super::{PolicyView, SchedulerDecision};
use crate::engine::SimState;
use crate::workload::{TaskKind, TaskStatus};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeculationConfig {
    #[serde(default)]
    pub enabled: bool,
    /// Progress gap behind the job median that marks a straggler.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_interval")]
    pub check_interval_ms: u64,
}

fn default_threshold() -> f64 {
    0.5
}
fn default_interval() -> u64 {
    30_000
}

impl Default for SpeculationConfig {
    fn default() -> Self {
        SpeculationConfig {
            enabled: false,
            threshold: default_threshold(),
            check_interval_ms: default_interval(),
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Hadoop-style straggler detection: one extra copy for a single-copy attempt whose
/// progress trails its job's median (same task kind) by more than the threshold.
pub fn baseline_speculation(state: &SimState, cfg: &SpeculationConfig) -> Option<SchedulerDecision> {
    if !cfg.enabled {
        return None;
    }
    let view = PolicyView::new(state);
    for job in state.jobs.iter().filter(|j| j.status == crate::workload::JobStatus::Running) {
        for kind in [TaskKind::Map, TaskKind::Reduce] {
            let ids = match kind {
                TaskKind::Map => &job.maps,
                TaskKind::Reduce => &job.reduces,
            };
            let running: Vec<_> = ids
                .iter()
                .map(|t| &state.tasks[t.index()])
                .filter(|t| t.status == TaskStatus::Running)
                .flat_map(|t| t.running_attempts().map(move |a| (t, a)))
                .collect();
            if running.len() < 2 {
                continue;
            }
            let med = median(running.iter().map(|(_, a)| a.progress(state.clock)).collect());
            for (task, attempt) in &running {
                if task.running_attempts().count() != 1
                    || task.attempts.len() as u32 >= state.max_attempts(task.kind)
                    || med - attempt.progress(state.clock) <= cfg.threshold
                {
                    continue;
                }
                let node = state
                    .cluster
                    .nodes
                    .iter()
                    .filter(|n| n.id != attempt.node && view.node_usable(n.id, kind))
                    .max_by_key(|n| (task.is_preferred(n.id), n.free_slots(kind), std::cmp::Reverse(n.id)));
                if let Some(n) = node {
                    return Some(SchedulerDecision::SpeculativeAssign { task: task.id, nodes: vec![n.id] });
                }
            }
        }
    }
    None
}
