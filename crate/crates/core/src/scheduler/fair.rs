use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{fifo_key, BasePolicy, PolicyView, SchedulerDecision};
use crate::engine::SimState;
use crate::error::{Error, Result};
use crate::ids::{JobId, NodeId, TaskId};
use crate::workload::TaskKind;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobShare {
    #[serde(default)]
    pub min_share: u32,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for JobShare {
    fn default() -> Self {
        JobShare { min_share: 0, weight: 1.0 }
    }
}

/// Per-job shares keyed by job name; jobs not listed get `default`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FairConfig {
    #[serde(default)]
    pub default: JobShare,
    #[serde(default)]
    pub jobs: BTreeMap<String, JobShare>,
}

impl FairConfig {
    pub fn share(&self, job_name: &str) -> JobShare {
        self.jobs.get(job_name).copied().unwrap_or(self.default)
    }
}

/// Slot-count fair sharing with min-shares and weights.
#[derive(Clone, Debug, Default)]
pub struct FairPolicy {
    pub cfg: FairConfig,
}

impl FairPolicy {
    pub fn new(cfg: FairConfig) -> Self {
        FairPolicy { cfg }
    }

    fn order(&self, state: &SimState) -> Vec<JobId> {
        // (deficient?, usage ratio, FIFO key)
        let mut keyed: Vec<(bool, f64, JobId)> = state
            .pending
            .keys()
            .map(|&j| {
                let share = self.cfg.share(&state.jobs[j.index()].spec.name);
                let running = state.job_running[j.index()] as f64;
                if (running as u32) < share.min_share {
                    (true, running / share.min_share as f64, j)
                } else {
                    (false, running / share.weight, j)
                }
            })
            .collect();
        keyed.sort_by(|a, b| {
            b.0.cmp(&a.0)
                .then(a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal))
                .then_with(|| fifo_key(state, a.2).cmp(&fifo_key(state, b.2)))
        });
        keyed.into_iter().map(|k| k.2).collect()
    }
}

impl BasePolicy for FairPolicy {
    fn name(&self) -> &'static str {
        "fair"
    }

    fn validate(&self, state: &SimState) -> Result<()> {
        let slots = state.cluster.total_slots(TaskKind::Map) + state.cluster.total_slots(TaskKind::Reduce);
        for (name, s) in std::iter::once(("default", &self.cfg.default)).chain(self.cfg.jobs.iter().map(|(k, v)| (k.as_str(), v))) {
            if !(s.weight > 0.0) {
                return Err(Error::Invalid(format!("fair share `{name}`: weight must be > 0")));
            }
            if s.min_share > slots {
                return Err(Error::Invalid(format!("fair share `{name}`: min_share {} exceeds {slots} cluster slots", s.min_share)));
            }
        }
        Ok(())
    }

    fn pick(&self, view: &PolicyView) -> Option<(TaskId, NodeId)> {
        self.order(view.state).into_iter().find_map(|j| view.first_placeable(j))
    }
}

pub fn fair_next(state: &SimState, cfg: &FairConfig) -> SchedulerDecision {
    match FairPolicy::new(cfg.clone()).pick(&PolicyView::new(state)) {
        Some((task, node)) => SchedulerDecision::Assign { task, node },
        None => SchedulerDecision::Wait,
    }
}
