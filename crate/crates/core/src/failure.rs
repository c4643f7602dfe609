//! Scenario-driven failure injection: explicit node / rack / task faults plus
//! stochastic node churn and per-attempt failure probabilities.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterState, Node, NodeState};
use crate::config;
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::time::SimTime;
use crate::workload::TaskKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    NodeKill,
    NodeSlow,
    NodeRecover,
    TaskKill,
    NetworkPartition,
}

/// One timed fault. Which target fields are required depends on `kind`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureEntry {
    pub at_ms: u64,
    pub kind: FailureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rack: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub job: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_kind: Option<TaskKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_ms: Option<u64>,
}

impl FailureEntry {
    pub fn node_event(at: SimTime, kind: FailureKind, node: &str) -> Self {
        FailureEntry {
            at_ms: at.0,
            kind,
            node: Some(node.to_string()),
            rack: None,
            job: None,
            task_kind: None,
            task: None,
            duration_ms: None,
        }
    }

    pub fn at(&self) -> SimTime {
        SimTime(self.at_ms)
    }

    fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            FailureKind::NodeKill | FailureKind::NodeSlow | FailureKind::NodeRecover => self.node.is_some(),
            FailureKind::TaskKill => self.job.is_some() && self.task.is_some(),
            FailureKind::NetworkPartition => self.rack.is_some() && self.duration_ms.is_some(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("failure entry at {} ms ({:?}) is missing its target", self.at_ms, self.kind)))
        }
    }
}

fn default_slowdown() -> f64 {
    3.0
}
fn default_slow_multiplier() -> f64 {
    2.0
}
fn default_concurrency() -> f64 {
    0.1
}

/// Failure plan file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailurePlan {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub entries: Vec<FailureEntry>,
    /// Mean time between node failures (exponential), per node.
    #[serde(default)]
    pub node_mtbf_ms: Option<f64>,
    /// Mean time to repair (exponential). Without it killed nodes stay dead.
    #[serde(default)]
    pub node_mttr_ms: Option<f64>,
    #[serde(default)]
    pub attempt_fail_prob: f64,
    #[serde(default)]
    pub slow_node_prob: f64,
    #[serde(default = "default_slowdown")]
    pub slowdown_factor: f64,
    /// Failure-probability multiplier for attempts on SLOW nodes.
    #[serde(default = "default_slow_multiplier")]
    pub slow_fail_multiplier: f64,
    /// Contention coefficient `c` in `1 + c * max(0, running - slots / 2)`.
    #[serde(default = "default_concurrency")]
    pub concurrency_coefficient: f64,
}

impl Default for FailurePlan {
    fn default() -> Self {
        FailurePlan {
            description: None,
            entries: Vec::new(),
            node_mtbf_ms: None,
            node_mttr_ms: None,
            attempt_fail_prob: 0.0,
            slow_node_prob: 0.0,
            slowdown_factor: default_slowdown(),
            slow_fail_multiplier: default_slow_multiplier(),
            concurrency_coefficient: default_concurrency(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AttemptOutcome {
    Finish,
    Fail,
}

impl FailurePlan {
    pub fn load(path: &Path) -> Result<Self> {
        let plan: FailurePlan = config::load_file(path)?;
        plan.validate().map_err(|e| Error::config(path, e))?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("attempt_fail_prob", self.attempt_fail_prob), ("slow_node_prob", self.slow_node_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Invalid(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        for (name, m) in [("node_mtbf_ms", self.node_mtbf_ms), ("node_mttr_ms", self.node_mttr_ms)] {
            if let Some(m) = m {
                if !(m > 0.0) {
                    return Err(Error::Invalid(format!("{name} must be positive, got {m}")));
                }
            }
        }
        if self.slowdown_factor < 1.0 || self.slow_fail_multiplier < 0.0 || self.concurrency_coefficient < 0.0 {
            return Err(Error::Invalid("slowdown_factor must be >= 1 and multipliers non-negative".into()));
        }
        self.entries.iter().try_for_each(FailureEntry::validate)
    }

    /// Failure probability for an attempt on `node`, where `running` counts the attempts
    /// on the node including the one being started.
    pub fn effective_failure_prob(&self, state: NodeState, running: u32, total_slots: u32) -> f64 {
        let node_multiplier = match state {
            NodeState::Slow => self.slow_fail_multiplier,
            _ => 1.0,
        };
        let excess = (running as f64 - total_slots as f64 / 2.0).max(0.0);
        let concurrency = 1.0 + self.concurrency_coefficient * excess;
        (self.attempt_fail_prob * node_multiplier * concurrency).clamp(0.0, 1.0)
    }

    /// Bernoulli draw of an attempt's fate on `node` (whose running set already
    /// includes the attempt).
    pub fn attempt_outcome<R: Rng + ?Sized>(&self, node: &Node, rng: &mut R) -> AttemptOutcome {
        let p = self.effective_failure_prob(node.state, node.running_count(), node.total_slots());
        // Always consume exactly one draw so that p = 0 and p = 1 share RNG alignment.
        let u: f64 = rng.random();
        if u < p {
            AttemptOutcome::Fail
        } else {
            AttemptOutcome::Finish
        }
    }

    /// Nodes that start the run in SLOW state.
    pub fn initial_slow_nodes(&self, nodes: usize, rng: &mut SimRng) -> Vec<bool> {
        (0..nodes).map(|_| rng.random::<f64>() < self.slow_node_prob).collect()
    }
}

/// Expands stochastic processes into concrete timed entries up to `horizon` and merges
/// them with the explicit entries. Output is sorted by time; ties keep explicit entries
/// first, then node order.
pub fn compile_plan(plan: &FailurePlan, cluster: &ClusterState, rng: &mut SimRng, horizon: SimTime) -> Result<Vec<FailureEntry>> {
    plan.validate()?;
    let mut out: Vec<FailureEntry> = plan.entries.clone();
    if let Some(mtbf) = plan.node_mtbf_ms {
        let fail = Exp::new(1.0 / mtbf).map_err(|e| Error::Invalid(e.to_string()))?;
        let repair = plan
            .node_mttr_ms
            .map(|m| Exp::new(1.0 / m).map_err(|e| Error::Invalid(e.to_string())))
            .transpose()?;
        for node in &cluster.nodes {
            let mut t = 0.0f64;
            loop {
                t += fail.sample(rng);
                if t >= horizon.0 as f64 {
                    break;
                }
                out.push(FailureEntry::node_event(SimTime(t as u64), FailureKind::NodeKill, &node.name));
                if let Some(repair) = &repair {
                    t += repair.sample(rng);
                    if t >= horizon.0 as f64 {
                        break;
                    }
                    out.push(FailureEntry::node_event(SimTime(t as u64), FailureKind::NodeRecover, &node.name));
                }
            }
        }
    }
    // Stable sort keeps the generation order among equal timestamps.
    out.sort_by_key(|e| e.at_ms);
    Ok(out)
}
