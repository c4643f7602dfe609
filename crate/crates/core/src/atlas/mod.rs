//! Failure-aware scheduling layer over a base policy: per-task failure prediction,
//! node availability probing with bounded waits, penalty requeues, speculative
//! multi-launch for predicted failures and adaptive heartbeat intervals.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cluster::HeartbeatConfig;
use crate::engine::SimState;
use crate::error::{Error, Result};
use crate::ids::{AttemptId, AttemptRef, NodeId, TaskId};
use crate::predictor::{extract_features, Confusion, FailurePredictor, Prediction};
use crate::scheduler::{BasePolicy, PolicyView, Scheduler, SchedulerDecision};
use crate::time::SimTime;
use crate::workload::{AttemptStatus, TaskKind};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseKind {
    #[default]
    Fifo,
    Fair,
    Capacity,
}

fn default_fanout() -> usize {
    2
}
fn default_increment() -> u32 {
    1
}
fn default_fraction() -> f64 {
    1.0 / 3.0
}
fn default_increase() -> f64 {
    1.5
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtlasConfig {
    #[serde(default)]
    pub base_scheduler: BaseKind,
    #[serde(default)]
    pub map_model: Option<PathBuf>,
    #[serde(default)]
    pub reduce_model: Option<PathBuf>,
    /// Copies launched for a task predicted to fail.
    #[serde(default = "default_fanout")]
    pub speculative_fanout: usize,
    #[serde(default = "default_increment")]
    pub penalty_increment: u32,
    #[serde(default = "default_fraction")]
    pub failure_fraction_threshold: f64,
    /// Multiplier applied to the heartbeat interval in quiet cycles.
    #[serde(default = "default_increase")]
    pub heartbeat_increase: f64,
    #[serde(default = "yes")]
    pub adaptive_heartbeat: bool,
    /// Bound on any wait state; defaults to (and is capped by) the attempt timeout.
    #[serde(default)]
    pub wait_timeout_ms: Option<u64>,
}

impl Default for AtlasConfig {
    fn default() -> Self {
        AtlasConfig {
            base_scheduler: BaseKind::Fifo,
            map_model: None,
            reduce_model: None,
            speculative_fanout: default_fanout(),
            penalty_increment: default_increment(),
            failure_fraction_threshold: default_fraction(),
            heartbeat_increase: default_increase(),
            adaptive_heartbeat: true,
            wait_timeout_ms: None,
        }
    }
}

impl AtlasConfig {
    pub fn validate(&self) -> Result<()> {
        if self.speculative_fanout < 1 {
            return Err(Error::Invalid("atlas.speculative_fanout must be >= 1".into()));
        }
        if !(self.failure_fraction_threshold > 0.0 && self.failure_fraction_threshold < 1.0) {
            return Err(Error::Invalid("atlas.failure_fraction_threshold must be in (0, 1)".into()));
        }
        if self.heartbeat_increase < 1.0 {
            return Err(Error::Invalid("atlas.heartbeat_increase must be >= 1".into()));
        }
        Ok(())
    }
}

/// Heartbeat controller: halve (down to the floor) when more than `threshold` of the
/// TaskTrackers failed during the last cycle, otherwise grow back toward the base.
pub fn adapt_heartbeat(hb: &HeartbeatConfig, failed_fraction: f64, threshold: f64, increase: f64) -> SimTime {
    if failed_fraction > threshold {
        SimTime(hb.current_interval.0 / 2).max(hb.min_interval)
    } else {
        SimTime((hb.current_interval.0 as f64 * increase).round() as u64).min(hb.base_interval)
    }
}

/// Per-task penalty counters. Penalties only grow until the task is terminal.
#[derive(Clone, Debug, Default)]
pub struct PenaltyLedger {
    increment: u32,
    penalties: BTreeMap<TaskId, u32>,
}

impl PenaltyLedger {
    pub fn new(increment: u32) -> Self {
        PenaltyLedger {
            increment,
            penalties: BTreeMap::new(),
        }
    }

    /// Adds one increment and returns it.
    pub fn apply(&mut self, t: TaskId) -> u32 {
        *self.penalties.entry(t).or_insert(0) += self.increment;
        self.increment
    }

    pub fn penalty(&self, t: TaskId) -> u32 {
        self.penalties.get(&t).copied().unwrap_or(0)
    }

    pub fn clear(&mut self, t: TaskId) {
        self.penalties.remove(&t);
    }

    pub fn effective_priority(&self, base_priority: i32, t: TaskId) -> i64 {
        base_priority as i64 - self.penalty(t) as i64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum HoldKind {
    /// The chosen node did not answer the probe.
    Availability,
    /// The chosen node is up but has no free slot.
    Slot,
}

#[derive(Clone, Copy, Debug)]
struct Hold {
    kind: HoldKind,
    node: NodeId,
    since: SimTime,
}

pub struct AtlasScheduler {
    base: Box<dyn BasePolicy>,
    cfg: AtlasConfig,
    map_model: Arc<dyn FailurePredictor>,
    reduce_model: Arc<dyn FailurePredictor>,
    ledger: PenaltyLedger,
    holds: BTreeMap<TaskId, Hold>,
    /// Tasks predicted to fail that are waiting for enough nodes to run copies.
    resource_waits: BTreeMap<TaskId, SimTime>,
    /// Nodes whose probe failed; skipped until they answer again.
    masked: BTreeSet<NodeId>,
    expected: BTreeMap<AttemptRef, bool>,
    confusion: Confusion,
    prediction_errors: u64,
    log_enabled: bool,
    log: Vec<serde_json::Value>,
}

/// Direct probe of the TaskTracker/DataNode pair, bypassing heartbeats.
fn probe(state: &SimState, n: NodeId) -> bool {
    let node = &state.cluster.nodes[n.index()];
    node.is_physically_up() && !node.partitioned
}

impl AtlasScheduler {
    pub fn new(
        base: Box<dyn BasePolicy>,
        cfg: AtlasConfig,
        map_model: Arc<dyn FailurePredictor>,
        reduce_model: Arc<dyn FailurePredictor>,
    ) -> Self {
        AtlasScheduler {
            base,
            ledger: PenaltyLedger::new(cfg.penalty_increment),
            cfg,
            map_model,
            reduce_model,
            holds: BTreeMap::new(),
            resource_waits: BTreeMap::new(),
            masked: BTreeSet::new(),
            expected: BTreeMap::new(),
            confusion: Confusion::default(),
            prediction_errors: 0,
            log_enabled: false,
            log: Vec::new(),
        }
    }

    pub fn with_decision_log(mut self, enabled: bool) -> Self {
        self.log_enabled = enabled;
        self
    }

    pub fn ledger(&self) -> &PenaltyLedger {
        &self.ledger
    }

    pub fn prediction_errors(&self) -> u64 {
        self.prediction_errors
    }

    fn wait_timeout(&self, state: &SimState) -> SimTime {
        let cap = state.limits.attempt_timeout;
        self.cfg.wait_timeout_ms.map(SimTime).unwrap_or(cap).min(cap)
    }

    fn predict(&mut self, state: &SimState, task: TaskId, node: NodeId) -> Prediction {
        let fv = extract_features(state, task, node, false);
        let model = match state.task(task).kind {
            TaskKind::Map => &self.map_model,
            TaskKind::Reduce => &self.reduce_model,
        };
        match model.predict(&fv) {
            Ok(p) => p,
            Err(_) => {
                self.prediction_errors += 1;
                Prediction {
                    fail: false,
                    probability: 0.0,
                }
            }
        }
    }

    fn note(&mut self, state: &SimState, branch: &str, task: TaskId, nodes: &[NodeId], pred: Option<Prediction>) {
        if self.log_enabled {
            self.log.push(json!({
                "at": state.clock.0,
                "task": task.0,
                "branch": branch,
                "nodes": nodes.iter().map(|n| n.0).collect::<Vec<_>>(),
                "predicted_fail": pred.map(|p| p.fail),
                "probability": pred.map(|p| p.probability),
            }));
        }
    }

    fn expect(&mut self, state: &SimState, task: TaskId, preds: &[bool]) {
        let first = state.task(task).attempts.len() as u32;
        for (i, &p) in preds.iter().enumerate() {
            self.expected.insert(
                AttemptRef {
                    task,
                    attempt: AttemptId(first + i as u32),
                },
                p,
            );
        }
    }

    /// Nodes able to run a copy right now, best first: predicted success, rack
    /// proximity to `near`, failure probability, id.
    fn copy_candidates(&mut self, state: &SimState, task: TaskId, near: NodeId) -> Vec<(NodeId, Prediction)> {
        let t = state.task(task);
        let demand = state.job(t.job).spec.resources;
        let mut out = Vec::new();
        for node in &state.cluster.nodes {
            if self.masked.contains(&node.id) || !node.believed_alive() || node.free_slots(t.kind) == 0 {
                continue;
            }
            if !probe(state, node.id) {
                self.masked.insert(node.id);
                continue;
            }
            if !node.has_headroom(&demand) {
                continue;
            }
            let p = self.predict(state, task, node.id);
            out.push((node.id, p));
        }
        out.sort_by(|(a, pa), (b, pb)| {
            (pa.fail, state.cluster.rack_distance(near, *a))
                .cmp(&(pb.fail, state.cluster.rack_distance(near, *b)))
                .then(pa.probability.total_cmp(&pb.probability))
                .then(a.cmp(b))
        });
        out
    }

    fn requeue(&mut self, state: &SimState, task: TaskId, branch: &str) -> SchedulerDecision {
        let delta = self.ledger.apply(task);
        self.note(state, branch, task, &[], None);
        SchedulerDecision::Requeue { task, penalty_delta: delta }
    }

    /// Tasks parked on a specific node: assign once it is usable, give up at the timeout.
    fn service_holds(&mut self, state: &SimState, timeout: SimTime) -> Option<SchedulerDecision> {
        let held: Vec<(TaskId, Hold)> = self.holds.iter().map(|(t, h)| (*t, *h)).collect();
        for (task, hold) in held {
            if !state.is_pending(task) {
                self.holds.remove(&task);
                continue;
            }
            let node = &state.cluster.nodes[hold.node.index()];
            let kind = state.task(task).kind;
            if probe(state, hold.node) && node.believed_alive() && node.free_slots(kind) > 0 {
                self.holds.remove(&task);
                let pred = self.predict(state, task, hold.node);
                self.expect(state, task, &[pred.fail]);
                self.note(state, "assign_after_wait", task, &[hold.node], Some(pred));
                return Some(SchedulerDecision::Assign { task, node: hold.node });
            }
            if state.clock - hold.since >= timeout {
                self.holds.remove(&task);
                let branch = match hold.kind {
                    HoldKind::Availability => "availability_timeout",
                    HoldKind::Slot => "slot_timeout",
                };
                return Some(self.requeue(state, task, branch));
            }
        }
        None
    }
}

impl Scheduler for AtlasScheduler {
    fn name(&self) -> String {
        format!("atlas-{}", self.base.name())
    }

    fn validate(&self, state: &SimState) -> Result<()> {
        self.cfg.validate()?;
        self.base.validate(state)
    }

    fn begin_tick(&mut self, state: &SimState) {
        self.masked.retain(|&n| !probe(state, n));
        self.resource_waits.retain(|&t, _| state.is_pending(t));
    }

    fn decide(&mut self, state: &SimState) -> SchedulerDecision {
        let clock = state.clock;
        let timeout = self.wait_timeout(state);
        if let Some(d) = self.service_holds(state, timeout) {
            return d;
        }
        let tiers: BTreeSet<u32> = state
            .pending_tasks()
            .filter(|t| !self.holds.contains_key(t))
            .map(|t| state.task(t).penalty)
            .collect();
        for tier in tiers {
            loop {
                let picked = {
                    let holds = &self.holds;
                    let masked = &self.masked;
                    let tf = |t: TaskId| state.task(t).penalty == tier && !holds.contains_key(&t);
                    let nf = |n: NodeId| !masked.contains(&n);
                    let view = PolicyView {
                        state,
                        task_filter: Some(&tf),
                        node_filter: Some(&nf),
                    };
                    self.base.pick(&view)
                };
                let Some((task, node)) = picked else { break };
                let pred = self.predict(state, task, node);
                if !pred.fail {
                    if !probe(state, node) {
                        self.masked.insert(node);
                        self.holds.insert(
                            task,
                            Hold {
                                kind: HoldKind::Availability,
                                node,
                                since: clock,
                            },
                        );
                        self.note(state, "availability_wait", task, &[node], Some(pred));
                        continue;
                    }
                    if state.cluster.nodes[node.index()].free_slots(state.task(task).kind) == 0 {
                        self.holds.insert(
                            task,
                            Hold {
                                kind: HoldKind::Slot,
                                node,
                                since: clock,
                            },
                        );
                        self.note(state, "slot_wait", task, &[node], Some(pred));
                        continue;
                    }
                    self.resource_waits.remove(&task);
                    self.expect(state, task, &[false]);
                    self.note(state, "assign", task, &[node], Some(pred));
                    return SchedulerDecision::Assign { task, node };
                }
                let t = state.task(task);
                let left = state.max_attempts(t.kind) as usize - t.attempts.len();
                let needed = self.cfg.speculative_fanout.min(left).max(1);
                let candidates = self.copy_candidates(state, task, node);
                if candidates.len() >= needed {
                    let chosen: Vec<(NodeId, Prediction)> = candidates.into_iter().take(needed).collect();
                    let nodes: Vec<NodeId> = chosen.iter().map(|c| c.0).collect();
                    let preds: Vec<bool> = chosen.iter().map(|c| c.1.fail).collect();
                    self.resource_waits.remove(&task);
                    self.expect(state, task, &preds);
                    self.note(state, "speculative", task, &nodes, Some(pred));
                    return SchedulerDecision::SpeculativeAssign { task, nodes };
                }
                let since = *self.resource_waits.entry(task).or_insert(clock);
                if clock - since >= timeout {
                    self.resource_waits.remove(&task);
                    return self.requeue(state, task, "resource_timeout");
                }
                // Hold the queue until enough nodes free up for the copies.
                self.note(state, "resource_wait", task, &[node], Some(pred));
                return SchedulerDecision::Wait;
            }
        }
        SchedulerDecision::Wait
    }

    fn next_recheck(&self, state: &SimState) -> Option<SimTime> {
        let timeout = self.wait_timeout(state);
        self.holds
            .values()
            .map(|h| h.since)
            .chain(self.resource_waits.values().copied())
            .map(|since| since + timeout)
            .filter(|&t| t > state.clock)
            .min()
    }

    fn on_attempt_timeout(&mut self, task: TaskId) -> u32 {
        self.ledger.apply(task)
    }

    fn on_round_failed(&mut self, task: TaskId) -> u32 {
        self.ledger.apply(task)
    }

    fn on_attempt_terminal(&mut self, attempt: AttemptRef, status: AttemptStatus) {
        if let Some(pred) = self.expected.remove(&attempt) {
            if status != AttemptStatus::Killed {
                self.confusion.record(pred, status.is_failure());
            }
        }
    }

    fn on_task_terminal(&mut self, task: TaskId) {
        self.ledger.clear(task);
        self.holds.remove(&task);
        self.resource_waits.remove(&task);
    }

    fn on_heartbeat_cycle(&mut self, failed_fraction: f64, heartbeat: &HeartbeatConfig) -> Option<SimTime> {
        self.cfg.adaptive_heartbeat.then(|| {
            adapt_heartbeat(
                heartbeat,
                failed_fraction,
                self.cfg.failure_fraction_threshold,
                self.cfg.heartbeat_increase,
            )
        })
    }

    fn prediction_stats(&self) -> Option<Confusion> {
        Some(self.confusion)
    }

    fn take_decision_log(&mut self) -> Vec<serde_json::Value> {
        std::mem::take(&mut self.log)
    }
}
