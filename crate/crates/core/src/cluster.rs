//! Cluster model: nodes acting as both TaskTracker and DataNode, racks, slots and
//! the JobTracker's heartbeat-derived view of node liveness.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{AttemptRef, BlockId, NodeId, RackId};
use crate::time::SimTime;
use crate::workload::{ResourceProfile, TaskKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeState {
    Alive,
    Dead,
    Slow,
}

#[derive(Clone, Debug)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    pub rack: RackId,
    pub map_slots: u32,
    pub reduce_slots: u32,
    pub cpu_capacity: f64,
    pub mem_capacity: f64,
    pub hdfs_rw_capacity: f64,
    /// Physical state. The JobTracker only learns about it through heartbeats.
    pub state: NodeState,
    pub last_heartbeat: SimTime,
    pub hosted_blocks: BTreeSet<BlockId>,
    /// JobTracker view: the node missed heartbeats past the expiry window.
    pub lost: bool,
    pub partitioned: bool,
    pub slowdown: f64,
    pub running: BTreeSet<AttemptRef>,
    pub running_maps: u32,
    pub running_reduces: u32,
    pub used_cpu: f64,
    pub used_mem: f64,
    pub used_hdfs_rw: f64,
    pub finished_attempts: u32,
    pub failed_attempts: u32,
}

impl Node {
    pub fn is_physically_up(&self) -> bool {
        self.state != NodeState::Dead
    }

    /// Whether the JobTracker currently believes the node is alive.
    pub fn believed_alive(&self) -> bool {
        !self.lost
    }

    pub fn slots(&self, kind: TaskKind) -> u32 {
        match kind {
            TaskKind::Map => self.map_slots,
            TaskKind::Reduce => self.reduce_slots,
        }
    }

    pub fn occupied(&self, kind: TaskKind) -> u32 {
        match kind {
            TaskKind::Map => self.running_maps,
            TaskKind::Reduce => self.running_reduces,
        }
    }

    pub fn free_slots(&self, kind: TaskKind) -> u32 {
        self.slots(kind).saturating_sub(self.occupied(kind))
    }

    pub fn total_slots(&self) -> u32 {
        self.map_slots + self.reduce_slots
    }

    pub fn running_count(&self) -> u32 {
        self.running_maps + self.running_reduces
    }

    /// Whether the node has capacity headroom for one more task with `demand`.
    pub fn has_headroom(&self, demand: &ResourceProfile) -> bool {
        self.used_cpu + demand.cpu <= self.cpu_capacity + 1e-9
            && self.used_mem + demand.mem_mb <= self.mem_capacity + 1e-9
            && self.used_hdfs_rw + demand.hdfs_rw <= self.hdfs_rw_capacity + 1e-9
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeartbeatConfig {
    pub base_interval: SimTime,
    pub min_interval: SimTime,
    pub current_interval: SimTime,
}

impl Default for HeartbeatConfig {
    fn default() -> Self {
        HeartbeatConfig::new(SimTime::from_mins(10), SimTime::from_mins(2))
    }
}

impl HeartbeatConfig {
    pub fn new(base_interval: SimTime, min_interval: SimTime) -> Self {
        HeartbeatConfig {
            base_interval,
            min_interval,
            current_interval: base_interval,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_interval.0 == 0 {
            return Err(Error::Invalid("heartbeat min_interval must be positive".into()));
        }
        if !(self.min_interval <= self.current_interval && self.current_interval <= self.base_interval) {
            return Err(Error::Invalid(format!(
                "heartbeat intervals must satisfy min <= current <= base (got {} / {} / {})",
                self.min_interval, self.current_interval, self.base_interval
            )));
        }
        Ok(())
    }
}

fn default_map_slots() -> u32 {
    2
}
fn default_reduce_slots() -> u32 {
    2
}
fn default_cpu() -> f64 {
    8.0
}
fn default_mem() -> f64 {
    16_384.0
}
fn default_hdfs() -> f64 {
    400.0
}

/// One explicitly listed node in a topology file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    pub rack: String,
    #[serde(default = "default_map_slots")]
    pub map_slots: u32,
    #[serde(default = "default_reduce_slots")]
    pub reduce_slots: u32,
    #[serde(default = "default_cpu")]
    pub cpu: f64,
    #[serde(default = "default_mem")]
    pub mem_mb: f64,
    #[serde(default = "default_hdfs")]
    pub hdfs_rw: f64,
}

/// Shorthand for `count` identical nodes spread evenly over `racks` racks.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeGroupSpec {
    pub count: u32,
    #[serde(default = "one")]
    pub racks: u32,
    #[serde(default = "default_map_slots")]
    pub map_slots: u32,
    #[serde(default = "default_reduce_slots")]
    pub reduce_slots: u32,
    #[serde(default = "default_cpu")]
    pub cpu: f64,
    #[serde(default = "default_mem")]
    pub mem_mb: f64,
    #[serde(default = "default_hdfs")]
    pub hdfs_rw: f64,
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeartbeatSpec {
    #[serde(default = "default_base_interval")]
    pub base_interval_ms: u64,
    #[serde(default = "default_min_interval")]
    pub min_interval_ms: u64,
}

impl Default for HeartbeatSpec {
    fn default() -> Self {
        HeartbeatSpec {
            base_interval_ms: default_base_interval(),
            min_interval_ms: default_min_interval(),
        }
    }
}

fn default_base_interval() -> u64 {
    600_000
}
fn default_min_interval() -> u64 {
    120_000
}
fn default_expiry_multiple() -> u32 {
    2
}
fn default_timeout() -> u64 {
    600_000
}
fn default_attempts() -> u32 {
    4
}
fn default_remote_read() -> f64 {
    1.3
}

/// Cluster topology file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    #[serde(default)]
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub generate: Option<NodeGroupSpec>,
    #[serde(default)]
    pub heartbeat: HeartbeatSpec,
    /// Node is declared lost once `now - last_heartbeat > expiry_multiple * current_interval`.
    #[serde(default = "default_expiry_multiple")]
    pub expiry_multiple: u32,
    #[serde(default = "default_timeout")]
    pub attempt_timeout_ms: u64,
    #[serde(default = "default_attempts")]
    pub max_map_attempts: u32,
    #[serde(default = "default_attempts")]
    pub max_reduce_attempts: u32,
    #[serde(default = "default_remote_read")]
    pub remote_read_factor: f64,
}

impl ClusterSpec {
    /// A uniform cluster of `count` nodes on `racks` racks with default settings.
    pub fn uniform(count: u32, racks: u32, map_slots: u32, reduce_slots: u32) -> Self {
        ClusterSpec {
            nodes: Vec::new(),
            generate: Some(NodeGroupSpec {
                count,
                racks,
                map_slots,
                reduce_slots,
                cpu: default_cpu(),
                mem_mb: default_mem(),
                hdfs_rw: default_hdfs(),
            }),
            heartbeat: HeartbeatSpec::default(),
            expiry_multiple: default_expiry_multiple(),
            attempt_timeout_ms: default_timeout(),
            max_map_attempts: default_attempts(),
            max_reduce_attempts: default_attempts(),
            remote_read_factor: default_remote_read(),
        }
    }

    pub fn node_specs(&self) -> Vec<NodeSpec> {
        let mut out = self.nodes.clone();
        if let Some(g) = &self.generate {
            let racks = g.racks.max(1);
            for i in 0..g.count {
                let rack = (i as u64 * racks as u64 / g.count.max(1) as u64) as u32;
                out.push(NodeSpec {
                    name: format!("n{i}"),
                    rack: format!("r{rack}"),
                    map_slots: g.map_slots,
                    reduce_slots: g.reduce_slots,
                    cpu: g.cpu,
                    mem_mb: g.mem_mb,
                    hdfs_rw: g.hdfs_rw,
                });
            }
        }
        out
    }

    pub fn heartbeat_config(&self) -> HeartbeatConfig {
        HeartbeatConfig::new(
            SimTime(self.heartbeat.base_interval_ms),
            SimTime(self.heartbeat.min_interval_ms),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let specs = self.node_specs();
        if specs.is_empty() {
            return Err(Error::EmptyCluster);
        }
        let mut names = BTreeSet::new();
        for n in &specs {
            if !names.insert(n.name.as_str()) {
                return Err(Error::Invalid(format!("duplicate node name `{}`", n.name)));
            }
            if n.map_slots == 0 && n.reduce_slots == 0 {
                return Err(Error::Invalid(format!("node `{}` has no slots", n.name)));
            }
        }
        self.heartbeat_config().validate()?;
        if self.expiry_multiple == 0 {
            return Err(Error::Invalid("expiry_multiple must be at least 1".into()));
        }
        if self.max_map_attempts == 0 || self.max_reduce_attempts == 0 {
            return Err(Error::Invalid("max attempts must be at least 1".into()));
        }
        if self.remote_read_factor < 1.0 {
            return Err(Error::Invalid("remote_read_factor must be >= 1".into()));
        }
        Ok(())
    }
}

/// The set of nodes plus the JobTracker heartbeat settings.
#[derive(Clone, Debug)]
pub struct ClusterState {
    pub nodes: Vec<Node>,
    pub rack_names: Vec<String>,
    pub heartbeat: HeartbeatConfig,
    pub expiry_multiple: u32,
}

impl ClusterState {
    pub fn from_spec(spec: &ClusterSpec) -> Result<Self> {
        spec.validate()?;
        let mut rack_ids: BTreeMap<String, RackId> = BTreeMap::new();
        let mut rack_names = Vec::new();
        let mut nodes = Vec::new();
        for (i, ns) in spec.node_specs().into_iter().enumerate() {
            let rack = *rack_ids.entry(ns.rack.clone()).or_insert_with(|| {
                rack_names.push(ns.rack.clone());
                RackId(rack_names.len() as u32 - 1)
            });
            nodes.push(Node {
                id: NodeId(i as u32),
                name: ns.name,
                rack,
                map_slots: ns.map_slots,
                reduce_slots: ns.reduce_slots,
                cpu_capacity: ns.cpu,
                mem_capacity: ns.mem_mb,
                hdfs_rw_capacity: ns.hdfs_rw,
                state: NodeState::Alive,
                last_heartbeat: SimTime::ZERO,
                hosted_blocks: BTreeSet::new(),
                lost: false,
                partitioned: false,
                slowdown: 1.0,
                running: BTreeSet::new(),
                running_maps: 0,
                running_reduces: 0,
                used_cpu: 0.0,
                used_mem: 0.0,
                used_hdfs_rw: 0.0,
                finished_attempts: 0,
                failed_attempts: 0,
            });
        }
        Ok(ClusterState {
            nodes,
            rack_names,
            heartbeat: spec.heartbeat_config(),
            expiry_multiple: spec.expiry_multiple,
        })
    }

    pub fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes.get(id.index()).ok_or(Error::UnknownNode(id))
    }

    pub fn node_mut(&mut self, id: NodeId) -> Result<&mut Node> {
        self.nodes.get_mut(id.index()).ok_or(Error::UnknownNode(id))
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.name == name).map(|n| n.id)
    }

    pub fn rack_by_name(&self, name: &str) -> Option<RackId> {
        self.rack_names
            .iter()
            .position(|r| r == name)
            .map(|i| RackId(i as u32))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Heartbeat expiry window under the current interval.
    pub fn expiry(&self) -> SimTime {
        SimTime(self.heartbeat.current_interval.0 * self.expiry_multiple as u64)
    }

    /// Hop distance between two racks: 0 within a rack, otherwise the index gap.
    pub fn rack_distance(&self, a: NodeId, b: NodeId) -> u32 {
        let ra = self.nodes[a.index()].rack.0;
        let rb = self.nodes[b.index()].rack.0;
        ra.abs_diff(rb)
    }

    pub fn total_slots(&self, kind: TaskKind) -> u32 {
        self.nodes.iter().map(|n| n.slots(kind)).sum()
    }
}
