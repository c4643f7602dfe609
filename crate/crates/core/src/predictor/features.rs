//! Per-task attributes collected at scheduling time.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::SimState;
use crate::ids::{NodeId, TaskId};
use crate::workload::TaskKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExecutionType {
    Normal,
    Speculative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Label {
    Finished,
    Failed,
}

impl Label {
    pub fn is_failed(self) -> bool {
        self == Label::Failed
    }
}

/// CSV header, in order.
pub const CSV_COLUMNS: [&str; 23] = [
    "job_id",
    "task_id",
    "type",
    "priority",
    "locality",
    "locality_missing",
    "execution_type",
    "elapsed_execution_time",
    "nbr_prev_finished_attempts",
    "nbr_prev_failed_attempts",
    "nbr_reschedule_events",
    "nbr_prev_finished_tasks",
    "nbr_prev_failed_tasks",
    "tt_running_tasks",
    "tt_finished_tasks",
    "tt_failed_tasks",
    "tt_available_map_slots",
    "tt_available_reduce_slots",
    "job_total_tasks",
    "used_cpu",
    "used_mem",
    "used_hdfs_rw",
    "label",
];

/// Columns fed to the models: every CSV column except identifiers and the label.
pub const MODEL_FEATURES: [&str; 20] = [
    "type",
    "priority",
    "locality",
    "locality_missing",
    "execution_type",
    "elapsed_execution_time",
    "nbr_prev_finished_attempts",
    "nbr_prev_failed_attempts",
    "nbr_reschedule_events",
    "nbr_prev_finished_tasks",
    "nbr_prev_failed_tasks",
    "tt_running_tasks",
    "tt_finished_tasks",
    "tt_failed_tasks",
    "tt_available_map_slots",
    "tt_available_reduce_slots",
    "job_total_tasks",
    "used_cpu",
    "used_mem",
    "used_hdfs_rw",
];

pub const N_FEATURES: usize = MODEL_FEATURES.len();

/// Fingerprint of the model input schema; models refuse vectors from another schema.
pub fn schema_fingerprint() -> String {
    let mut h = Sha256::new();
    h.update(MODEL_FEATURES.join(",").as_bytes());
    hex::encode(&h.finalize()[..8])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub job_id: u32,
    pub task_id: u32,
    #[serde(rename = "type")]
    pub task_type: TaskKind,
    pub priority: i32,
    /// `None` for reduces, where locality is undefined.
    pub locality: Option<bool>,
    pub execution_type: ExecutionType,
    pub elapsed_execution_time: u64,
    pub nbr_prev_finished_attempts: u32,
    pub nbr_prev_failed_attempts: u32,
    pub nbr_reschedule_events: u32,
    pub nbr_prev_finished_tasks: u32,
    pub nbr_prev_failed_tasks: u32,
    pub tt_running_tasks: u32,
    pub tt_finished_tasks: u32,
    pub tt_failed_tasks: u32,
    pub tt_available_map_slots: u32,
    pub tt_available_reduce_slots: u32,
    pub job_total_tasks: u32,
    pub used_cpu: f64,
    pub used_mem: f64,
    pub used_hdfs_rw: f64,
    pub label: Option<Label>,
}

impl FeatureVector {
    /// Numeric model input in `MODEL_FEATURES` order. Undefined locality is imputed
    /// as 0 with the indicator column set.
    pub fn to_input(&self) -> [f64; N_FEATURES] {
        [
            match self.task_type {
                TaskKind::Map => 0.0,
                TaskKind::Reduce => 1.0,
            },
            self.priority as f64,
            self.locality.map(|l| l as u8 as f64).unwrap_or(0.0),
            self.locality.is_none() as u8 as f64,
            match self.execution_type {
                ExecutionType::Normal => 0.0,
                ExecutionType::Speculative => 1.0,
            },
            self.elapsed_execution_time as f64,
            self.nbr_prev_finished_attempts as f64,
            self.nbr_prev_failed_attempts as f64,
            self.nbr_reschedule_events as f64,
            self.nbr_prev_finished_tasks as f64,
            self.nbr_prev_failed_tasks as f64,
            self.tt_running_tasks as f64,
            self.tt_finished_tasks as f64,
            self.tt_failed_tasks as f64,
            self.tt_available_map_slots as f64,
            self.tt_available_reduce_slots as f64,
            self.job_total_tasks as f64,
            self.used_cpu,
            self.used_mem,
            self.used_hdfs_rw,
        ]
    }

    pub fn without_label(mut self) -> Self {
        self.label = None;
        self
    }
}

/// Collects the attributes of `task` as if it were launched on `node` now. Pure read.
pub fn extract_features(state: &SimState, task_id: TaskId, node_id: NodeId, speculative: bool) -> FeatureVector {
    let task = &state.tasks[task_id.index()];
    let job = &state.jobs[task.job.index()];
    let node = &state.cluster.nodes[node_id.index()];
    let elapsed = job
        .released_at
        .map(|r| state.clock.saturating_sub(r).0)
        .unwrap_or(0);
    FeatureVector {
        job_id: task.job.0,
        task_id: task.id.0,
        task_type: task.kind,
        priority: job.spec.priority,
        locality: match task.kind {
            TaskKind::Map => Some(task.is_preferred(node_id)),
            TaskKind::Reduce => None,
        },
        execution_type: if speculative { ExecutionType::Speculative } else { ExecutionType::Normal },
        elapsed_execution_time: elapsed,
        nbr_prev_finished_attempts: task.finished_attempts() as u32,
        nbr_prev_failed_attempts: task.failed_attempts() as u32,
        nbr_reschedule_events: task.reschedule_events,
        nbr_prev_finished_tasks: state.finished_tasks,
        nbr_prev_failed_tasks: state.failed_tasks,
        tt_running_tasks: node.running_count(),
        tt_finished_tasks: node.finished_attempts,
        tt_failed_tasks: node.failed_attempts,
        tt_available_map_slots: node.free_slots(TaskKind::Map),
        tt_available_reduce_slots: node.free_slots(TaskKind::Reduce),
        job_total_tasks: job.spec.total_tasks(),
        used_cpu: job.spec.resources.cpu,
        used_mem: job.spec.resources.mem_mb,
        used_hdfs_rw: job.spec.resources.hdfs_rw,
        label: None,
    }
}
