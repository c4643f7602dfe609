#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::de::DeserializeOwned;

use mrsim::cluster::ClusterSpec;
use mrsim::engine::{Engine, EngineConfig, SimState};
use mrsim::failure::FailurePlan;
use mrsim::ids::{AttemptId, ChainId, JobId, NodeId, TaskId};
use mrsim::pipeline::{self, AtlasModels, RunOutput, Scenario, SchedulerKind, SchedulerSettings};
use mrsim::scheduler::{Scheduler, SchedulerDecision};
use mrsim::time::SimTime;
use mrsim::workload::{
    AttemptStatus, DurationProfile, Job, JobSpec, JobStatus, JobType, ResourceProfile, Task, TaskAttempt, TaskKind,
    TaskStatus,
};

pub const HORIZON: SimTime = SimTime(7 * 24 * 3_600_000);

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn standard_scenario() -> Scenario {
    Scenario::load_dir(&repo_root().join("scenarios/standard")).expect("standard scenario loads")
}

pub fn yaml<T: DeserializeOwned>(text: &str) -> T {
    mrsim::config::parse_str(text, std::path::Path::new("inline.yaml")).expect("inline yaml parses")
}

pub fn scenario(cluster: &str, workload: &str, failures: &str) -> Scenario {
    Scenario {
        cluster: yaml::<ClusterSpec>(cluster),
        workload: yaml(workload),
        failures: if failures.is_empty() { FailurePlan::default() } else { yaml(failures) },
    }
}

/// A scheduler that never assigns anything; tests drive the engine by hand.
pub struct Idle;

impl Scheduler for Idle {
    fn name(&self) -> String {
        "idle".into()
    }

    fn decide(&mut self, _state: &SimState) -> SchedulerDecision {
        SchedulerDecision::Wait
    }
}

pub fn idle_engine(s: &Scenario, seed: u64) -> Engine {
    Engine::new(&s.cluster, &s.workload, &s.failures, Box::new(Idle), EngineConfig::new(seed, HORIZON)).unwrap()
}

pub fn engine_with(s: &Scenario, kind: SchedulerKind, seed: u64, models: Option<&AtlasModels>) -> Engine {
    let settings = SchedulerSettings::default();
    let sched = pipeline::build_scheduler(kind, &settings, models, true).unwrap();
    Engine::new(&s.cluster, &s.workload, &s.failures, sched, EngineConfig::new(seed, HORIZON)).unwrap()
}

pub fn run(scenario: &Scenario, kind: SchedulerKind, seed: u64, models: Option<&AtlasModels>) -> RunOutput {
    let settings = SchedulerSettings::default();
    let sched = pipeline::build_scheduler(kind, &settings, models, false).unwrap();
    pipeline::run_scenario(scenario, sched, seed, HORIZON, settings.speculation).unwrap()
}

/// One attempt description for hand-built jobs: status and duration in ms.
pub type RawAttempt = (AttemptStatus, u64);

/// Builds a terminal job (id 0) whose tasks carry the given attempts back to back.
/// Task status is FINISHED if any attempt finished, else FAILED (KILLED when every
/// attempt was killed).
pub fn build_job(maps: &[Vec<RawAttempt>], reduces: &[Vec<RawAttempt>]) -> (Job, Vec<Task>) {
    let mut tasks = Vec::new();
    let mut map_ids = Vec::new();
    let mut reduce_ids = Vec::new();
    let mut next_attempt = 0u32;
    for (kind, list, ids) in [(TaskKind::Map, maps, &mut map_ids), (TaskKind::Reduce, reduces, &mut reduce_ids)] {
        for (i, raw) in list.iter().enumerate() {
            let id = TaskId(tasks.len() as u32);
            let mut t = 0u64;
            let mut attempts = Vec::new();
            for (status, dur) in raw {
                attempts.push(TaskAttempt {
                    id: AttemptId(next_attempt),
                    node: NodeId(0),
                    start: SimTime(t),
                    end: Some(SimTime(t + dur)),
                    status: *status,
                    speculative: false,
                    local: true,
                    round: attempts.len() as u32 + 1,
                    planned_end: Some(SimTime(t + dur)),
                    orphaned_at: None,
                });
                next_attempt += 1;
                t += dur;
            }
            let status = if raw.iter().any(|a| a.0 == AttemptStatus::Finished) {
                TaskStatus::Finished
            } else if !raw.is_empty() && raw.iter().all(|a| a.0 == AttemptStatus::Killed) {
                TaskStatus::Killed
            } else {
                TaskStatus::Failed
            };
            tasks.push(Task {
                id,
                job: JobId(0),
                kind,
                index: i as u32,
                preferred_nodes: Vec::new(),
                block: None,
                attempts,
                status,
                penalty: 0,
                reschedule_events: 0,
                rounds: raw.len() as u32,
                pending_since: None,
            });
            ids.push(id);
        }
    }
    let spec = JobSpec {
        id: JobId(0),
        name: "j".into(),
        job_type: JobType::Wordcount,
        priority: 0,
        num_maps: maps.len() as u32,
        num_reduces: reduces.len() as u32,
        submit_time: SimTime::ZERO,
        duration: DurationProfile { map_mu_ms: 1.0, reduce_mu_ms: 1.0, sigma: 0.0 },
        resources: ResourceProfile { cpu: 1.0, mem_mb: 1.0, hdfs_rw: 1.0 },
        queue: None,
    };
    let job = Job {
        spec,
        chain: ChainId(0),
        status: JobStatus::Finished,
        submitted: true,
        released_at: Some(SimTime::ZERO),
        finished_at: None,
        maps: map_ids,
        reduces: reduce_ids,
        upstream: BTreeSet::new(),
        downstream: BTreeSet::new(),
        finished_maps: 0,
        finished_tasks: 0,
    };
    (job, tasks)
}
