//! Per-run metrics and multi-run comparison tables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{Engine, EngineStats};
use crate::error::{Error, Result};
use crate::predictor::{Confusion, EvalMetrics};
use crate::time::SimTime;
use crate::workload::{AttemptStatus, Job, JobStatus, Task, TaskKind, TaskStatus};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Job outcome as the indicator form of the product-of-sums success formula: every map
/// needs a FINISHED attempt among its first `max_map` attempts and every reduce one
/// among its first `max_reduce`. All tasks must be terminal.
pub fn job_status_eq1(job: &Job, tasks: &[Task], max_map: u32, max_reduce: u32) -> Result<bool> {
    let mut product: u64 = 1;
    for t in job.tasks() {
        let task = &tasks[t.index()];
        if !task.status.is_terminal() {
            return Err(Error::NonTerminalTask { task: t });
        }
        let cap = match task.kind {
            TaskKind::Map => max_map,
            TaskKind::Reduce => max_reduce,
        } as usize;
        let successes = task
            .attempts
            .iter()
            .take(cap)
            .filter(|a| a.status == AttemptStatus::Finished)
            .count() as u64;
        product = product.saturating_mul(successes);
    }
    Ok(product >= 1)
}

/// Summed attempt time of the slowest map plus that of the slowest reduce. Failed and
/// timed-out attempts count; killed copies do not.
pub fn job_time_eq2(job: &Job, tasks: &[Task]) -> Result<SimTime> {
    let task_sum = |t: &Task| -> Result<u64> {
        if !t.status.is_terminal() {
            return Err(Error::NonTerminalTask { task: t.id });
        }
        Ok(t.attempts
            .iter()
            .filter(|a| a.status != AttemptStatus::Killed)
            .filter_map(|a| a.duration())
            .map(|d| d.0)
            .sum())
    };
    let mut map_max = 0;
    for &t in &job.maps {
        map_max = map_max.max(task_sum(&tasks[t.index()])?);
    }
    let mut reduce_max = 0;
    for &t in &job.reduces {
        reduce_max = reduce_max.max(task_sum(&tasks[t.index()])?);
    }
    Ok(SimTime(map_max + reduce_max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobReport {
    pub job: u32,
    pub name: String,
    pub job_type: String,
    pub chain: u32,
    pub status: JobStatus,
    /// 1 / 0 job outcome; absent when the run stopped before the job settled.
    pub eq1: Option<u8>,
    pub eq2_ms: Option<u64>,
    pub submit_ms: u64,
    pub release_ms: Option<u64>,
    pub end_ms: Option<u64>,
    pub wall_clock_ms: Option<u64>,
    pub maps: u32,
    pub reduces: u32,
    pub finished_tasks: u32,
    pub failed_tasks: u32,
    pub killed_tasks: u32,
    pub other_tasks: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub jobs: u32,
    pub finished_jobs: u32,
    pub failed_jobs: u32,
    pub pct_failed_jobs: f64,
    pub tasks: u32,
    pub finished_tasks: u32,
    pub failed_tasks: u32,
    pub killed_tasks: u32,
    pub pct_failed_tasks: f64,
    pub pct_finished_tasks: f64,
    pub pct_killed_tasks: f64,
    pub attempts: u32,
    pub failed_attempts: u32,
    pub pct_failed_attempts: f64,
    /// Wall-clock (end - release) over FINISHED jobs.
    pub mean_job_time_ms: f64,
    pub median_job_time_ms: f64,
    pub mean_eq2_ms: f64,
    pub makespan_ms: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResourceTotals {
    pub cpu_ms: f64,
    pub mem_mb_ms: f64,
    pub hdfs_rw_units: f64,
}

impl ResourceTotals {
    pub fn add_attempt(&mut self, duration: SimTime, cpu: f64, mem_mb: f64, hdfs_rw: f64) {
        let ms = duration.0 as f64;
        self.cpu_ms += ms * cpu;
        self.mem_mb_ms += ms * mem_mb;
        self.hdfs_rw_units += ms / 1000.0 * hdfs_rw;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorStats {
    pub confusion: Confusion,
    pub metrics: EvalMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub schema_version: u32,
    pub scheduler: String,
    pub seed: u64,
    pub scenario_fingerprint: String,
    pub end_clock_ms: u64,
    pub jobs: Vec<JobReport>,
    pub aggregates: Aggregates,
    pub resources: ResourceTotals,
    pub predictor: Option<PredictorStats>,
    pub engine: EngineStats,
    pub config: serde_json::Value,
}

fn pct(num: u32, den: u32) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

fn median(mut v: Vec<u64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

impl SimReport {
    pub fn from_engine(engine: &Engine) -> SimReport {
        let state = engine.state();
        let limits = state.limits;
        let mut jobs = Vec::with_capacity(state.jobs.len());
        let mut agg = Aggregates::default();
        let mut resources = ResourceTotals::default();
        for job in &state.jobs {
            let mut counts = [0u32; 4];
            for t in job.tasks() {
                let i = match state.tasks[t.index()].status {
                    TaskStatus::Finished => 0,
                    TaskStatus::Failed => 1,
                    TaskStatus::Killed => 2,
                    _ => 3,
                };
                counts[i] += 1;
            }
            let eq1 = job_status_eq1(job, &state.tasks, limits.max_map_attempts, limits.max_reduce_attempts)
                .ok()
                .map(u8::from);
            let eq2 = job_time_eq2(job, &state.tasks).ok().map(|t| t.0);
            let wall = match (job.released_at, job.finished_at) {
                (Some(r), Some(e)) => Some((e - r).0),
                _ => None,
            };
            jobs.push(JobReport {
                job: job.spec.id.0,
                name: job.spec.name.clone(),
                job_type: job.spec.job_type.to_string(),
                chain: job.chain.0,
                status: job.status,
                eq1,
                eq2_ms: eq2,
                submit_ms: job.spec.submit_time.0,
                release_ms: job.released_at.map(|t| t.0),
                end_ms: job.finished_at.map(|t| t.0),
                wall_clock_ms: wall,
                maps: job.spec.num_maps,
                reduces: job.spec.num_reduces,
                finished_tasks: counts[0],
                failed_tasks: counts[1],
                killed_tasks: counts[2],
                other_tasks: counts[3],
            });
            agg.finished_tasks += counts[0];
            agg.failed_tasks += counts[1];
            agg.killed_tasks += counts[2];
            agg.tasks += job.spec.total_tasks();
        }
        for task in &state.tasks {
            let demand = state.jobs[task.job.index()].spec.resources;
            for a in &task.attempts {
                agg.attempts += 1;
                if a.status.is_failure() {
                    agg.failed_attempts += 1;
                }
                if let Some(d) = a.duration() {
                    resources.add_attempt(d, demand.cpu, demand.mem_mb, demand.hdfs_rw);
                }
            }
        }
        agg.jobs = jobs.len() as u32;
        agg.finished_jobs = jobs.iter().filter(|j| j.status == JobStatus::Finished).count() as u32;
        agg.failed_jobs = jobs.iter().filter(|j| j.status == JobStatus::Failed).count() as u32;
        agg.pct_failed_jobs = pct(agg.failed_jobs, agg.jobs);
        let terminal = agg.finished_tasks + agg.failed_tasks + agg.killed_tasks;
        agg.pct_failed_tasks = pct(agg.failed_tasks, terminal);
        agg.pct_finished_tasks = pct(agg.finished_tasks, terminal);
        agg.pct_killed_tasks = pct(agg.killed_tasks, terminal);
        agg.pct_failed_attempts = pct(agg.failed_attempts, agg.attempts);
        let times: Vec<u64> = jobs
            .iter()
            .filter(|j| j.status == JobStatus::Finished)
            .filter_map(|j| j.wall_clock_ms)
            .collect();
        agg.mean_job_time_ms = if times.is_empty() {
            0.0
        } else {
            times.iter().sum::<u64>() as f64 / times.len() as f64
        };
        agg.median_job_time_ms = median(times);
        let eq2s: Vec<u64> = jobs.iter().filter_map(|j| j.eq2_ms).collect();
        agg.mean_eq2_ms = if eq2s.is_empty() {
            0.0
        } else {
            eq2s.iter().sum::<u64>() as f64 / eq2s.len() as f64
        };
        agg.makespan_ms = jobs.iter().filter_map(|j| j.end_ms).max().unwrap_or(0);

        let predictor = engine.scheduler().prediction_stats().map(|c| PredictorStats {
            confusion: c,
            metrics: EvalMetrics::from_confusion(c),
        });
        SimReport {
            schema_version: REPORT_SCHEMA_VERSION,
            scheduler: engine.scheduler().name(),
            seed: state.seed,
            scenario_fingerprint: String::new(),
            end_clock_ms: state.clock.0,
            jobs,
            aggregates: agg,
            resources,
            predictor,
            engine: engine.stats().clone(),
            config: serde_json::Value::Null,
        }
    }

    /// Sorted-key JSON; byte-identical for identical runs.
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut s = serde_json::to_string_pretty(&value).expect("value serializes");
        s.push('\n');
        s
    }
}

/// Comparison table column order (CSV header).
pub const COMPARISON_COLUMNS: [&str; 17] = [
    "scheduler",
    "runs",
    "pct_failed_jobs",
    "pct_failed_tasks",
    "pct_failed_attempts",
    "mean_job_time_ms",
    "mean_eq2_ms",
    "cpu_ms",
    "mem_mb_ms",
    "hdfs_rw_units",
    "delta_pct_failed_jobs",
    "delta_pct_failed_tasks",
    "delta_pct_failed_attempts",
    "delta_mean_job_time",
    "delta_cpu_ms",
    "delta_mem_mb_ms",
    "delta_hdfs_rw_units",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scheduler: String,
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub pct_failed_jobs: f64,
    pub pct_failed_tasks: f64,
    pub pct_failed_attempts: f64,
    pub mean_job_time_ms: f64,
    pub mean_eq2_ms: f64,
    pub cpu_ms: f64,
    pub mem_mb_ms: f64,
    pub hdfs_rw_units: f64,
    /// Relative change against the baseline row: (x - base) / base. `None` when the
    /// baseline is zero and x is not.
    pub delta_pct_failed_jobs: Option<f64>,
    pub delta_pct_failed_tasks: Option<f64>,
    pub delta_pct_failed_attempts: Option<f64>,
    pub delta_mean_job_time: Option<f64>,
    pub delta_cpu_ms: Option<f64>,
    pub delta_mem_mb_ms: Option<f64>,
    pub delta_hdfs_rw_units: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub schema_version: u32,
    pub baseline: String,
    pub scenario_fingerprint: String,
    pub rows: Vec<ComparisonRow>,
}

pub fn relative_delta(x: f64, base: f64) -> Option<f64> {
    if base == 0.0 {
        (x == 0.0).then_some(0.0)
    } else {
        Some((x - base) / base)
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Per-scheduler means over runs, with deltas against the first scheduler seen.
/// All reports must come from the same scenario and each scheduler from the same seeds.
pub fn aggregate(reports: &[SimReport]) -> Result<ComparisonTable> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Invalid("nothing to aggregate".into()))?;
    if let Some(r) = reports.iter().find(|r| r.scenario_fingerprint != first.scenario_fingerprint) {
        return Err(Error::ScenarioMismatch(format!(
            "{} (seed {}) ran scenario {} but {} ran {}",
            r.scheduler, r.seed, r.scenario_fingerprint, first.scheduler, first.scenario_fingerprint
        )));
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<&SimReport>> = BTreeMap::new();
    for r in reports {
        if !groups.contains_key(&r.scheduler) {
            order.push(r.scheduler.clone());
        }
        groups.entry(r.scheduler.clone()).or_default().push(r);
    }
    let seeds_of = |g: &[&SimReport]| {
        let mut s: Vec<u64> = g.iter().map(|r| r.seed).collect();
        s.sort_unstable();
        s
    };
    let base_seeds = seeds_of(&groups[&order[0]]);
    let mut rows = Vec::new();
    for name in &order {
        let g = &groups[name];
        let seeds = seeds_of(g);
        if seeds != base_seeds {
            return Err(Error::ScenarioMismatch(format!("{name} ran seeds {seeds:?}, baseline ran {base_seeds:?}")));
        }
        let m = |f: &dyn Fn(&SimReport) -> f64| mean(g.iter().map(|r| f(r)));
        rows.push(ComparisonRow {
            scheduler: name.clone(),
            runs: g.len(),
            seeds,
            pct_failed_jobs: m(&|r| r.aggregates.pct_failed_jobs),
            pct_failed_tasks: m(&|r| r.aggregates.pct_failed_tasks),
            pct_failed_attempts: m(&|r| r.aggregates.pct_failed_attempts),
            mean_job_time_ms: m(&|r| r.aggregates.mean_job_time_ms),
            mean_eq2_ms: m(&|r| r.aggregates.mean_eq2_ms),
            cpu_ms: m(&|r| r.resources.cpu_ms),
            mem_mb_ms: m(&|r| r.resources.mem_mb_ms),
            hdfs_rw_units: m(&|r| r.resources.hdfs_rw_units),
            delta_pct_failed_jobs: None,
            delta_pct_failed_tasks: None,
            delta_pct_failed_attempts: None,
            delta_mean_job_time: None,
            delta_cpu_ms: None,
            delta_mem_mb_ms: None,
            delta_hdfs_rw_units: None,
        });
    }
    let base = rows[0].clone();
    for r in &mut rows {
        r.delta_pct_failed_jobs = relative_delta(r.pct_failed_jobs, base.pct_failed_jobs);
        r.delta_pct_failed_tasks = relative_delta(r.pct_failed_tasks, base.pct_failed_tasks);
        r.delta_pct_failed_attempts = relative_delta(r.pct_failed_attempts, base.pct_failed_attempts);
        r.delta_mean_job_time = relative_delta(r.mean_job_time_ms, base.mean_job_time_ms);
        r.delta_cpu_ms = relative_delta(r.cpu_ms, base.cpu_ms);
        r.delta_mem_mb_ms = relative_delta(r.mem_mb_ms, base.mem_mb_ms);
        r.delta_hdfs_rw_units = relative_delta(r.hdfs_rw_units, base.hdfs_rw_units);
    }
    Ok(ComparisonTable {
        schema_version: REPORT_SCHEMA_VERSION,
        baseline: order[0].clone(),
        scenario_fingerprint: first.scenario_fingerprint.clone(),
        rows,
    })
}

impl ComparisonTable {
    pub fn row(&self, scheduler: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.scheduler == scheduler)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(COMPARISON_COLUMNS).expect("in-memory write");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.scheduler.clone(),
                r.runs.to_string(),
                r.pct_failed_jobs.to_string(),
                r.pct_failed_tasks.to_string(),
                r.pct_failed_attempts.to_string(),
                r.mean_job_time_ms.to_string(),
                r.mean_eq2_ms.to_string(),
                r.cpu_ms.to_string(),
                r.mem_mb_ms.to_string(),
                r.hdfs_rw_units.to_string(),
                opt(r.delta_pct_failed_jobs),
                opt(r.delta_pct_failed_tasks),
                opt(r.delta_pct_failed_attempts),
                opt(r.delta_mean_job_time),
                opt(r.delta_cpu_ms),
                opt(r.delta_mem_mb_ms),
                opt(r.delta_hdfs_rw_units),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("table serializes");
        serde_json::to_string_pretty(&value).expect("value serializes") + "\n"
    }
}
