//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//! Run with `cargo test -p mrsim --test acceptance`.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{build_job, run, standard_scenario, RawAttempt, HORIZON};
use mrsim::atlas::adapt_heartbeat;
use mrsim::cluster::{ClusterSpec, HeartbeatConfig};
use mrsim::engine::TraceEntry;
use mrsim::failure::FailurePlan;
use mrsim::pipeline::{self, AtlasModels, Scenario, SchedulerKind, SchedulerSettings};
use mrsim::predictor::{
    cross_validate_matrix, fold_partition, log_loss_and_gradient, Confusion, EvalMetrics, ExecutionType,
    FeatureVector, Hyperparams, ModelKind, MODEL_FEATURES, N_FEATURES,
};
use mrsim::report::{job_status_eq1, job_time_eq2};
use mrsim::rng::{stream, stream_rng};
use mrsim::time::SimTime;
use mrsim::workload::{AttemptStatus, TaskKind, WorkloadSpec};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, budget: Duration, what: &str) -> Result<(), String> {
    ensure(elapsed < budget, || format!("{what} took {elapsed:?}, budget {budget:?}"))
}

// ---- 1 ---------------------------------------------------------------------------

/// Literal product-of-sums: per task the number of FINISHED attempts among the first
/// `cap`, multiplied over all tasks; success iff the product is at least 1.
fn eq1_oracle(maps: &[Vec<bool>], reduces: &[Vec<bool>], k: usize, l: usize) -> bool {
    let sum = |flags: &Vec<bool>, cap: usize| -> u64 { flags.iter().take(cap).map(|&s| s as u64).sum() };
    let p_maps: u64 = maps.iter().map(|f| sum(f, k)).product();
    let p_reduces: u64 = reduces.iter().map(|f| sum(f, l)).product();
    p_maps * p_reduces >= 1
}

/// All per-task finished-flag vectors of length 1..=2.
fn flag_vectors() -> Vec<Vec<bool>> {
    let mut out = Vec::new();
    for len in 1..=2usize {
        for bits in 0..(1u32 << len) {
            out.push((0..len).map(|j| bits >> j & 1 == 1).collect());
        }
    }
    out
}

fn cartesian(choices: &[Vec<bool>], n: usize) -> Vec<Vec<Vec<bool>>> {
    let mut acc: Vec<Vec<Vec<bool>>> = vec![Vec::new()];
    for _ in 0..n {
        acc = acc
            .into_iter()
            .flat_map(|prefix| {
                choices.iter().map(move |c| {
                    let mut p = prefix.clone();
                    p.push(c.clone());
                    p
                })
            })
            .collect();
    }
    acc
}

const NOT_FINISHED: [AttemptStatus; 3] = [AttemptStatus::Failed, AttemptStatus::FailedTimeout, AttemptStatus::Killed];

fn to_raw(flags: &[Vec<bool>], salt: usize) -> Vec<Vec<RawAttempt>> {
    flags
        .iter()
        .enumerate()
        .map(|(i, f)| {
            f.iter()
                .enumerate()
                .map(|(j, &ok)| {
                    let status = if ok { AttemptStatus::Finished } else { NOT_FINISHED[(salt + i + j) % 3] };
                    (status, 1000)
                })
                .collect()
        })
        .collect()
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let vectors = flag_vectors();
    let mut cases = 0usize;
    for m in 1..=3 {
        for r in 0..=2 {
            let map_sets = cartesian(&vectors, m);
            let reduce_sets = cartesian(&vectors, r);
            for maps in &map_sets {
                for reduces in &reduce_sets {
                    let (job, tasks) = build_job(&to_raw(maps, cases), &to_raw(reduces, cases + 1));
                    for (k, l) in [(4u32, 4u32), (1, 1), (1, 2)] {
                        let got = job_status_eq1(&job, &tasks, k, l).map_err(|e| e.to_string())?;
                        let want = eq1_oracle(maps, reduces, k as usize, l as usize);
                        ensure(got == want, || format!("mismatch on maps={maps:?} reduces={reduces:?} K={k} L={l}"))?;
                    }
                    cases += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(1), "enumeration")?;
    Ok(format!("{cases} status combinations x 3 attempt caps, {elapsed:.2?}"))
}

// ---- 2 ---------------------------------------------------------------------------

/// Flat attempt log line: (task, kind, start, end, status).
type LogLine = (u32, TaskKind, u64, u64, AttemptStatus);

fn eq2_from_log(log: &[LogLine]) -> u64 {
    let mut per_task: BTreeMap<(u32, TaskKind), u64> = BTreeMap::new();
    for &(task, kind, start, end, status) in log {
        let e = per_task.entry((task, kind)).or_insert(0);
        if status != AttemptStatus::Killed {
            *e += end - start;
        }
    }
    let max_of = |k: TaskKind| per_task.iter().filter(|((_, kk), _)| *kk == k).map(|(_, &v)| v).max().unwrap_or(0);
    max_of(TaskKind::Map) + max_of(TaskKind::Reduce)
}

const STATUSES: [AttemptStatus; 4] =
    [AttemptStatus::Finished, AttemptStatus::Failed, AttemptStatus::FailedTimeout, AttemptStatus::Killed];

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..1000 {
        let n_maps = rng.random_range(1..=5);
        let n_reduces = rng.random_range(0..=3);
        let mut gen = |n: usize| -> Vec<Vec<RawAttempt>> {
            (0..n)
                .map(|_| {
                    (0..rng.random_range(1..=4))
                        .map(|_| (STATUSES[rng.random_range(0..4)], rng.random_range(1..=900_000u64)))
                        .collect()
                })
                .collect()
        };
        let maps = gen(n_maps);
        let reduces = gen(n_reduces);
        let (job, tasks) = build_job(&maps, &reduces);
        let log: Vec<LogLine> = tasks
            .iter()
            .flat_map(|t| {
                t.attempts
                    .iter()
                    .map(move |a| (t.id.0, t.kind, a.start.0, a.end.unwrap().0, a.status))
            })
            .collect();
        let got = job_time_eq2(&job, &tasks).map_err(|e| e.to_string())?.0;
        let want = eq2_from_log(&log);
        ensure(got == want, || format!("case {case}: eq2 {got} != recount {want}"))?;
    }

    // Same recount against the attempt logs of full simulated runs.
    let scenario = standard_scenario();
    let mut jobs_checked = 0;
    for kind in [SchedulerKind::Fifo, SchedulerKind::Fair] {
        let out = run(&scenario, kind, 5, None);
        for jr in &out.report.jobs {
            let log: Vec<LogLine> = out
                .attempts
                .iter()
                .filter(|r| r.job.0 == jr.job)
                .map(|r| (r.attempt.task.0, r.kind, r.start.0, r.end.map_or(r.start.0, |e| e.0), r.status))
                .collect();
            if let Some(eq2) = jr.eq2_ms {
                ensure(eq2 == eq2_from_log(&log), || format!("run job {}: {eq2} != recount", jr.job))?;
                jobs_checked += 1;
            }
        }
    }
    Ok(format!("1000 random jobs + {jobs_checked} simulated jobs match the log recount"))
}

// ---- 3 ---------------------------------------------------------------------------

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..1000 {
        let (tp, tn, fp, fn_) = if case == 0 {
            (0, 0, 0, 0)
        } else {
            (rng.random_range(0..700u64), rng.random_range(0..700u64), rng.random_range(0..700u64), rng.random_range(0..700u64))
        };
        let mut pairs: Vec<(bool, bool)> = Vec::new();
        pairs.extend(std::iter::repeat_n((true, true), tp as usize));
        pairs.extend(std::iter::repeat_n((false, false), tn as usize));
        pairs.extend(std::iter::repeat_n((true, false), fp as usize));
        pairs.extend(std::iter::repeat_n((false, true), fn_ as usize));
        pairs.shuffle(&mut rng);

        let c = Confusion::from_pairs(pairs.iter().copied());
        let recount = |pred: bool, actual: bool| pairs.iter().filter(|&&p| p == (pred, actual)).count() as u64;
        ensure(
            (c.tp, c.tn, c.fp, c.fn_) == (recount(true, true), recount(false, false), recount(true, false), recount(false, true)),
            || format!("case {case}: recount mismatch"),
        )?;
        let m = EvalMetrics::from_confusion(c);
        let n = (tp + tn + fp + fn_) as f64;
        let div = |a: u64, b: f64| if b == 0.0 { 0.0 } else { a as f64 / b };
        ensure(m.accuracy == div(tp + tn, n), || format!("case {case}: accuracy"))?;
        ensure(m.precision == div(tp, (tp + fp) as f64), || format!("case {case}: precision"))?;
        ensure(m.recall == div(tp, (tp + fn_) as f64), || format!("case {case}: recall"))?;
        ensure(m.error == div(fp + fn_, n), || format!("case {case}: error"))?;
        if n > 0.0 {
            ensure(m.accuracy + m.error == 1.0, || format!("case {case}: accuracy + error = {}", m.accuracy + m.error))?;
        }
    }
    Ok("1000 matrices: formulas, accuracy + error = 1 and pair recount exact".into())
}

// ---- 4 ---------------------------------------------------------------------------

fn criterion_4() -> Check {
    for n in [10usize, 100, 105, 1000] {
        for seed in 0..5u64 {
            let folds = fold_partition(n, 10, &mut stream_rng(seed, &[stream::CV]));
            ensure(folds.len() == 10, || format!("n={n}: {} folds", folds.len()))?;
            let mut seen = vec![0u32; n];
            for f in &folds {
                for &i in f {
                    seen[i] += 1;
                }
            }
            ensure(seen.iter().all(|&c| c == 1), || format!("n={n}: folds not a partition"))?;
            let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
            let (lo, hi) = (*sizes.iter().min().unwrap(), *sizes.iter().max().unwrap());
            ensure(hi - lo <= 1, || format!("n={n}: fold sizes {sizes:?}"))?;
        }
    }
    Ok("n in {10, 100, 105, 1000}: disjoint, complete, sizes within 1".into())
}

// ---- 5 ---------------------------------------------------------------------------

/// Synthetic rows where failure is a threshold rule on two Table-1 features and every
/// other feature is noise.
pub fn synthetic_rows(n: usize, seed: u64) -> (Vec<[f64; N_FEATURES]>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let kind = if rng.random_bool(0.7) { TaskKind::Map } else { TaskKind::Reduce };
        let fv = FeatureVector {
            job_id: i as u32,
            task_id: i as u32,
            task_type: kind,
            priority: rng.random_range(-2..=2),
            locality: (kind == TaskKind::Map).then(|| rng.random_bool(0.6)),
            execution_type: if rng.random_bool(0.2) { ExecutionType::Speculative } else { ExecutionType::Normal },
            elapsed_execution_time: rng.random_range(0..3_600_000),
            nbr_prev_finished_attempts: rng.random_range(0..3),
            nbr_prev_failed_attempts: rng.random_range(0..4),
            nbr_reschedule_events: rng.random_range(0..3),
            nbr_prev_finished_tasks: rng.random_range(0..500),
            nbr_prev_failed_tasks: rng.random_range(0..20),
            tt_running_tasks: rng.random_range(0..4),
            tt_finished_tasks: rng.random_range(0..100),
            tt_failed_tasks: rng.random_range(0..10),
            tt_available_map_slots: rng.random_range(0..3),
            tt_available_reduce_slots: rng.random_range(0..2),
            job_total_tasks: rng.random_range(2..40),
            used_cpu: rng.random_range(0.5..2.0),
            used_mem: rng.random_range(256.0..4096.0),
            used_hdfs_rw: rng.random_range(10.0..80.0),
            label: None,
        };
        y.push(fv.nbr_prev_failed_attempts >= 2 || fv.tt_failed_tasks >= 7);
        x.push(fv.to_input());
    }
    (x, y)
}

fn criterion_5() -> Check {
    let start = Instant::now();
    let (x, y) = synthetic_rows(1000, 5);
    let hp = Hyperparams::default();
    let mut accs = Vec::new();
    for kind in [ModelKind::Tree, ModelKind::Forest] {
        let cv = cross_validate_matrix(&x, &y, kind, &hp, 11).map_err(|e| e.to_string())?;
        ensure(cv.mean.accuracy >= 0.95, || format!("{kind}: mean CV accuracy {:.4}", cv.mean.accuracy))?;
        accs.push(format!("{kind} {:.4}", cv.mean.accuracy));
    }

    // Central finite differences against the analytic gradient on standardized inputs.
    let sample = &x[..200];
    let rows: Vec<Vec<f64>> = {
        let n = sample.len() as f64;
        let mean: Vec<f64> = (0..N_FEATURES).map(|j| sample.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let sd: Vec<f64> = (0..N_FEATURES)
            .map(|j| (sample.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt())
            .map(|s| if s > 0.0 { s } else { 1.0 })
            .collect();
        sample.iter().map(|r| (0..N_FEATURES).map(|j| (r[j] - mean[j]) / sd[j]).collect()).collect()
    };
    let ys = &y[..200];
    let w: Vec<f64> = ys.iter().map(|&v| if v { 1.7 } else { 0.6 }).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst = 0.0f64;
    for l2 in [0.0, 0.1] {
        let theta: Vec<f64> = (0..=N_FEATURES).map(|_| rng.random_range(-0.5..0.5)).collect();
        let (_, grad) = log_loss_and_gradient(&theta, &rows, ys, &w, l2);
        for j in 0..theta.len() {
            let h = 1e-4;
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (log_loss_and_gradient(&up, &rows, ys, &w, l2).0 - log_loss_and_gradient(&dn, &rows, ys, &w, l2).0) / (2.0 * h);
            let rel = (fd - grad[j]).abs() / grad[j].abs().max(1e-8);
            worst = worst.max(rel);
            ensure(rel < 1e-5, || format!("gradient[{j}] ({}) rel err {rel:e}", if j == 0 { "intercept" } else { MODEL_FEATURES[j - 1] }))?;
        }
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(30), "predictor sanity")?;
    Ok(format!("{}; GLM gradient worst rel err {worst:.1e}; {elapsed:.1?}", accs.join(", ")))
}

// ---- 6 ---------------------------------------------------------------------------

fn heartbeat_trace(entries: &[TraceEntry]) -> Vec<u64> {
    entries
        .iter()
        .filter_map(|e| match e {
            TraceEntry::HeartbeatInterval { interval, .. } => Some(interval.0),
            _ => None,
        })
        .collect()
}

fn criterion_6() -> Check {
    let mut hb = HeartbeatConfig::new(SimTime::from_mins(10), SimTime::from_mins(2));
    let mut seen = Vec::new();
    for fraction in [0.5, 0.5, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0 / 3.0, 0.34] {
        hb.current_interval = adapt_heartbeat(&hb, fraction, 1.0 / 3.0, 1.5);
        ensure((hb.min_interval..=hb.base_interval).contains(&hb.current_interval), || {
            format!("interval {} left bounds", hb.current_interval.0)
        })?;
        seen.push(hb.current_interval.0 / 1000);
    }
    let want = [300, 150, 120, 120, 180, 270, 405, 600, 600, 600, 300];
    ensure(seen == want, || format!("unit trace {seen:?} != {want:?}"))?;

    // In the engine: half the nodes die for good, ATLAS shortens the interval.
    let cluster: ClusterSpec = mrsim::config::parse_str(
        "generate: { count: 6, racks: 2, map_slots: 2, reduce_slots: 1 }\nattempt_timeout_ms: 3600000\n",
        Path::new("c.yaml"),
    )
    .map_err(|e| e.to_string())?;
    let workload: WorkloadSpec = mrsim::config::parse_str(
        "profiles: { teragen: { map_mu_ms: 300000, sigma: 0.0 } }\nchains: [ { jobs: [ { type: teragen, maps: 120, reduces: 0 } ] } ]\n",
        Path::new("w.yaml"),
    )
    .map_err(|e| e.to_string())?;
    let failures: FailurePlan = mrsim::config::parse_str(
        "entries:\n  - { at_ms: 60000, kind: node_kill, node: n0 }\n  - { at_ms: 60000, kind: node_kill, node: n1 }\n  - { at_ms: 60000, kind: node_kill, node: n3 }\n",
        Path::new("f.yaml"),
    )
    .map_err(|e| e.to_string())?;
    let scenario = Scenario { cluster, workload, failures };
    let models = AtlasModels::constant(false);
    let out = run(&scenario, SchedulerKind::Atlas, 1, Some(&models));
    let intervals = heartbeat_trace(&out.trace);
    ensure(intervals.starts_with(&[300_000, 150_000, 120_000]), || format!("engine intervals {intervals:?}"))?;
    ensure(intervals.iter().all(|&i| (120_000..=600_000).contains(&i)), || format!("engine intervals {intervals:?}"))?;
    ensure(out.report.engine.min_heartbeat_interval_ms == 120_000, || "minimum not reached".into())?;
    Ok(format!("unit trace {:?} s; engine trace starts {:?} ms", &seen[..4], &intervals[..3]))
}

// ---- 7 ---------------------------------------------------------------------------

fn no_failures(s: &Scenario) -> Scenario {
    Scenario {
        failures: FailurePlan::default(),
        ..s.clone()
    }
}

fn criterion_7() -> Check {
    let scenario = no_failures(&standard_scenario());
    let models = AtlasModels::constant(false);
    let mut events = 0;
    for seed in 1..=5 {
        let fifo = run(&scenario, SchedulerKind::Fifo, seed, None);
        let atlas = run(&scenario, SchedulerKind::Atlas, seed, Some(&models));
        ensure(!fifo.trace.is_empty(), || "empty trace".into())?;
        ensure(fifo.trace == atlas.trace, || {
            let i = fifo.trace.iter().zip(&atlas.trace).position(|(a, b)| a != b).unwrap_or(fifo.trace.len().min(atlas.trace.len()));
            format!("seed {seed}: traces diverge at entry {i}")
        })?;
        events += fifo.trace.len();
    }
    Ok(format!("5 seeds, {events} identical trace entries"))
}

// ---- 8 ---------------------------------------------------------------------------

fn criterion_8() -> Check {
    let scenario = standard_scenario();
    let trained = |s: u64| {
        pipeline::train_atlas_models(&scenario, &[2001, 2002], ModelKind::Forest, &Hyperparams::default(), s, HORIZON).unwrap()
    };
    let (a, b) = (trained(0), trained(0));
    let fail = AtlasModels::constant(true);
    let mut runs = 0;
    for seed in [7u64, 8] {
        for (kind, models) in [
            (SchedulerKind::Fifo, None),
            (SchedulerKind::Fair, None),
            (SchedulerKind::Capacity, None),
            (SchedulerKind::Atlas, Some(&fail)),
        ] {
            let r1 = run(&scenario, kind, seed, models).report.to_canonical_json();
            let r2 = run(&scenario, kind, seed, models).report.to_canonical_json();
            ensure(r1 == r2, || format!("{kind:?} seed {seed}: reports differ"))?;
            runs += 1;
        }
        let r1 = run(&scenario, SchedulerKind::Atlas, seed, Some(&a)).report.to_canonical_json();
        let r2 = run(&scenario, SchedulerKind::Atlas, seed, Some(&b)).report.to_canonical_json();
        ensure(r1 == r2, || format!("trained atlas seed {seed}: reports differ"))?;
        runs += 1;
    }
    Ok(format!("{runs} run pairs byte-identical (incl. independently trained models)"))
}

// ---- 9 ---------------------------------------------------------------------------

fn criterion_9() -> Check {
    let start = Instant::now();
    let scenario = standard_scenario();
    let settings = SchedulerSettings::default();
    let train_seeds: Vec<u64> = (1001..=1010).collect();
    let seeds: Vec<u64> = (1..=20).collect();
    let models =
        pipeline::train_atlas_models(&scenario, &train_seeds, ModelKind::Forest, &Hyperparams::default(), 0, HORIZON)
            .map_err(|e| e.to_string())?;
    let (_, table) = pipeline::compare(&scenario, &[SchedulerKind::Fifo, SchedulerKind::Atlas], &seeds, &settings, Some(&models), HORIZON)
        .map_err(|e| e.to_string())?;
    let fifo = table.row("fifo").ok_or("no fifo row")?;
    let atlas = table.row("atlas-fifo").ok_or("no atlas row")?;
    let reduction = 1.0 - atlas.pct_failed_tasks / fifo.pct_failed_tasks;
    let time_ratio = atlas.mean_job_time_ms / fifo.mean_job_time_ms;
    let summary = format!(
        "failed tasks {:.3}% -> {:.3}% ({:.1}% lower), mean job time {:.0} -> {:.0} ms ({:+.1}%)",
        fifo.pct_failed_tasks,
        atlas.pct_failed_tasks,
        100.0 * reduction,
        fifo.mean_job_time_ms,
        atlas.mean_job_time_ms,
        100.0 * (time_ratio - 1.0)
    );
    ensure(fifo.pct_failed_tasks > 0.0, || format!("FIFO shows no failed tasks: {summary}"))?;
    ensure(atlas.pct_failed_tasks < fifo.pct_failed_tasks && reduction >= 0.15, || summary.clone())?;
    ensure(atlas.mean_job_time_ms <= 1.02 * fifo.mean_job_time_ms, || summary.clone())?;
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(300), "standard comparison")?;
    Ok(format!("{summary}; {elapsed:.1?}"))
}

// ---- 10 --------------------------------------------------------------------------

fn criterion_10() -> Check {
    let scenario = standard_scenario();
    for seed in 1..=3 {
        let fifo = run(&scenario, SchedulerKind::Fifo, seed, None);
        let cap = run(&scenario, SchedulerKind::Capacity, seed, None);
        ensure(fifo.trace == cap.trace, || format!("seed {seed}: capacity trace differs from FIFO"))?;
    }

    // Two saturating jobs released together on 8 map slots.
    const TASK_MS: u64 = 60_000;
    let cluster: ClusterSpec = mrsim::config::parse_str(
        "generate: { count: 4, racks: 2, map_slots: 2, reduce_slots: 1 }\nremote_read_factor: 1.0\n",
        Path::new("c.yaml"),
    )
    .map_err(|e| e.to_string())?;
    let workload: WorkloadSpec = mrsim::config::parse_str(
        "profiles: { teragen: { map_mu_ms: 60000, sigma: 0.0 } }\nchains:\n  - { name: a, jobs: [ { type: teragen, maps: 64, reduces: 0 } ] }\n  - { name: b, jobs: [ { type: teragen, maps: 64, reduces: 0 } ] }\n",
        Path::new("w.yaml"),
    )
    .map_err(|e| e.to_string())?;
    let scenario = Scenario { cluster, workload, failures: FailurePlan::default() };
    let out = run(&scenario, SchedulerKind::Fair, 1, None);
    // Backlogged window: until the first job has started its last task.
    let last_start = |job: u32| out.attempts.iter().filter(|r| r.job.0 == job).map(|r| r.start.0).max().unwrap_or(0);
    let window = last_start(0).min(last_start(1));
    let share = |job: u32| -> u64 {
        out.attempts
            .iter()
            .filter(|r| r.job.0 == job && r.start.0 < window)
            .map(|r| r.end.map_or(window, |e| e.0.min(window)) - r.start.0)
            .sum()
    };
    let (a, b) = (share(0), share(1));
    ensure(window > 0 && a.abs_diff(b) <= TASK_MS, || format!("slot-time shares {a} vs {b} over {window} ms"))?;
    // And at every instant the running counts differ by at most one slot.
    let mut times: Vec<u64> = out.attempts.iter().flat_map(|r| [r.start.0, r.end.unwrap().0]).filter(|&t| t < window).collect();
    times.sort_unstable();
    times.dedup();
    for t in times {
        let running = |job: u32| out.attempts.iter().filter(|r| r.job.0 == job && r.start.0 <= t && r.end.unwrap().0 > t).count();
        ensure(running(0).abs_diff(running(1)) <= 1, || format!("t={t}: running {} vs {}", running(0), running(1)))?;
    }
    Ok(format!("capacity(1 queue) == FIFO on 3 seeds; fair shares {a} vs {b} slot-ms over {window} ms"))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("job outcome matches brute-force product of attempt sums", criterion_1),
        ("job time matches recount from attempt logs", criterion_2),
        ("evaluation metric identities", criterion_3),
        ("10-fold partition structure", criterion_4),
        ("predictor sanity and GLM gradient", criterion_5),
        ("heartbeat adaptation", criterion_6),
        ("ATLAS pass-through equals FIFO", criterion_7),
        ("determinism of canonical reports", criterion_8),
        ("ATLAS vs FIFO on the standard scenario", criterion_9),
        ("baseline scheduler semantics", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let res = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        match res {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
