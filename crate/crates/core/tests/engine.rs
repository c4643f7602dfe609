mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;

use common::{engine_with, idle_engine, run, scenario, HORIZON};
use mrsim::engine::{EventKind, TraceEntry};
use mrsim::error::Error;
use mrsim::ids::{AttemptId, AttemptRef, NodeId, TaskId};
use mrsim::pipeline::{AtlasModels, SchedulerKind};
use mrsim::time::SimTime;
use mrsim::workload::{AttemptStatus, JobStatus, TaskKind, TaskStatus};

const ONE_NODE: &str = "generate: { count: 1, map_slots: 1, reduce_slots: 1 }";
const ONE_MAP: &str = "profiles: { teragen: { map_mu_ms: 45000, sigma: 0.0 } }\nchains: [ { jobs: [ { type: teragen, maps: 1, reduces: 0 } ] } ]";

#[test]
fn empty_workload_gives_empty_report() {
    let s = scenario(ONE_NODE, "chains: []", "");
    let out = run(&s, SchedulerKind::Fifo, 1, None);
    assert!(out.report.jobs.is_empty());
    assert_eq!(out.report.aggregates.jobs, 0);
}

#[test]
fn single_map_job_time_is_the_map_duration() {
    let s = scenario(ONE_NODE, ONE_MAP, "");
    let out = run(&s, SchedulerKind::Fifo, 1, None);
    let job = &out.report.jobs[0];
    assert_eq!(job.status, JobStatus::Finished);
    assert_eq!(job.eq1, Some(1));
    assert_eq!(job.eq2_ms, Some(45_000));
}

#[test]
fn same_seed_same_trace() {
    let s = common::standard_scenario();
    let a = run(&s, SchedulerKind::Fifo, 9, None);
    let b = run(&s, SchedulerKind::Fifo, 9, None);
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.report.to_canonical_json(), b.report.to_canonical_json());
}

fn heartbeat_times(trace: &[TraceEntry], node: NodeId) -> Vec<u64> {
    trace
        .iter()
        .filter_map(|e| match e {
            TraceEntry::Event { at, event: EventKind::Heartbeat { node: n }, .. } if *n == node => Some(at.0),
            _ => None,
        })
        .collect()
}

#[test]
fn live_node_heartbeats_every_interval() {
    // The idle scheduler never starts the job, so the run stays open.
    let s = scenario("generate: { count: 3, map_slots: 1, reduce_slots: 1 }", ONE_MAP, "");
    let mut e = idle_engine(&s, 1);
    e.advance(SimTime::from_mins(95)).unwrap();
    for n in 0..3 {
        let times = heartbeat_times(e.trace(), NodeId(n));
        assert!(times.len() >= 8);
        assert!(times.windows(2).all(|w| w[1] - w[0] == 600_000), "node {n}: {times:?}");
        assert_eq!(e.state().cluster.nodes[n as usize].last_heartbeat.0, *times.last().unwrap());
    }
}

#[test]
fn dead_node_detected_only_after_expiry() {
    // Two nodes: heartbeats at 5 min and 10 min. n0 dies one minute after its heartbeat.
    let s = scenario(
        "generate: { count: 2, map_slots: 1, reduce_slots: 1 }\nattempt_timeout_ms: 7200000",
        "profiles: { teragen: { map_mu_ms: 3600000, sigma: 0.0 } }\nchains: [ { jobs: [ { type: teragen, maps: 2, reduces: 0 } ] } ]",
        "entries: [ { at_ms: 360000, kind: node_kill, node: n0 } ]",
    );
    let out = run(&s, SchedulerKind::Fifo, 1, None);
    let lost_at = out
        .trace
        .iter()
        .find_map(|e| match e {
            TraceEntry::NodeLost { at, node } if *node == NodeId(0) => Some(*at),
            _ => None,
        })
        .expect("n0 declared lost");
    assert!(lost_at - SimTime::from_mins(6) >= SimTime::from_mins(9), "lost at {lost_at}");
    let failed_on_n0 = out
        .attempts
        .iter()
        .find(|r| r.node == NodeId(0) && r.status == AttemptStatus::Failed)
        .expect("attempt on n0 failed");
    assert_eq!(failed_on_n0.end, Some(lost_at));
}

#[test]
fn shortened_interval_applies_to_next_heartbeat() {
    let s = scenario(
        "generate: { count: 6, racks: 2, map_slots: 2, reduce_slots: 1 }\nattempt_timeout_ms: 3600000",
        "profiles: { teragen: { map_mu_ms: 300000, sigma: 0.0 } }\nchains: [ { jobs: [ { type: teragen, maps: 120, reduces: 0 } ] } ]",
        "entries:\n  - { at_ms: 60000, kind: node_kill, node: n0 }\n  - { at_ms: 60000, kind: node_kill, node: n1 }\n  - { at_ms: 60000, kind: node_kill, node: n3 }\n",
    );
    let models = AtlasModels::constant(false);
    let out = run(&s, SchedulerKind::Atlas, 1, Some(&models));
    // Walk the trace in order: a live node's next heartbeat is one current interval out.
    let mut interval = 600_000;
    let mut seen_short = false;
    let mut beats: Vec<(u64, u64)> = Vec::new();
    for e in &out.trace {
        match e {
            TraceEntry::HeartbeatInterval { interval: i, .. } => {
                interval = i.0;
                seen_short |= i.0 == 120_000;
            }
            TraceEntry::Event { at, event: EventKind::Heartbeat { node }, .. } if *node == NodeId(2) => {
                beats.push((at.0, interval));
            }
            _ => {}
        }
    }
    assert!(seen_short);
    for w in beats.windows(2) {
        assert_eq!(w[1].0 - w[0].0, w[0].1, "heartbeats {w:?}");
    }
    let times: Vec<u64> = beats.iter().map(|b| b.0).collect();
    assert!(times.windows(2).any(|w| w[1] - w[0] == 120_000));
}

#[test]
fn attempts_exhausted_fails_task_and_job() {
    let s = scenario(ONE_NODE, ONE_MAP, "attempt_fail_prob: 1.0");
    let mut e = engine_with(&s, SchedulerKind::Fifo, 1, None);
    e.run_until(HORIZON).unwrap();
    let task = &e.state().tasks[0];
    assert_eq!(task.attempts.len(), 4);
    assert!(task.attempts.iter().all(|a| a.status == AttemptStatus::Failed));
    assert_eq!(task.status, TaskStatus::Failed);
    assert_eq!(e.state().jobs[0].status, JobStatus::Failed);
    assert!(matches!(e.start_attempt(TaskId(0), NodeId(0), false), Err(Error::AttemptsExhausted { .. })));
}

#[test]
fn manual_start_ids_and_dead_node_rejection() {
    let s = scenario(
        "generate: { count: 2, map_slots: 1, reduce_slots: 1 }",
        "chains: [ { jobs: [ { type: teragen, maps: 2, reduces: 0 } ] } ]",
        "entries: [ { at_ms: 1000, kind: node_kill, node: n1 } ]",
    );
    let mut e = idle_engine(&s, 1);
    e.advance(SimTime(2000)).unwrap();
    assert_eq!(e.start_attempt(TaskId(0), NodeId(0), false).unwrap(), AttemptId(0));
    assert!(matches!(e.start_attempt(TaskId(1), NodeId(1), false), Err(Error::NodeDead { .. })));
    assert!(matches!(e.start_attempt(TaskId(1), NodeId(0), false), Err(Error::NoSlot { .. })));
    assert!(matches!(e.start_attempt(TaskId(1), NodeId(7), false), Err(Error::UnknownNode(_))));
}

#[test]
fn timeout_is_strictly_greater_than_limit() {
    let s = scenario(
        ONE_NODE,
        "profiles: { teragen: { map_mu_ms: 700000, sigma: 0.0 } }\nchains: [ { jobs: [ { type: teragen, maps: 1, reduces: 0 } ] } ]",
        "",
    );
    let mut e = idle_engine(&s, 1);
    e.advance(SimTime::ZERO).unwrap();
    let aid = e.start_attempt(TaskId(0), NodeId(0), false).unwrap();
    let aref = AttemptRef { task: TaskId(0), attempt: aid };
    e.advance(SimTime(600_000)).unwrap();
    e.enforce_timeout(aref);
    assert_eq!(e.state().attempt(aref).status, AttemptStatus::Running);
    e.advance(SimTime(600_001)).unwrap();
    let a = e.state().attempt(aref);
    assert_eq!(a.status, AttemptStatus::FailedTimeout);
    assert_eq!(a.end, Some(SimTime(600_001)));
}

#[test]
fn timed_out_task_is_penalized_under_atlas() {
    let s = scenario(
        "generate: { count: 2, map_slots: 1, reduce_slots: 1 }",
        "profiles: { teragen: { map_mu_ms: 700000, sigma: 0.0 } }\nchains: [ { jobs: [ { type: teragen, maps: 1, reduces: 0 } ] } ]",
        "",
    );
    let models = AtlasModels::constant(false);
    let out = run(&s, SchedulerKind::Atlas, 1, Some(&models));
    let penalties: Vec<(u64, u32)> = out
        .trace
        .iter()
        .filter_map(|e| match e {
            TraceEntry::Penalty { at, task, penalty, .. } if *task == TaskId(0) => Some((at.0, *penalty)),
            _ => None,
        })
        .collect();
    assert_eq!(penalties.first(), Some(&(600_001, 1)));
    assert_eq!(penalties.len(), 4);
    assert_eq!(out.report.jobs[0].status, JobStatus::Failed);
    assert!(out.attempts.iter().all(|r| r.status == AttemptStatus::FailedTimeout));
}

// ---- invariants over random scenarios ------------------------------------------------

fn random_scenario(nodes: u32, slots: u32, jobs: u32, fail: f64, mtbf_h: Option<u32>) -> mrsim::pipeline::Scenario {
    let cluster = format!(
        "generate: {{ count: {nodes}, racks: 2, map_slots: {slots}, reduce_slots: 1 }}\nheartbeat: {{ base_interval_ms: 120000, min_interval_ms: 30000 }}"
    );
    let workload = format!(
        "arrival: {{ process: poisson, mean_interarrival_ms: 30000 }}\nchains:\n  - {{ repeat: {jobs}, jobs: [ {{ type: wordcount, maps: [1, 6], reduces: [0, 2] }} ] }}\n  - {{ kind: sequential, jobs: [ {{ type: teragen, maps: [1, 3], reduces: 0 }}, {{ type: terasort, maps: [1, 3], reduces: 1 }} ] }}\n"
    );
    let mut failures = format!("attempt_fail_prob: {fail}\nslow_node_prob: 0.2\nslow_fail_multiplier: 3.0\n");
    if let Some(h) = mtbf_h {
        failures.push_str(&format!("node_mtbf_ms: {}\nnode_mttr_ms: 600000\n", h as u64 * 3_600_000));
    }
    scenario(&cluster, &workload, &failures)
}

fn scheduler_strategy() -> impl Strategy<Value = (SchedulerKind, Option<bool>)> {
    prop_oneof![
        Just((SchedulerKind::Fifo, None)),
        Just((SchedulerKind::Fair, None)),
        Just((SchedulerKind::Capacity, None)),
        Just((SchedulerKind::Atlas, Some(false))),
        Just((SchedulerKind::Atlas, Some(true))),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, .. ProptestConfig::default() })]

    #[test]
    fn engine_invariants(
        nodes in 1u32..6,
        slots in 1u32..3,
        jobs in 1u32..5,
        fail in 0.0f64..0.5,
        mtbf in prop::option::of(1u32..4),
        (kind, constant) in scheduler_strategy(),
        seed in 0u64..1000,
    ) {
        let s = random_scenario(nodes, slots, jobs, fail, mtbf);
        let models = constant.map(AtlasModels::constant);
        let mut e = engine_with(&s, kind, seed, models.as_ref());
        let mut t = SimTime::ZERO;
        while t < HORIZON && !e.state().workload_done() {
            t += SimTime::from_secs(20);
            e.advance(t).unwrap();
            let st = e.state();
            for n in &st.cluster.nodes {
                // Slot conservation, with the counters matching the running set.
                prop_assert!(n.running_maps <= n.map_slots && n.running_reduces <= n.reduce_slots);
                let maps = n.running.iter().filter(|a| st.task(a.task).kind == TaskKind::Map).count() as u32;
                prop_assert_eq!(maps, n.running_maps);
                prop_assert_eq!(n.running.len() as u32, n.running_maps + n.running_reduces);
                // Liveness bookkeeping: a lost node runs nothing the JobTracker tracks.
                if n.lost {
                    prop_assert!(n.running.iter().all(|a| !st.attempt(*a).is_running()));
                }
            }
            let hb = st.cluster.heartbeat;
            prop_assert!(hb.current_interval >= hb.min_interval && hb.current_interval <= hb.base_interval);
            for task in &st.tasks {
                prop_assert!(task.attempts.len() as u32 <= st.max_attempts(task.kind));
                if kind == SchedulerKind::Atlas {
                    prop_assert!(task.running_attempts().count() <= 2);
                }
            }
        }

        // Clock monotonicity over processed events.
        let times: Vec<u64> = e.trace().iter().filter_map(|x| match x {
            TraceEntry::Event { at, .. } => Some(at.0),
            _ => None,
        }).collect();
        prop_assert!(times.windows(2).all(|w| w[0] <= w[1]));

        let st = e.state();
        let records = e.attempt_records();
        for r in records {
            let task = st.task(r.attempt.task);
            // Locality flag correctness.
            prop_assert_eq!(r.local, task.preferred_nodes.contains(&r.node));
            let job = st.job(r.job);
            // Map -> reduce barrier.
            if r.kind == TaskKind::Reduce {
                for &m in &job.maps {
                    let done = st.task(m).attempts.iter().filter(|a| a.status == AttemptStatus::Finished).filter_map(|a| a.end).min();
                    prop_assert!(done.is_some_and(|d| d <= r.start), "reduce before maps done");
                }
            }
            // Chain barrier.
            for up in &job.upstream {
                let up = st.job(*up);
                prop_assert_eq!(up.status, JobStatus::Finished);
                prop_assert!(up.finished_at.unwrap() <= r.start);
            }
        }
        // Failed upstream cancels downstream without running it.
        for job in &st.jobs {
            if job.upstream.iter().any(|u| st.job(*u).status == JobStatus::Failed) {
                prop_assert_eq!(job.status, JobStatus::Failed);
                prop_assert!(job.tasks().all(|t| st.task(t).attempts.is_empty()));
            }
        }
        if kind == SchedulerKind::Atlas {
            prop_assert_eq!(e.stats().node_dead_errors, 0);
        }
        // Per-job counts cover every task once the run completed.
        if st.workload_done() {
            let report = mrsim::report::SimReport::from_engine(&e);
            for j in &report.jobs {
                prop_assert_eq!(j.finished_tasks + j.failed_tasks + j.killed_tasks, j.maps + j.reduces);
            }
        }
    }

    #[test]
    fn runs_are_deterministic(seed in 0u64..500, (kind, constant) in scheduler_strategy()) {
        let s = random_scenario(4, 2, 3, 0.2, Some(2));
        let models = constant.map(AtlasModels::constant);
        let a = run(&s, kind, seed, models.as_ref());
        let b = run(&s, kind, seed, models.as_ref());
        prop_assert_eq!(&a.trace, &b.trace);
        prop_assert_eq!(a.report.to_canonical_json(), b.report.to_canonical_json());
    }
}

#[test]
fn baselines_hit_dead_nodes_where_atlas_does_not() {
    let s = common::standard_scenario();
    let mut fifo_errors = 0;
    let models = AtlasModels::constant(false);
    for seed in 1..=5 {
        fifo_errors += run(&s, SchedulerKind::Fifo, seed, None).report.engine.node_dead_errors;
        assert_eq!(run(&s, SchedulerKind::Atlas, seed, Some(&models)).report.engine.node_dead_errors, 0);
    }
    assert!(fifo_errors > 0);
}

#[test]
fn lost_attempts_only_fail_on_detection() {
    let s = common::standard_scenario();
    let out = run(&s, SchedulerKind::Fifo, 3, None);
    let ends: BTreeMap<AttemptRef, u64> = out
        .trace
        .iter()
        .filter_map(|e| match e {
            TraceEntry::AttemptEnd { at, attempt, .. } => Some((*attempt, at.0)),
            _ => None,
        })
        .collect();
    for e in &out.trace {
        if let TraceEntry::NodeDeadError { at, attempt, .. } = e {
            let end = ends.get(attempt).copied();
            assert!(end.is_some_and(|t| t > at.0), "lost attempt {attempt} ended at {end:?}");
        }
    }
}
