//! Discrete-event engine: event loop, attempt lifecycle, heartbeats and failure injection.

mod event;
mod state;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

pub use event::{Event, EventKind, EventQueue};
pub use state::{AttemptRecord, EngineStats, Limits, SimState, TraceEntry};

use crate::cluster::{ClusterSpec, ClusterState, NodeState};
use crate::error::{Error, Result};
use crate::failure::{compile_plan, AttemptOutcome, FailureEntry, FailureKind, FailurePlan};
use crate::ids::{AttemptId, AttemptRef, BlockId, JobId, NodeId, TaskId};
use crate::predictor::extract_features;
use crate::rng::{stream, stream_rng};
use crate::scheduler::{baseline_speculation, Scheduler, SchedulerDecision, SpeculationConfig};
use crate::time::SimTime;
use crate::workload::{
    assign_block_replicas, generate_workload, sample_duration, AttemptStatus, ChainSpec, Job, JobStatus, Task,
    TaskAttempt, TaskKind, TaskStatus, WorkloadSpec,
};

/// Safety valve against a scheduler that keeps returning non-Wait decisions.
const MAX_DECISIONS_PER_TICK: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EngineConfig {
    pub seed: u64,
    /// Horizon used to expand stochastic failure processes.
    pub horizon: SimTime,
    pub speculation: SpeculationConfig,
}

impl EngineConfig {
    pub fn new(seed: u64, horizon: SimTime) -> Self {
        EngineConfig {
            seed,
            horizon,
            speculation: SpeculationConfig::default(),
        }
    }
}

pub struct Engine {
    state: SimState,
    queue: EventQueue,
    scheduler: Box<dyn Scheduler>,
    plan: FailurePlan,
    faults: Vec<FailureEntry>,
    speculation: SpeculationConfig,
    trace: Vec<TraceEntry>,
    records: Vec<AttemptRecord>,
    record_index: BTreeMap<AttemptRef, usize>,
    stats: EngineStats,
    /// Nodes whose most recent heartbeat slot went unanswered.
    missing: BTreeSet<NodeId>,
    ticks: BTreeSet<SimTime>,
}

impl Engine {
    /// Generates the workload from `workload` and builds the engine.
    pub fn new(
        cluster: &ClusterSpec,
        workload: &WorkloadSpec,
        plan: &FailurePlan,
        scheduler: Box<dyn Scheduler>,
        cfg: EngineConfig,
    ) -> Result<Engine> {
        let chains = generate_workload(workload, &mut stream_rng(cfg.seed, &[stream::WORKLOAD]))?;
        Self::from_chains(cluster, chains, plan, scheduler, cfg)
    }

    pub fn from_chains(
        cluster_spec: &ClusterSpec,
        chains: Vec<ChainSpec>,
        plan: &FailurePlan,
        scheduler: Box<dyn Scheduler>,
        cfg: EngineConfig,
    ) -> Result<Engine> {
        plan.validate()?;
        let mut cluster = ClusterState::from_spec(cluster_spec)?;
        let slow = plan.initial_slow_nodes(cluster.len(), &mut stream_rng(cfg.seed, &[stream::SLOW_NODES]));
        for (node, slow) in cluster.nodes.iter_mut().zip(slow) {
            if slow {
                node.state = NodeState::Slow;
                node.slowdown = plan.slowdown_factor;
            }
        }

        let mut jobs: Vec<Job> = Vec::new();
        let mut tasks: Vec<Task> = Vec::new();
        let mut replica_rng = stream_rng(cfg.seed, &[stream::REPLICAS]);
        let mut next_block = 0u64;
        for chain in &chains {
            let first = jobs.len();
            for spec in &chain.jobs {
                if spec.id.index() != jobs.len() {
                    return Err(Error::Invalid(format!("job ids must be dense, found {} at {}", spec.id, jobs.len())));
                }
                if spec.num_maps == 0 {
                    return Err(Error::Invalid(format!("job `{}` has no maps", spec.name)));
                }
                let replicas = assign_block_replicas(spec, &cluster, &mut replica_rng)?;
                let mut maps = Vec::new();
                for (i, preferred) in replicas.into_iter().enumerate() {
                    let block = BlockId(next_block);
                    next_block += 1;
                    for n in &preferred {
                        cluster.nodes[n.index()].hosted_blocks.insert(block);
                    }
                    let id = TaskId(tasks.len() as u32);
                    tasks.push(new_task(id, spec.id, TaskKind::Map, i as u32, preferred, Some(block)));
                    maps.push(id);
                }
                let mut reduces = Vec::new();
                for i in 0..spec.num_reduces {
                    let id = TaskId(tasks.len() as u32);
                    tasks.push(new_task(id, spec.id, TaskKind::Reduce, i, Vec::new(), None));
                    reduces.push(id);
                }
                jobs.push(Job {
                    spec: spec.clone(),
                    chain: chain.id,
                    status: JobStatus::Waiting,
                    submitted: false,
                    released_at: None,
                    finished_at: None,
                    maps,
                    reduces,
                    upstream: BTreeSet::new(),
                    downstream: BTreeSet::new(),
                    finished_maps: 0,
                    finished_tasks: 0,
                });
            }
            for &(a, b) in &chain.edges {
                let (ja, jb) = (JobId((first + a) as u32), JobId((first + b) as u32));
                jobs[jb.index()].upstream.insert(ja);
                jobs[ja.index()].downstream.insert(jb);
            }
        }

        let faults = compile_plan(plan, &cluster, &mut stream_rng(cfg.seed, &[stream::FAILURES]), cfg.horizon)?;
        let limits = Limits {
            attempt_timeout: SimTime(cluster_spec.attempt_timeout_ms),
            max_map_attempts: cluster_spec.max_map_attempts,
            max_reduce_attempts: cluster_spec.max_reduce_attempts,
            remote_read_factor: cluster_spec.remote_read_factor,
        };
        let n_jobs = jobs.len();
        let state = SimState {
            clock: SimTime::ZERO,
            seed: cfg.seed,
            cluster,
            jobs,
            tasks,
            pending: BTreeMap::new(),
            job_running: vec![0; n_jobs],
            finished_tasks: 0,
            failed_tasks: 0,
            limits,
        };
        scheduler.validate(&state)?;

        let mut engine = Engine {
            stats: EngineStats {
                min_heartbeat_interval_ms: state.cluster.heartbeat.current_interval.0,
                ..Default::default()
            },
            state,
            queue: EventQueue::new(),
            scheduler,
            plan: plan.clone(),
            faults,
            speculation: cfg.speculation,
            trace: Vec::new(),
            records: Vec::new(),
            record_index: BTreeMap::new(),
            missing: BTreeSet::new(),
            ticks: BTreeSet::new(),
        };
        engine.seed_events()?;
        Ok(engine)
    }

    fn seed_events(&mut self) -> Result<()> {
        for j in 0..self.state.jobs.len() {
            let at = self.state.jobs[j].spec.submit_time;
            self.schedule(at, EventKind::JobSubmitted { job: JobId(j as u32) })?;
        }
        let interval = self.state.cluster.heartbeat.current_interval;
        let n = self.state.cluster.len() as u64;
        // Heartbeats are staggered evenly over the first interval.
        for i in 0..n {
            let at = SimTime(interval.0 * (i + 1) / n);
            self.schedule(at, EventKind::Heartbeat { node: NodeId(i as u32) })?;
        }
        self.schedule(interval, EventKind::JobTrackerCycle)?;
        for (i, f) in self.faults.clone().iter().enumerate() {
            self.schedule(f.at(), EventKind::Fault { entry: i, fault: f.kind })?;
        }
        Ok(())
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    pub fn attempt_records(&self) -> &[AttemptRecord] {
        &self.records
    }

    pub fn stats(&self) -> &EngineStats {
        &self.stats
    }

    pub fn scheduler(&self) -> &dyn Scheduler {
        self.scheduler.as_ref()
    }

    pub fn scheduler_mut(&mut self) -> &mut dyn Scheduler {
        self.scheduler.as_mut()
    }

    /// The failure plan after stochastic expansion.
    pub fn compiled_faults(&self) -> &[FailureEntry] {
        &self.faults
    }

    pub fn clock(&self) -> SimTime {
        self.state.clock
    }

    pub fn schedule_event(&mut self, at: SimTime, kind: EventKind) -> Result<u64> {
        self.schedule(at, kind)
    }

    fn schedule(&mut self, at: SimTime, kind: EventKind) -> Result<u64> {
        self.queue.schedule(self.state.clock, at, kind)
    }

    fn log(&mut self, entry: TraceEntry) {
        self.trace.push(entry);
    }

    /// Processes events with `at <= end`, stopping early once every job is terminal
    /// or the queue drains.
    pub fn run_until(&mut self, end: SimTime) -> Result<crate::report::SimReport> {
        self.advance(end)?;
        Ok(crate::report::SimReport::from_engine(self))
    }

    /// Event loop without building a report. Leaves the clock at `end` unless the
    /// workload finished first.
    pub fn advance(&mut self, end: SimTime) -> Result<()> {
        while !self.state.workload_done() {
            match self.queue.peek_time() {
                Some(t) if t <= end => {}
                _ => break,
            }
            let ev = self.queue.pop().expect("peeked");
            debug_assert!(ev.at >= self.state.clock);
            self.state.clock = ev.at;
            self.stats.events_processed += 1;
            self.log(TraceEntry::Event {
                at: ev.at,
                seq: ev.seq,
                event: ev.kind.clone(),
            });
            self.handle(ev.kind)?;
        }
        // An open run has simulated up to `end` even if nothing happened there.
        if !self.state.workload_done() && self.state.clock < end {
            self.state.clock = end;
        }
        Ok(())
    }

    fn handle(&mut self, kind: EventKind) -> Result<()> {
        match kind {
            EventKind::JobSubmitted { job } => {
                self.state.jobs[job.index()].submitted = true;
                self.try_release(job);
            }
            EventKind::AttemptFinish { attempt } => {
                if self.is_live(attempt) {
                    self.complete_attempt(attempt, AttemptStatus::Finished);
                }
            }
            EventKind::AttemptFail { attempt } => {
                if self.is_live(attempt) {
                    self.complete_attempt(attempt, AttemptStatus::Failed);
                }
            }
            EventKind::Heartbeat { node } => self.process_heartbeat(node)?,
            EventKind::HeartbeatExpiry { node } => self.check_expiry(node),
            EventKind::Fault { entry, .. } => self.inject(entry)?,
            EventKind::PartitionEnd { rack } => {
                for n in self.state.cluster.nodes.iter_mut().filter(|n| n.rack == rack) {
                    n.partitioned = false;
                }
            }
            EventKind::TimeoutCheck { attempt } => self.enforce_timeout(attempt),
            EventKind::SchedulerTick => {
                self.ticks.remove(&self.state.clock);
                self.scheduler_tick()?;
            }
            EventKind::JobTrackerCycle => self.jobtracker_cycle()?,
        }
        Ok(())
    }

    /// A running attempt whose node is still up (events of orphaned attempts are void).
    fn is_live(&self, a: AttemptRef) -> bool {
        let att = self.state.attempt(a);
        att.is_running() && att.orphaned_at.is_none()
    }

    fn request_tick(&mut self) {
        let now = self.state.clock;
        if self.ticks.insert(now) {
            self.schedule(now, EventKind::SchedulerTick).expect("tick at current clock");
        }
    }

    fn request_tick_at(&mut self, at: SimTime) {
        if at >= self.state.clock && self.ticks.insert(at) {
            self.schedule(at, EventKind::SchedulerTick).expect("tick not in the past");
        }
    }

    // ---- jobs -------------------------------------------------------------------

    fn try_release(&mut self, j: JobId) {
        let job = &self.state.jobs[j.index()];
        if job.status != JobStatus::Waiting || !job.submitted {
            return;
        }
        if !job.upstream.iter().all(|u| self.state.jobs[u.index()].status == JobStatus::Finished) {
            return;
        }
        let clock = self.state.clock;
        let job = &mut self.state.jobs[j.index()];
        job.status = JobStatus::Running;
        job.released_at = Some(clock);
        let maps = job.maps.clone();
        self.make_pending(j, &maps);
        self.log(TraceEntry::JobReleased { at: clock, job: j });
        self.request_tick();
    }

    fn make_pending(&mut self, j: JobId, tasks: &[TaskId]) {
        let clock = self.state.clock;
        for &t in tasks {
            let task = &mut self.state.tasks[t.index()];
            task.status = TaskStatus::Pending;
            task.pending_since = Some(clock);
        }
        if !tasks.is_empty() {
            self.state.pending.entry(j).or_default().extend(tasks.iter().copied());
        }
    }

    fn remove_pending(&mut self, t: TaskId) {
        let j = self.state.tasks[t.index()].job;
        if let Some(set) = self.state.pending.get_mut(&j) {
            set.remove(&t);
            if set.is_empty() {
                self.state.pending.remove(&j);
            }
        }
    }

    fn job_finished(&mut self, j: JobId) {
        let clock = self.state.clock;
        let job = &mut self.state.jobs[j.index()];
        job.status = JobStatus::Finished;
        job.finished_at = Some(clock);
        let downstream: Vec<JobId> = job.downstream.iter().copied().collect();
        self.state.pending.remove(&j);
        self.log(TraceEntry::JobFinished { at: clock, job: j });
        for d in downstream {
            self.try_release(d);
        }
    }

    /// Marks the job FAILED, kills its unfinished tasks and cancels downstream jobs.
    fn fail_job(&mut self, j: JobId) {
        if self.state.jobs[j.index()].status.is_terminal() {
            return;
        }
        let clock = self.state.clock;
        let job = &mut self.state.jobs[j.index()];
        job.status = JobStatus::Failed;
        job.finished_at = Some(clock);
        let tasks: Vec<TaskId> = job.tasks().collect();
        let downstream: Vec<JobId> = job.downstream.iter().copied().collect();
        self.log(TraceEntry::JobFailed { at: clock, job: j });
        for t in tasks {
            if self.state.tasks[t.index()].status.is_terminal() {
                continue;
            }
            self.kill_running(t, None);
            self.state.tasks[t.index()].status = TaskStatus::Killed;
            self.log(TraceEntry::TaskTerminal {
                at: clock,
                task: t,
                status: TaskStatus::Killed,
            });
            self.scheduler.on_task_terminal(t);
        }
        self.state.pending.remove(&j);
        for d in downstream {
            self.fail_job(d);
        }
    }

    // ---- attempts ---------------------------------------------------------------

    /// Launches an attempt of `task` on `node`. The node must be up with a free slot of
    /// the task's kind; exhausting the attempt budget fails the task and its job.
    pub fn start_attempt(&mut self, task: TaskId, node: NodeId, speculative: bool) -> Result<AttemptId> {
        self.check_start(task, node)?;
        let round = self.next_round(task);
        Ok(self.launch(task, node, speculative, round, false))
    }

    fn check_start(&mut self, task: TaskId, node: NodeId) -> Result<()> {
        let n = self.state.cluster.node(node)?;
        let t = self
            .state
            .tasks
            .get(task.index())
            .ok_or_else(|| Error::Invalid(format!("unknown task {task}")))?;
        if t.attempts.len() as u32 >= self.state.max_attempts(t.kind) {
            if !t.status.is_terminal() && t.running_attempts().next().is_none() {
                self.task_failed(task);
            }
            return Err(Error::AttemptsExhausted { task });
        }
        if !(t.status == TaskStatus::Running || self.state.is_pending(task)) {
            return Err(Error::Invalid(format!("task {task} is not runnable ({:?})", t.status)));
        }
        if n.free_slots(t.kind) == 0 {
            return Err(Error::NoSlot { task, node });
        }
        if !n.is_physically_up() {
            return Err(Error::NodeDead { node });
        }
        Ok(())
    }

    fn next_round(&mut self, task: TaskId) -> u32 {
        let t = &mut self.state.tasks[task.index()];
        t.rounds += 1;
        t.rounds
    }

    fn launch(&mut self, task_id: TaskId, node_id: NodeId, speculative: bool, round: u32, lost: bool) -> AttemptId {
        let clock = self.state.clock;
        let features = extract_features(&self.state, task_id, node_id, speculative);
        let timeout = self.state.limits.attempt_timeout;
        let remote = self.state.limits.remote_read_factor;
        let seed = self.state.seed;

        let (job_id, kind, aid, local) = {
            let t = &self.state.tasks[task_id.index()];
            (t.job, t.kind, AttemptId(t.attempts.len() as u32), t.is_preferred(node_id))
        };
        let aref = AttemptRef { task: task_id, attempt: aid };
        let (demand, profile) = {
            let spec = &self.state.jobs[job_id.index()].spec;
            (spec.resources, spec.duration)
        };
        let node = &mut self.state.cluster.nodes[node_id.index()];
        node.running.insert(aref);
        match kind {
            TaskKind::Map => node.running_maps += 1,
            TaskKind::Reduce => node.running_reduces += 1,
        }
        node.used_cpu += demand.cpu;
        node.used_mem += demand.mem_mb;
        node.used_hdfs_rw += demand.hdfs_rw;
        self.state.job_running[job_id.index()] += 1;
        self.remove_pending(task_id);

        let (planned_end, orphaned_at, terminal) = if lost {
            self.stats.node_dead_errors += 1;
            self.log(TraceEntry::NodeDeadError {
                at: clock,
                attempt: aref,
                node: node_id,
            });
            (None, Some(clock), None)
        } else {
            let node = &self.state.cluster.nodes[node_id.index()];
            let mut rng = stream_rng(seed, &[stream::ATTEMPT, task_id.0 as u64, aid.0 as u64]);
            let outcome = self.plan.attempt_outcome(node, &mut rng);
            let duration = sample_duration(&profile, kind, local, node.slowdown, remote, &mut rng);
            let planned = clock + duration;
            let (at, ev) = match outcome {
                AttemptOutcome::Finish => (planned, EventKind::AttemptFinish { attempt: aref }),
                AttemptOutcome::Fail => {
                    // Failures strike part-way through the attempt.
                    let u: f64 = rng.random();
                    let ms = ((duration.0 as f64 * u).round() as u64).clamp(1, duration.0.max(1));
                    (clock + SimTime(ms), EventKind::AttemptFail { attempt: aref })
                }
            };
            self.schedule(at, ev).expect("attempt end in the future");
            (Some(planned), None, Some(at))
        };
        if terminal.is_none_or(|t| t - clock > timeout) {
            self.schedule(clock + timeout + SimTime(1), EventKind::TimeoutCheck { attempt: aref })
                .expect("timeout in the future");
        }

        let t = &mut self.state.tasks[task_id.index()];
        t.status = TaskStatus::Running;
        t.pending_since = None;
        t.attempts.push(TaskAttempt {
            id: aid,
            node: node_id,
            start: clock,
            end: None,
            status: AttemptStatus::Running,
            speculative,
            local,
            round,
            planned_end,
            orphaned_at,
        });
        if speculative {
            self.stats.speculative_launches += 1;
        }
        self.record_index.insert(aref, self.records.len());
        self.records.push(AttemptRecord {
            attempt: aref,
            job: job_id,
            kind,
            node: node_id,
            start: clock,
            end: None,
            status: AttemptStatus::Running,
            speculative,
            local,
            demand,
            features,
        });
        self.log(TraceEntry::AttemptStart {
            at: clock,
            attempt: aref,
            node: node_id,
            speculative,
            local,
        });
        aid
    }

    /// Terminates a running attempt and frees its slot. No task-level bookkeeping.
    fn end_attempt(&mut self, aref: AttemptRef, status: AttemptStatus) {
        let clock = self.state.clock;
        let (job_id, kind) = {
            let t = &self.state.tasks[aref.task.index()];
            (t.job, t.kind)
        };
        let demand = self.state.jobs[job_id.index()].spec.resources;
        let a = &mut self.state.tasks[aref.task.index()].attempts[aref.attempt.index()];
        debug_assert!(a.is_running());
        a.status = status;
        a.end = Some(clock);
        let node_id = a.node;
        let node = &mut self.state.cluster.nodes[node_id.index()];
        node.running.remove(&aref);
        match kind {
            TaskKind::Map => node.running_maps -= 1,
            TaskKind::Reduce => node.running_reduces -= 1,
        }
        node.used_cpu = (node.used_cpu - demand.cpu).max(0.0);
        node.used_mem = (node.used_mem - demand.mem_mb).max(0.0);
        node.used_hdfs_rw = (node.used_hdfs_rw - demand.hdfs_rw).max(0.0);
        match status {
            AttemptStatus::Finished => node.finished_attempts += 1,
            s if s.is_failure() => node.failed_attempts += 1,
            _ => {}
        }
        self.state.job_running[job_id.index()] -= 1;
        if let Some(&i) = self.record_index.get(&aref) {
            self.records[i].end = Some(clock);
            self.records[i].status = status;
        }
        self.log(TraceEntry::AttemptEnd {
            at: clock,
            attempt: aref,
            node: node_id,
            status,
        });
        self.scheduler.on_attempt_terminal(aref, status);
    }

    fn kill_running(&mut self, t: TaskId, except: Option<AttemptRef>) {
        let running: Vec<AttemptRef> = self.state.tasks[t.index()]
            .running_attempts()
            .map(|a| AttemptRef { task: t, attempt: a.id })
            .filter(|a| Some(*a) != except)
            .collect();
        for a in running {
            self.end_attempt(a, AttemptStatus::Killed);
        }
    }

    /// Ends an attempt with a real outcome and resolves the task.
    fn complete_attempt(&mut self, aref: AttemptRef, status: AttemptStatus) {
        self.end_attempt(aref, status);
        if status == AttemptStatus::Finished {
            self.task_finished(aref.task, aref);
        } else {
            self.attempt_failed(aref, status);
        }
        self.request_tick();
    }

    fn task_finished(&mut self, t: TaskId, winner: AttemptRef) {
        if self.state.tasks[t.index()].status.is_terminal() {
            return;
        }
        self.kill_running(t, Some(winner));
        let clock = self.state.clock;
        let task = &mut self.state.tasks[t.index()];
        task.status = TaskStatus::Finished;
        let (j, kind) = (task.job, task.kind);
        self.state.finished_tasks += 1;
        self.log(TraceEntry::TaskTerminal {
            at: clock,
            task: t,
            status: TaskStatus::Finished,
        });
        self.scheduler.on_task_terminal(t);
        let job = &mut self.state.jobs[j.index()];
        job.finished_tasks += 1;
        if kind == TaskKind::Map {
            job.finished_maps += 1;
            if job.maps_done() {
                let reduces = job.reduces.clone();
                self.make_pending(j, &reduces);
            }
        }
        let job = &self.state.jobs[j.index()];
        if job.finished_tasks == job.spec.total_tasks() {
            self.job_finished(j);
        }
    }

    fn attempt_failed(&mut self, aref: AttemptRef, status: AttemptStatus) {
        let t = aref.task;
        let mut delta = 0;
        if status == AttemptStatus::FailedTimeout {
            delta += self.scheduler.on_attempt_timeout(t);
        }
        let task = &self.state.tasks[t.index()];
        if task.status.is_terminal() || task.running_attempts().next().is_some() {
            self.add_penalty(t, delta);
            return;
        }
        let round = task.attempts[aref.attempt.index()].round;
        let copies: Vec<&TaskAttempt> = task.attempts.iter().filter(|a| a.round == round).collect();
        if copies.len() >= 2 && copies.iter().all(|a| a.status.is_failure()) {
            delta += self.scheduler.on_round_failed(t);
        }
        self.add_penalty(t, delta);
        let task = &self.state.tasks[t.index()];
        if task.attempts.len() as u32 >= self.state.max_attempts(task.kind) {
            self.task_failed(t);
        } else {
            let j = task.job;
            self.state.tasks[t.index()].reschedule_events += 1;
            self.make_pending(j, &[t]);
            let penalty = self.state.tasks[t.index()].penalty;
            self.log(TraceEntry::TaskRequeued {
                at: self.state.clock,
                task: t,
                penalty,
            });
        }
    }

    fn add_penalty(&mut self, t: TaskId, delta: u32) {
        if delta == 0 {
            return;
        }
        let task = &mut self.state.tasks[t.index()];
        task.penalty += delta;
        let penalty = task.penalty;
        self.log(TraceEntry::Penalty {
            at: self.state.clock,
            task: t,
            delta,
            penalty,
        });
    }

    fn task_failed(&mut self, t: TaskId) {
        let clock = self.state.clock;
        self.kill_running(t, None);
        self.remove_pending(t);
        self.state.tasks[t.index()].status = TaskStatus::Failed;
        self.state.failed_tasks += 1;
        self.log(TraceEntry::TaskTerminal {
            at: clock,
            task: t,
            status: TaskStatus::Failed,
        });
        self.scheduler.on_task_terminal(t);
        let j = self.state.tasks[t.index()].job;
        self.fail_job(j);
    }

    /// Fails the attempt as FAILED-TIMEOUT if it has run strictly longer than the timeout.
    pub fn enforce_timeout(&mut self, aref: AttemptRef) {
        let a = self.state.attempt(aref);
        if !a.is_running() {
            return;
        }
        if self.state.clock - a.start > self.state.limits.attempt_timeout {
            self.stats.timeouts += 1;
            self.complete_attempt(aref, AttemptStatus::FailedTimeout);
        }
    }

    // ---- heartbeats ---------------------------------------------------------------

    /// Heartbeat slot of `node`: a live, reachable node reports in; otherwise the miss
    /// is recorded and an expiry check is armed.
    pub fn process_heartbeat(&mut self, node_id: NodeId) -> Result<()> {
        let clock = self.state.clock;
        let expiry = self.state.cluster.expiry();
        let node = self.state.cluster.node_mut(node_id)?;
        if node.is_physically_up() && !node.partitioned {
            node.last_heartbeat = clock;
            self.missing.remove(&node_id);
            if node.lost {
                node.lost = false;
                self.log(TraceEntry::NodeRejoined { at: clock, node: node_id });
                self.request_tick();
            }
        } else {
            self.missing.insert(node_id);
            if !node.lost {
                let at = (node.last_heartbeat + expiry + SimTime(1)).max(clock);
                self.schedule(at, EventKind::HeartbeatExpiry { node: node_id })?;
            }
        }
        let interval = self.state.cluster.heartbeat.current_interval;
        self.schedule(clock + interval, EventKind::Heartbeat { node: node_id })?;
        Ok(())
    }

    fn check_expiry(&mut self, node_id: NodeId) {
        let clock = self.state.clock;
        let expiry = self.state.cluster.expiry();
        let node = &mut self.state.cluster.nodes[node_id.index()];
        if node.lost || clock - node.last_heartbeat <= expiry {
            return;
        }
        node.lost = true;
        self.stats.nodes_lost += 1;
        self.log(TraceEntry::NodeLost { at: clock, node: node_id });
        self.fail_node_attempts(node_id);
    }

    fn fail_node_attempts(&mut self, node_id: NodeId) {
        let running: Vec<AttemptRef> = self.state.cluster.nodes[node_id.index()].running.iter().copied().collect();
        for a in running {
            if self.state.attempt(a).is_running() {
                self.complete_attempt(a, AttemptStatus::Failed);
            }
        }
    }

    fn jobtracker_cycle(&mut self) -> Result<()> {
        let n = self.state.cluster.len().max(1);
        let fraction = self.missing.len() as f64 / n as f64;
        let hb = self.state.cluster.heartbeat;
        if let Some(next) = self.scheduler.on_heartbeat_cycle(fraction, &hb) {
            let next = next.max(hb.min_interval).min(hb.base_interval);
            if next != hb.current_interval {
                self.state.cluster.heartbeat.current_interval = next;
                self.stats.min_heartbeat_interval_ms = self.stats.min_heartbeat_interval_ms.min(next.0);
                self.log(TraceEntry::HeartbeatInterval {
                    at: self.state.clock,
                    interval: next,
                });
            }
        }
        let at = self.state.clock + self.state.cluster.heartbeat.current_interval;
        self.schedule(at, EventKind::JobTrackerCycle)?;
        Ok(())
    }

    // ---- failure injection --------------------------------------------------------

    fn noop(&mut self, entry: usize, reason: String) {
        self.stats.noop_faults += 1;
        self.log(TraceEntry::NoOp {
            at: self.state.clock,
            entry,
            reason,
        });
    }

    fn inject(&mut self, entry: usize) -> Result<()> {
        let f = self.faults[entry].clone();
        let clock = self.state.clock;
        let node = f.node.as_deref().and_then(|n| self.state.cluster.node_by_name(n));
        match f.kind {
            FailureKind::NodeKill | FailureKind::NodeSlow | FailureKind::NodeRecover if node.is_none() => {
                self.noop(entry, format!("unknown node {:?}", f.node));
            }
            FailureKind::NodeKill => {
                let id = node.expect("checked");
                let n = &mut self.state.cluster.nodes[id.index()];
                if !n.is_physically_up() {
                    self.noop(entry, "node already dead".into());
                    return Ok(());
                }
                n.state = NodeState::Dead;
                let running: Vec<AttemptRef> = n.running.iter().copied().collect();
                self.log(TraceEntry::NodeStateChange {
                    at: clock,
                    node: id,
                    state: NodeState::Dead,
                });
                let timeout = self.state.limits.attempt_timeout;
                for a in running {
                    let att = &mut self.state.tasks[a.task.index()].attempts[a.attempt.index()];
                    att.orphaned_at = Some(clock);
                    let at = (att.start + timeout + SimTime(1)).max(clock);
                    self.schedule(at, EventKind::TimeoutCheck { attempt: a })?;
                }
            }
            FailureKind::NodeRecover => {
                let id = node.expect("checked");
                if self.state.cluster.nodes[id.index()].is_physically_up() {
                    self.noop(entry, "node not dead".into());
                    return Ok(());
                }
                // The TaskTracker re-registers with empty slots.
                self.fail_node_attempts(id);
                let n = &mut self.state.cluster.nodes[id.index()];
                n.state = NodeState::Alive;
                n.slowdown = 1.0;
                n.last_heartbeat = clock;
                let rejoined = std::mem::replace(&mut n.lost, false);
                self.log(TraceEntry::NodeStateChange {
                    at: clock,
                    node: id,
                    state: NodeState::Alive,
                });
                if rejoined {
                    self.log(TraceEntry::NodeRejoined { at: clock, node: id });
                }
                self.request_tick();
            }
            FailureKind::NodeSlow => {
                let id = node.expect("checked");
                let n = &mut self.state.cluster.nodes[id.index()];
                if n.state != NodeState::Alive {
                    self.noop(entry, "node not alive".into());
                    return Ok(());
                }
                n.state = NodeState::Slow;
                n.slowdown = self.plan.slowdown_factor;
                self.log(TraceEntry::NodeStateChange {
                    at: clock,
                    node: id,
                    state: NodeState::Slow,
                });
            }
            FailureKind::TaskKill => {
                let kind = f.task_kind.unwrap_or(TaskKind::Map);
                let task = f
                    .job
                    .as_deref()
                    .and_then(|name| self.state.jobs.iter().find(|j| j.spec.name == name))
                    .and_then(|j| {
                        let ids = match kind {
                            TaskKind::Map => &j.maps,
                            TaskKind::Reduce => &j.reduces,
                        };
                        f.task.and_then(|i| ids.get(i as usize).copied())
                    });
                let Some(t) = task else {
                    self.noop(entry, "unknown task".into());
                    return Ok(());
                };
                let running: Vec<AttemptRef> = self.state.tasks[t.index()]
                    .running_attempts()
                    .map(|a| AttemptRef { task: t, attempt: a.id })
                    .collect();
                if running.is_empty() {
                    self.noop(entry, "task not running".into());
                }
                for a in running {
                    if self.state.attempt(a).is_running() {
                        self.complete_attempt(a, AttemptStatus::Failed);
                    }
                }
            }
            FailureKind::NetworkPartition => {
                let Some(rack) = f.rack.as_deref().and_then(|r| self.state.cluster.rack_by_name(r)) else {
                    self.noop(entry, format!("unknown rack {:?}", f.rack));
                    return Ok(());
                };
                for n in self.state.cluster.nodes.iter_mut().filter(|n| n.rack == rack) {
                    n.partitioned = true;
                }
                let until = clock + SimTime(f.duration_ms.unwrap_or(0));
                self.schedule(until, EventKind::PartitionEnd { rack })?;
            }
        }
        Ok(())
    }

    // ---- scheduling ---------------------------------------------------------------

    fn scheduler_tick(&mut self) -> Result<()> {
        self.scheduler.begin_tick(&self.state);
        for _ in 0..MAX_DECISIONS_PER_TICK {
            let decision = self.scheduler.decide(&self.state);
            let progressed = match &decision {
                SchedulerDecision::Wait => false,
                SchedulerDecision::Assign { task, node } => self.dispatch(*task, &[*node], false, &decision),
                SchedulerDecision::SpeculativeAssign { task, nodes } => self.dispatch(*task, nodes, true, &decision),
                SchedulerDecision::Requeue { task, penalty_delta } => {
                    let t = *task;
                    if self.state.is_pending(t) {
                        self.add_penalty(t, *penalty_delta);
                        let penalty = self.state.tasks[t.index()].penalty;
                        self.log(TraceEntry::TaskRequeued {
                            at: self.state.clock,
                            task: t,
                            penalty,
                        });
                        true
                    } else {
                        self.reject(&decision, "requeue of a task that is not pending");
                        false
                    }
                }
            };
            if !progressed {
                break;
            }
        }
        if self.speculation.enabled {
            while let Some(d) = baseline_speculation(&self.state, &self.speculation) {
                let SchedulerDecision::SpeculativeAssign { task, nodes } = &d else { break };
                if !self.dispatch(*task, nodes, true, &d) {
                    break;
                }
            }
            if self.state.running_attempts() > 0 {
                self.request_tick_at(self.state.clock + SimTime(self.speculation.check_interval_ms));
            }
        }
        if let Some(at) = self.scheduler.next_recheck(&self.state) {
            if at > self.state.clock {
                self.request_tick_at(at);
            }
        }
        Ok(())
    }

    fn reject(&mut self, decision: &SchedulerDecision, reason: &str) {
        self.stats.rejected_decisions += 1;
        self.log(TraceEntry::Rejected {
            at: self.state.clock,
            decision: decision.clone(),
            reason: reason.to_string(),
        });
    }

    /// Re-validates a scheduler decision against the JobTracker's view and launches it.
    /// A node that is dead but still believed alive swallows the attempt.
    fn dispatch(&mut self, task: TaskId, nodes: &[NodeId], speculative: bool, decision: &SchedulerDecision) -> bool {
        let Some(t) = self.state.tasks.get(task.index()) else {
            self.reject(decision, "unknown task");
            return false;
        };
        let status_ok = t.status == TaskStatus::Pending && self.state.is_pending(task)
            || (speculative && t.status == TaskStatus::Running);
        if !status_ok {
            self.reject(decision, "task not schedulable");
            return false;
        }
        let kind = t.kind;
        let distinct: BTreeSet<NodeId> = nodes.iter().copied().collect();
        if nodes.is_empty() || distinct.len() != nodes.len() {
            self.reject(decision, "empty or duplicate node list");
            return false;
        }
        if t.attempts.len() + nodes.len() > self.state.max_attempts(kind) as usize {
            self.reject(decision, "attempt budget exceeded");
            return false;
        }
        for &n in nodes {
            let ok = self
                .state
                .cluster
                .nodes
                .get(n.index())
                .is_some_and(|node| node.believed_alive() && node.free_slots(kind) > 0);
            if !ok {
                self.reject(decision, "node not available");
                return false;
            }
        }
        let round = self.next_round(task);
        for &n in nodes {
            match self.check_start(task, n) {
                Ok(()) => {
                    self.launch(task, n, speculative, round, false);
                }
                Err(Error::NodeDead { .. }) => {
                    self.launch(task, n, speculative, round, true);
                }
                Err(_) => {
                    self.reject(decision, "start rejected");
                    return false;
                }
            }
        }
        true
    }
}

fn new_task(id: TaskId, job: JobId, kind: TaskKind, index: u32, preferred: Vec<NodeId>, block: Option<BlockId>) -> Task {
    Task {
        id,
        job,
        kind,
        index,
        preferred_nodes: preferred,
        block,
        attempts: Vec::new(),
        status: TaskStatus::Pending,
        penalty: 0,
        reschedule_events: 0,
        rounds: 0,
        pending_since: None,
    }
}

