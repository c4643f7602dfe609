//! Single and chained MapReduce jobs: specs, generation, block placement and the
//! duration model, plus the runtime task / attempt records.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterState;
use crate::config;
use crate::error::{Error, Result};
use crate::ids::{AttemptId, BlockId, ChainId, JobId, NodeId, TaskId};
use crate::time::SimTime;

pub const REPLICATION_FACTOR: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobType {
    #[serde(alias = "WORDCOUNT")]
    Wordcount,
    #[serde(alias = "TERAGEN")]
    Teragen,
    #[serde(alias = "TERASORT")]
    Terasort,
}

impl JobType {
    pub fn default_duration(self) -> DurationProfile {
        let map_mu_ms = match self {
            JobType::Wordcount => 60_000.0,
            JobType::Teragen => 45_000.0,
            JobType::Terasort => 90_000.0,
        };
        DurationProfile {
            map_mu_ms,
            reduce_mu_ms: 2.0 * map_mu_ms,
            sigma: 0.4,
        }
    }

    pub fn default_resources(self) -> ResourceProfile {
        match self {
            JobType::Wordcount => ResourceProfile { cpu: 1.0, mem_mb: 1024.0, hdfs_rw: 20.0 },
            JobType::Teragen => ResourceProfile { cpu: 0.5, mem_mb: 512.0, hdfs_rw: 60.0 },
            JobType::Terasort => ResourceProfile { cpu: 1.0, mem_mb: 2048.0, hdfs_rw: 40.0 },
        }
    }
}

impl fmt::Display for JobType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            JobType::Wordcount => "WORDCOUNT",
            JobType::Teragen => "TERAGEN",
            JobType::Terasort => "TERASORT",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskKind {
    Map,
    Reduce,
}

/// Lognormal duration parameters: a draw is `mu * exp(sigma * z)` with `z ~ N(0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DurationProfile {
    pub map_mu_ms: f64,
    pub reduce_mu_ms: f64,
    pub sigma: f64,
}

impl DurationProfile {
    pub fn mu_ms(&self, kind: TaskKind) -> f64 {
        match kind {
            TaskKind::Map => self.map_mu_ms,
            TaskKind::Reduce => self.reduce_mu_ms,
        }
    }

    /// Unscaled lognormal draw in (fractional) milliseconds.
    pub fn draw_base_ms<R: Rng + ?Sized>(&self, kind: TaskKind, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mu_ms(kind) * (self.sigma * z).exp()
    }
}

/// Per-task resource demand while an attempt runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResourceProfile {
    pub cpu: f64,
    pub mem_mb: f64,
    pub hdfs_rw: f64,
}

/// Applies node slowdown and the remote-read penalty to a base draw.
pub fn scale_duration(base_ms: f64, kind: TaskKind, local: bool, slowdown: f64, remote_read_factor: f64) -> SimTime {
    let mut ms = base_ms * slowdown;
    if kind == TaskKind::Map && !local {
        ms *= remote_read_factor;
    }
    SimTime(ms.round().max(1.0) as u64)
}

/// Draws an attempt duration for a task of `kind` on a node with the given slowdown.
pub fn sample_duration<R: Rng + ?Sized>(
    profile: &DurationProfile,
    kind: TaskKind,
    local: bool,
    slowdown: f64,
    remote_read_factor: f64,
    rng: &mut R,
) -> SimTime {
    let base = profile.draw_base_ms(kind, rng);
    scale_duration(base, kind, local, slowdown, remote_read_factor)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub id: JobId,
    pub name: String,
    pub job_type: JobType,
    pub priority: i32,
    pub num_maps: u32,
    pub num_reduces: u32,
    pub submit_time: SimTime,
    pub duration: DurationProfile,
    pub resources: ResourceProfile,
    pub queue: Option<String>,
}

impl JobSpec {
    pub fn total_tasks(&self) -> u32 {
        self.num_maps + self.num_reduces
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ChainKind {
    #[default]
    Single,
    Sequential,
    Parallel,
    Mix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub id: ChainId,
    pub name: String,
    pub kind: ChainKind,
    pub jobs: Vec<JobSpec>,
    /// Precedence pairs as indices into `jobs`: `(a, b)` means `a` must finish before `b`.
    pub edges: Vec<(usize, usize)>,
}

/// Task/job counts: a fixed value or an inclusive `[lo, hi]` range sampled uniformly.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CountSpec {
    Fixed(u32),
    Range([u32; 2]),
}

impl CountSpec {
    fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> u32 {
        match self {
            CountSpec::Fixed(n) => n,
            CountSpec::Range([lo, hi]) => rng.random_range(lo.min(hi)..=hi.max(lo)),
        }
    }

    fn min(self) -> u32 {
        match self {
            CountSpec::Fixed(n) => n,
            CountSpec::Range([lo, hi]) => lo.min(hi),
        }
    }

    fn max(self) -> u32 {
        match self {
            CountSpec::Fixed(n) => n,
            CountSpec::Range([lo, hi]) => lo.max(hi),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "process", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrivalSpec {
    #[default]
    AllAtZero,
    Fixed { interval_ms: u64 },
    Poisson { mean_interarrival_ms: f64 },
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileOverride {
    pub map_mu_ms: Option<f64>,
    pub reduce_mu_ms: Option<f64>,
    pub sigma: Option<f64>,
    pub cpu: Option<f64>,
    pub mem_mb: Option<f64>,
    pub hdfs_rw: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobEntrySpec {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(rename = "type")]
    pub job_type: JobType,
    pub maps: CountSpec,
    #[serde(default)]
    pub reduces: Option<CountSpec>,
    #[serde(default)]
    pub priority: Option<i32>,
    #[serde(default)]
    pub queue: Option<String>,
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainEntrySpec {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub kind: ChainKind,
    #[serde(default = "one")]
    pub repeat: u32,
    #[serde(default)]
    pub submit_ms: Option<u64>,
    #[serde(default)]
    pub priority: i32,
    pub jobs: Vec<JobEntrySpec>,
    #[serde(default)]
    pub edges: Vec<[usize; 2]>,
}

/// Workload file.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    #[serde(default)]
    pub arrival: ArrivalSpec,
    #[serde(default)]
    pub profiles: BTreeMap<JobType, ProfileOverride>,
    #[serde(default)]
    pub chains: Vec<ChainEntrySpec>,
}

impl WorkloadSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let spec: WorkloadSpec = config::load_file(path)?;
        spec.validate().map_err(|e| Error::config(path, e))?;
        Ok(spec)
    }

    fn profile(&self, t: JobType) -> (DurationProfile, ResourceProfile) {
        let mut d = t.default_duration();
        let mut r = t.default_resources();
        if let Some(o) = self.profiles.get(&t) {
            if let Some(v) = o.map_mu_ms {
                d.map_mu_ms = v;
                if o.reduce_mu_ms.is_none() {
                    d.reduce_mu_ms = 2.0 * v;
                }
            }
            if let Some(v) = o.reduce_mu_ms {
                d.reduce_mu_ms = v;
            }
            if let Some(v) = o.sigma {
                d.sigma = v;
            }
            if let Some(v) = o.cpu {
                r.cpu = v;
            }
            if let Some(v) = o.mem_mb {
                r.mem_mb = v;
            }
            if let Some(v) = o.hdfs_rw {
                r.hdfs_rw = v;
            }
        }
        (d, r)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.arrival {
            ArrivalSpec::Poisson { mean_interarrival_ms } if *mean_interarrival_ms <= 0.0 => {
                return Err(Error::Invalid("arrival.mean_interarrival_ms must be positive".into()))
            }
            _ => {}
        }
        for (t, o) in &self.profiles {
            let (d, _) = self.profile(*t);
            if d.map_mu_ms <= 0.0 || d.reduce_mu_ms <= 0.0 || d.sigma < 0.0 {
                return Err(Error::Invalid(format!("profile for {t} has non-positive duration or negative sigma")));
            }
            if [o.cpu, o.mem_mb, o.hdfs_rw].iter().flatten().any(|v| *v < 0.0) {
                return Err(Error::Invalid(format!("profile for {t} has negative resource demand")));
            }
        }
        for (ci, c) in self.chains.iter().enumerate() {
            let cname = c.name.clone().unwrap_or_else(|| format!("chain{ci}"));
            if c.jobs.is_empty() {
                return Err(Error::Invalid(format!("chain `{cname}` has no jobs")));
            }
            if c.repeat == 0 {
                return Err(Error::Invalid(format!("chain `{cname}` has repeat = 0")));
            }
            for j in &c.jobs {
                if j.maps.min() == 0 {
                    return Err(Error::Invalid(format!("chain `{cname}`: map count must be >= 1")));
                }
                if j.job_type == JobType::Teragen && j.reduces.map(|r| r.max()).unwrap_or(0) > 0 {
                    return Err(Error::Invalid(format!("chain `{cname}`: TERAGEN jobs have no reduces")));
                }
            }
            let n = c.jobs.len();
            match c.kind {
                ChainKind::Single if n != 1 || !c.edges.is_empty() => {
                    return Err(Error::Invalid(format!("chain `{cname}`: single chains hold exactly one job and no edges")));
                }
                ChainKind::Sequential | ChainKind::Parallel if !c.edges.is_empty() => {
                    return Err(Error::Invalid(format!("chain `{cname}`: edges are only allowed for mix chains")));
                }
                _ => {}
            }
            if c.edges.iter().any(|[a, b]| *a >= n || *b >= n || a == b) {
                return Err(Error::Invalid(format!("chain `{cname}`: edge refers to an unknown job")));
            }
            let edges: Vec<(usize, usize)> = c.edges.iter().map(|[a, b]| (*a, *b)).collect();
            if topological_order(n, &edges).is_none() {
                return Err(Error::CyclicChain { chain: cname });
            }
        }
        Ok(())
    }
}

/// Kahn's algorithm; `None` when the graph has a cycle.
pub fn topological_order(n: usize, edges: &[(usize, usize)]) -> Option<Vec<usize>> {
    let mut indeg = vec![0usize; n];
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in edges {
        indeg[b] += 1;
        out[a].push(b);
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &w in &out[v] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                queue.push_back(w);
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// Expands a workload spec into concrete chains. Deterministic for a given RNG state.
pub fn generate_workload<R: Rng + ?Sized>(spec: &WorkloadSpec, rng: &mut R) -> Result<Vec<ChainSpec>> {
    spec.validate()?;
    let mut chains = Vec::new();
    let mut next_job = 0u32;
    let mut clock_ms = 0.0f64;
    let mut arrivals = 0u64;
    for (ci, entry) in spec.chains.iter().enumerate() {
        let base_name = entry.name.clone().unwrap_or_else(|| format!("chain{ci}"));
        for rep in 0..entry.repeat {
            let submit = match (entry.submit_ms, &spec.arrival) {
                (Some(t), _) => SimTime(t),
                (None, ArrivalSpec::AllAtZero) => SimTime::ZERO,
                (None, ArrivalSpec::Fixed { interval_ms }) => SimTime(arrivals * interval_ms),
                (None, ArrivalSpec::Poisson { mean_interarrival_ms }) => {
                    if arrivals > 0 {
                        let exp = Exp::new(1.0 / mean_interarrival_ms).expect("validated rate");
                        clock_ms += exp.sample(rng);
                    }
                    SimTime(clock_ms.round() as u64)
                }
            };
            if entry.submit_ms.is_none() {
                arrivals += 1;
            }
            let name = if entry.repeat > 1 { format!("{base_name}-{rep}") } else { base_name.clone() };
            let mut jobs = Vec::with_capacity(entry.jobs.len());
            for (ji, je) in entry.jobs.iter().enumerate() {
                let (duration, resources) = spec.profile(je.job_type);
                let num_maps = je.maps.sample(rng);
                let num_reduces = match (je.job_type, je.reduces) {
                    (JobType::Teragen, _) => 0,
                    (_, Some(r)) => r.sample(rng),
                    (_, None) => 1,
                };
                let job_name = match &je.name {
                    Some(n) if entry.repeat > 1 => format!("{n}-{rep}"),
                    Some(n) => n.clone(),
                    None if entry.jobs.len() == 1 => name.clone(),
                    None => format!("{name}-j{ji}"),
                };
                jobs.push(JobSpec {
                    id: JobId(next_job),
                    name: job_name,
                    job_type: je.job_type,
                    priority: je.priority.unwrap_or(entry.priority),
                    num_maps,
                    num_reduces,
                    submit_time: submit,
                    duration,
                    resources,
                    queue: je.queue.clone(),
                });
                next_job += 1;
            }
            let edges = match entry.kind {
                ChainKind::Sequential => (1..jobs.len()).map(|i| (i - 1, i)).collect(),
                _ => entry.edges.iter().map(|[a, b]| (*a, *b)).collect(),
            };
            chains.push(ChainSpec {
                id: ChainId(chains.len() as u32),
                name,
                kind: entry.kind,
                jobs,
                edges,
            });
        }
    }
    Ok(chains)
}

/// Chooses `min(3, alive nodes)` distinct replica holders for each map of `job`.
pub fn assign_block_replicas<R: Rng + ?Sized>(
    job: &JobSpec,
    cluster: &ClusterState,
    rng: &mut R,
) -> Result<Vec<Vec<NodeId>>> {
    let alive: Vec<NodeId> = cluster
        .nodes
        .iter()
        .filter(|n| n.is_physically_up())
        .map(|n| n.id)
        .collect();
    if alive.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let k = REPLICATION_FACTOR.min(alive.len());
    Ok((0..job.num_maps)
        .map(|_| {
            let mut picked: Vec<NodeId> = sample(rng, alive.len(), k).into_iter().map(|i| alive[i]).collect();
            picked.sort();
            picked
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskStatus {
    Pending,
    Running,
    Finished,
    Failed,
    Killed,
}

impl TaskStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, TaskStatus::Finished | TaskStatus::Failed | TaskStatus::Killed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AttemptStatus {
    Running,
    Finished,
    Failed,
    #[serde(rename = "FAILED-TIMEOUT")]
    FailedTimeout,
    Killed,
}

impl AttemptStatus {
    pub fn is_failure(self) -> bool {
        matches!(self, AttemptStatus::Failed | AttemptStatus::FailedTimeout)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskAttempt {
    pub id: AttemptId,
    pub node: NodeId,
    pub start: SimTime,
    pub end: Option<SimTime>,
    pub status: AttemptStatus,
    pub speculative: bool,
    pub local: bool,
    /// Scheduling round: copies launched by one decision share a round.
    pub round: u32,
    /// Planned completion time; `None` when launched on a node that was already dead.
    pub planned_end: Option<SimTime>,
    /// When the hosting node died under the attempt. The JobTracker only notices
    /// through heartbeat expiry or the attempt timeout.
    pub orphaned_at: Option<SimTime>,
}

impl TaskAttempt {
    pub fn duration(&self) -> Option<SimTime> {
        self.end.map(|e| e - self.start)
    }

    pub fn is_running(&self) -> bool {
        self.status == AttemptStatus::Running
    }

    /// Progress as reported to the JobTracker: frozen once the node died.
    pub fn progress(&self, clock: SimTime) -> f64 {
        let Some(planned) = self.planned_end else { return 0.0 };
        let now = self.orphaned_at.unwrap_or(clock).min(planned);
        let total = (planned - self.start).0.max(1) as f64;
        (now.saturating_sub(self.start).0 as f64 / total).clamp(0.0, 1.0)
    }
}

#[derive(Clone, Debug)]
pub struct Task {
    pub id: TaskId,
    pub job: JobId,
    pub kind: TaskKind,
    /// Position among the job's tasks of the same kind.
    pub index: u32,
    pub preferred_nodes: Vec<NodeId>,
    pub block: Option<BlockId>,
    pub attempts: Vec<TaskAttempt>,
    pub status: TaskStatus,
    pub penalty: u32,
    pub reschedule_events: u32,
    pub rounds: u32,
    /// When the task last became schedulable.
    pub pending_since: Option<SimTime>,
}

impl Task {
    pub fn running_attempts(&self) -> impl Iterator<Item = &TaskAttempt> {
        self.attempts.iter().filter(|a| a.status == AttemptStatus::Running)
    }

    pub fn finished_attempts(&self) -> usize {
        self.attempts.iter().filter(|a| a.status == AttemptStatus::Finished).count()
    }

    pub fn failed_attempts(&self) -> usize {
        self.attempts.iter().filter(|a| a.status.is_failure()).count()
    }

    pub fn is_preferred(&self, node: NodeId) -> bool {
        self.preferred_nodes.contains(&node)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum JobStatus {
    /// Waiting for submission or for upstream chain jobs.
    Waiting,
    Running,
    Finished,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Finished | JobStatus::Failed)
    }
}

#[derive(Clone, Debug)]
pub struct Job {
    pub spec: JobSpec,
    pub chain: ChainId,
    pub status: JobStatus,
    pub submitted: bool,
    /// When the job entered the scheduling queue (submitted and upstream done).
    pub released_at: Option<SimTime>,
    pub finished_at: Option<SimTime>,
    pub maps: Vec<TaskId>,
    pub reduces: Vec<TaskId>,
    pub upstream: BTreeSet<JobId>,
    pub downstream: BTreeSet<JobId>,
    pub finished_maps: u32,
    pub finished_tasks: u32,
}

impl Job {
    pub fn tasks(&self) -> impl Iterator<Item = TaskId> + '_ {
        self.maps.iter().chain(self.reduces.iter()).copied()
    }

    pub fn maps_done(&self) -> bool {
        self.finished_maps as usize == self.maps.len()
    }
}
