//! End-to-end orchestration: scenario loading, single runs, model training from
//! simulated logs and multi-seed scheduler comparisons.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::atlas::{AtlasConfig, AtlasScheduler, BaseKind};
use crate::cluster::ClusterSpec;
use crate::config;
use crate::engine::{AttemptRecord, Engine, EngineConfig, TraceEntry};
use crate::error::{Error, Result};
use crate::failure::FailurePlan;
use crate::predictor::{
    export_dataset, train, ConstantPredictor, Dataset, DatasetFilter, FailurePredictor, Hyperparams, ModelKind,
    PredictiveModel,
};
use crate::report::{aggregate, ComparisonTable, SimReport};
use crate::scheduler::{
    BasePolicy, BaselineScheduler, CapacityConfig, CapacityPolicy, FairConfig, FairPolicy, FifoPolicy, Scheduler,
    SpeculationConfig,
};
use crate::time::SimTime;
use crate::workload::{TaskKind, WorkloadSpec};

/// Cluster, workload and failure plan: everything but the scheduler and seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub cluster: ClusterSpec,
    pub workload: WorkloadSpec,
    pub failures: FailurePlan,
}

impl Scenario {
    pub fn load(cluster: &Path, workload: &Path, failures: Option<&Path>) -> Result<Scenario> {
        let cluster: ClusterSpec = config::load_file(cluster)?;
        let workload = WorkloadSpec::load(workload)?;
        let failures = match failures {
            Some(p) => FailurePlan::load(p)?,
            None => FailurePlan::default(),
        };
        Ok(Scenario {
            cluster,
            workload,
            failures,
        })
    }

    /// Loads `cluster.yaml`, `workload.yaml` and (if present) `failures.yaml` from a directory.
    pub fn load_dir(dir: &Path) -> Result<Scenario> {
        let failures = dir.join("failures.yaml");
        Scenario::load(
            &dir.join("cluster.yaml"),
            &dir.join("workload.yaml"),
            failures.exists().then_some(failures.as_path()),
        )
    }

    pub fn fingerprint(&self) -> String {
        let value = serde_json::to_value(self).expect("scenario serializes");
        let mut h = Sha256::new();
        h.update(value.to_string().as_bytes());
        hex::encode(&h.finalize()[..12])
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    #[default]
    Fifo,
    Fair,
    Capacity,
    Atlas,
}

impl std::str::FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fifo" => Ok(SchedulerKind::Fifo),
            "fair" => Ok(SchedulerKind::Fair),
            "capacity" => Ok(SchedulerKind::Capacity),
            "atlas" => Ok(SchedulerKind::Atlas),
            other => Err(Error::Invalid(format!("unknown scheduler `{other}`"))),
        }
    }
}

/// Scheduler choice plus the settings each kind reads.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SchedulerSettings {
    #[serde(default)]
    pub fair: FairConfig,
    #[serde(default)]
    pub capacity: CapacityConfig,
    #[serde(default)]
    pub atlas: AtlasConfig,
    #[serde(default)]
    pub speculation: SpeculationConfig,
}

/// Map and reduce predictors for ATLAS.
#[derive(Clone)]
pub struct AtlasModels {
    pub map: Arc<dyn FailurePredictor>,
    pub reduce: Arc<dyn FailurePredictor>,
}

impl AtlasModels {
    pub fn constant(fail: bool) -> AtlasModels {
        let p = Arc::new(ConstantPredictor { fail });
        AtlasModels {
            map: p.clone(),
            reduce: p,
        }
    }

    pub fn from_models(map: PredictiveModel, reduce: PredictiveModel) -> AtlasModels {
        AtlasModels {
            map: Arc::new(map),
            reduce: Arc::new(reduce),
        }
    }

    /// Loads the model files named in the config; a missing reduce model falls back to
    /// the map model.
    pub fn load(cfg: &AtlasConfig) -> Result<AtlasModels> {
        let map_path = cfg
            .map_model
            .as_ref()
            .ok_or_else(|| Error::Invalid("atlas.map_model is required".into()))?;
        let map: Arc<dyn FailurePredictor> = Arc::new(PredictiveModel::load(map_path)?);
        let reduce: Arc<dyn FailurePredictor> = match &cfg.reduce_model {
            Some(p) => Arc::new(PredictiveModel::load(p)?),
            None => map.clone(),
        };
        Ok(AtlasModels { map, reduce })
    }
}

fn base_policy(kind: BaseKind, s: &SchedulerSettings) -> Box<dyn BasePolicy> {
    match kind {
        BaseKind::Fifo => Box::new(FifoPolicy),
        BaseKind::Fair => Box::new(FairPolicy::new(s.fair.clone())),
        BaseKind::Capacity => Box::new(CapacityPolicy::new(s.capacity.clone())),
    }
}

pub fn build_scheduler(
    kind: SchedulerKind,
    settings: &SchedulerSettings,
    models: Option<&AtlasModels>,
    decision_log: bool,
) -> Result<Box<dyn Scheduler>> {
    Ok(match kind {
        SchedulerKind::Fifo => Box::new(BaselineScheduler::new(base_policy(BaseKind::Fifo, settings))),
        SchedulerKind::Fair => Box::new(BaselineScheduler::new(base_policy(BaseKind::Fair, settings))),
        SchedulerKind::Capacity => Box::new(BaselineScheduler::new(base_policy(BaseKind::Capacity, settings))),
        SchedulerKind::Atlas => {
            let models = models.ok_or_else(|| Error::Invalid("atlas needs map/reduce models".into()))?;
            let base = base_policy(settings.atlas.base_scheduler, settings);
            Box::new(
                AtlasScheduler::new(base, settings.atlas.clone(), models.map.clone(), models.reduce.clone())
                    .with_decision_log(decision_log),
            )
        }
    })
}

pub const DEFAULT_HORIZON_MS: u64 = 7 * 24 * 3_600_000;

/// Everything a finished run produced.
pub struct RunOutput {
    pub report: SimReport,
    pub trace: Vec<TraceEntry>,
    pub attempts: Vec<AttemptRecord>,
    pub decisions: Vec<serde_json::Value>,
}

pub fn run_scenario(
    scenario: &Scenario,
    scheduler: Box<dyn Scheduler>,
    seed: u64,
    horizon: SimTime,
    speculation: SpeculationConfig,
) -> Result<RunOutput> {
    let cfg = EngineConfig {
        seed,
        horizon,
        speculation,
    };
    let mut engine = Engine::new(&scenario.cluster, &scenario.workload, &scenario.failures, scheduler, cfg)?;
    let mut report = engine.run_until(horizon)?;
    report.scenario_fingerprint = scenario.fingerprint();
    let decisions = engine.scheduler_mut().take_decision_log();
    Ok(RunOutput {
        report,
        trace: engine.trace().to_vec(),
        attempts: engine.attempt_records().to_vec(),
        decisions,
    })
}

/// Newline-delimited JSON, one item per line.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it).expect("serializable"));
        out.push('\n');
    }
    out
}

pub fn read_attempt_log(path: &Path) -> Result<Vec<AttemptRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Dataset(format!("{}: line {}: {e}", path.display(), i + 1))))
        .collect()
}

/// Run configuration file. Relative paths resolve against the file's directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub cluster: PathBuf,
    pub workload: PathBuf,
    #[serde(default)]
    pub failures: Option<PathBuf>,
    #[serde(default)]
    pub scheduler: SchedulerKind,
    pub seed: Option<u64>,
    #[serde(default)]
    pub horizon_ms: Option<u64>,
    /// Output directory; `MRSIM_OUT_DIR` and `--out` take precedence.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub trace: bool,
    #[serde(default)]
    pub decision_log: bool,
    #[serde(default)]
    pub attempt_log: bool,
    #[serde(flatten)]
    pub settings: SchedulerSettings,
}

impl RunConfig {
    /// Parses the config and resolves referenced files, failing on anything missing.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let mut cfg: RunConfig = config::load_file(path)?;
        let base = path;
        cfg.cluster = config::resolve_relative(base, &cfg.cluster);
        cfg.workload = config::resolve_relative(base, &cfg.workload);
        cfg.failures = cfg.failures.map(|p| config::resolve_relative(base, &p));
        cfg.out_dir = cfg.out_dir.map(|p| config::resolve_relative(base, &p));
        let atlas = &mut cfg.settings.atlas;
        atlas.map_model = atlas.map_model.take().map(|p| config::resolve_relative(base, &p));
        atlas.reduce_model = atlas.reduce_model.take().map(|p| config::resolve_relative(base, &p));
        for p in [Some(&cfg.cluster), Some(&cfg.workload), cfg.failures.as_ref()].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::config(p, "file not found"));
            }
        }
        Ok(cfg)
    }

    pub fn scenario(&self) -> Result<Scenario> {
        Scenario::load(&self.cluster, &self.workload, self.failures.as_deref())
    }

    pub fn horizon(&self) -> SimTime {
        SimTime(self.horizon_ms.unwrap_or(DEFAULT_HORIZON_MS))
    }
}

/// Trains separate map and reduce models from FIFO runs over `train_seeds`.
/// A task kind whose log holds a single class gets a constant predictor for that class.
pub fn train_atlas_models(
    scenario: &Scenario,
    train_seeds: &[u64],
    kind: ModelKind,
    hp: &Hyperparams,
    seed: u64,
    horizon: SimTime,
) -> Result<AtlasModels> {
    let logs: Result<Vec<Vec<AttemptRecord>>> = train_seeds
        .par_iter()
        .map(|&s| {
            let sched = build_scheduler(SchedulerKind::Fifo, &SchedulerSettings::default(), None, false)?;
            Ok(run_scenario(scenario, sched, s, horizon, SpeculationConfig::default())?.attempts)
        })
        .collect();
    let records: Vec<AttemptRecord> = logs?.into_iter().flatten().collect();
    let dataset = export_dataset(&records, "training", DatasetFilter::default());
    let fit = |k: TaskKind| -> Result<Arc<dyn FailurePredictor>> {
        let ds = dataset.filter_kind(k);
        match train(&ds, kind, hp, seed) {
            Ok(m) => Ok(Arc::new(m)),
            Err(Error::SingleClassDataset) => {
                let fail = ds.count_label(crate::predictor::Label::Failed) > ds.len() / 2;
                Ok(Arc::new(ConstantPredictor { fail }))
            }
            Err(e) => Err(e),
        }
    };
    Ok(AtlasModels {
        map: fit(TaskKind::Map)?,
        reduce: fit(TaskKind::Reduce)?,
    })
}

/// Dataset built from FIFO runs on the given seeds.
pub fn training_dataset(scenario: &Scenario, seeds: &[u64], horizon: SimTime) -> Result<Dataset> {
    let logs: Result<Vec<Vec<AttemptRecord>>> = seeds
        .par_iter()
        .map(|&s| {
            let sched = build_scheduler(SchedulerKind::Fifo, &SchedulerSettings::default(), None, false)?;
            Ok(run_scenario(scenario, sched, s, horizon, SpeculationConfig::default())?.attempts)
        })
        .collect();
    let records: Vec<AttemptRecord> = logs?.into_iter().flatten().collect();
    Ok(export_dataset(&records, "training", DatasetFilter::default()))
}

/// Runs every (scheduler, seed) pair, in parallel, and aggregates in input order.
pub fn compare(
    scenario: &Scenario,
    schedulers: &[SchedulerKind],
    seeds: &[u64],
    settings: &SchedulerSettings,
    models: Option<&AtlasModels>,
    horizon: SimTime,
) -> Result<(Vec<SimReport>, ComparisonTable)> {
    let jobs: Vec<(SchedulerKind, u64)> = schedulers
        .iter()
        .flat_map(|&k| seeds.iter().map(move |&s| (k, s)))
        .collect();
    let reports: Result<Vec<SimReport>> = jobs
        .par_iter()
        .map(|&(k, s)| {
            let sched = build_scheduler(k, settings, models, false)?;
            Ok(run_scenario(scenario, sched, s, horizon, settings.speculation)?.report)
        })
        .collect();
    let reports = reports?;
    let table = aggregate(&reports)?;
    Ok((reports, table))
}
