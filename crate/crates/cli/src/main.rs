use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use mrsim::error::Error;
use mrsim::pipeline::{
    self, AtlasModels, RunConfig, Scenario, SchedulerKind, SchedulerSettings, DEFAULT_HORIZON_MS,
};
use mrsim::predictor::{
    cross_validate, export_dataset, train, CvReport, Dataset, DatasetFilter, Hyperparams, Label, ModelKind,
};
use mrsim::time::SimTime;
use mrsim::workload::TaskKind;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "mrsim", version, about = "MapReduce cluster simulator with failure-aware scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario under one scheduler and write a report.
    Run(RunArgs),
    /// Turn an attempt log into a labelled feature CSV.
    ExportDataset(ExportArgs),
    /// Train failure predictors with 10-fold cross validation.
    Train(TrainArgs),
    /// Run every scheduler over every seed and write a comparison table.
    Compare(CompareArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Run configuration (YAML/JSON). Its scenario files are used unless overridden.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding cluster.yaml, workload.yaml and optionally failures.yaml.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    cluster: Option<PathBuf>,
    #[arg(long)]
    workload: Option<PathBuf>,
    #[arg(long)]
    failures: Option<PathBuf>,
    #[arg(long)]
    horizon_ms: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long)]
    scheduler: Option<SchedulerKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (falls back to MRSIM_OUT_DIR, then the config, then `.`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the event trace (trace.jsonl).
    #[arg(long)]
    trace: bool,
    /// Also write the ATLAS decision log (decisions.jsonl).
    #[arg(long)]
    decision_log: bool,
    /// Also write the per-attempt log (attempts.jsonl), the input of export-dataset.
    #[arg(long)]
    attempt_log: bool,
    #[arg(long)]
    map_model: Option<PathBuf>,
    #[arg(long)]
    reduce_model: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    /// Attempt log written by `run --attempt-log`.
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Keep only MAP or REDUCE attempts.
    #[arg(long)]
    kind: Option<TaskKindArg>,
    #[arg(long, default_value = "run")]
    run_id: String,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum TaskKindArg {
    Map,
    Reduce,
}

impl From<TaskKindArg> for TaskKind {
    fn from(k: TaskKindArg) -> Self {
        match k {
            TaskKindArg::Map => TaskKind::Map,
            TaskKindArg::Reduce => TaskKind::Reduce,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "forest")]
    kind: ModelKind,
    /// Cross-validate these kinds and keep the one with the best mean accuracy.
    #[arg(long, value_delimiter = ',')]
    select_best: Vec<ModelKind>,
    /// Train a single model for this task type instead of one per type.
    #[arg(long)]
    task_type: Option<TaskKindArg>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, value_delimiter = ',', default_value = "fifo,atlas")]
    schedulers: Vec<SchedulerKind>,
    /// Seed list such as `1-20` or `1,2,5`.
    #[arg(long)]
    seeds: String,
    /// Seeds of the FIFO runs ATLAS models are trained on (when no model files are given).
    #[arg(long, default_value = "1001-1010")]
    train_seeds: String,
    #[arg(long, default_value = "forest")]
    model_kind: ModelKind,
    #[arg(long)]
    map_model: Option<PathBuf>,
    #[arg(long)]
    reduce_model: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// An error tagged with its exit code.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        let code = match err.downcast_ref::<Error>() {
            Some(e) if e.is_config_error() => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        };
        Failure { code, err }
    }
}

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        err: anyhow!("{msg}"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::ExportDataset(a) => cmd_export(a),
        Command::Train(a) => cmd_train(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, Failure> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let parsed = match part.split_once('-') {
            Some((a, b)) => a
                .parse::<u64>()
                .and_then(|a| b.parse::<u64>().map(|b| (a..=b).collect::<Vec<_>>())),
            None => part.parse::<u64>().map(|v| vec![v]),
        };
        out.extend(parsed.map_err(|_| usage(format!("bad seed list `{s}`")))?);
    }
    if out.is_empty() {
        return Err(usage("seed list is empty"));
    }
    Ok(out)
}

fn out_dir(flag: Option<PathBuf>, config: Option<&Path>) -> PathBuf {
    flag.or_else(|| std::env::var_os("MRSIM_OUT_DIR").map(PathBuf::from))
        .or_else(|| config.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn require_file(p: &Path) -> Result<(), Failure> {
    if p.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{}: file not found", p.display())))
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Scenario, settings and the loaded config (if any) from the shared flags.
fn resolve_scenario(a: &ScenarioArgs) -> Result<(Scenario, Option<RunConfig>, SimTime), Failure> {
    let cfg = match &a.config {
        Some(p) => {
            require_file(p)?;
            Some(RunConfig::load(p).map_err(anyhow::Error::from)?)
        }
        None => None,
    };
    let (mut cluster, mut workload, mut failures) = match (&cfg, &a.scenario) {
        (_, Some(dir)) => {
            let f = dir.join("failures.yaml");
            (Some(dir.join("cluster.yaml")), Some(dir.join("workload.yaml")), f.exists().then_some(f))
        }
        (Some(c), None) => (Some(c.cluster.clone()), Some(c.workload.clone()), c.failures.clone()),
        (None, None) => (None, None, None),
    };
    if a.cluster.is_some() {
        cluster = a.cluster.clone();
    }
    if a.workload.is_some() {
        workload = a.workload.clone();
    }
    if a.failures.is_some() {
        failures = a.failures.clone();
    }
    let cluster = cluster.ok_or_else(|| usage("no cluster file: pass --config, --scenario or --cluster"))?;
    let workload = workload.ok_or_else(|| usage("no workload file: pass --config, --scenario or --workload"))?;
    for p in [Some(&cluster), Some(&workload), failures.as_ref()].into_iter().flatten() {
        require_file(p)?;
    }
    let scenario = Scenario::load(&cluster, &workload, failures.as_deref()).map_err(anyhow::Error::from)?;
    let horizon = a
        .horizon_ms
        .or(cfg.as_ref().and_then(|c| c.horizon_ms))
        .unwrap_or(DEFAULT_HORIZON_MS);
    Ok((scenario, cfg, SimTime(horizon)))
}

fn load_models(settings: &SchedulerSettings, map: Option<PathBuf>, reduce: Option<PathBuf>) -> Result<AtlasModels, Failure> {
    let mut atlas = settings.atlas.clone();
    if map.is_some() {
        atlas.map_model = map;
    }
    if reduce.is_some() {
        atlas.reduce_model = reduce;
    }
    for p in [atlas.map_model.as_ref(), atlas.reduce_model.as_ref()].into_iter().flatten() {
        require_file(p)?;
    }
    Ok(AtlasModels::load(&atlas).map_err(anyhow::Error::from)?)
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    let (scenario, cfg, horizon) = resolve_scenario(&a.scenario)?;
    let settings = cfg.as_ref().map(|c| c.settings.clone()).unwrap_or_default();
    let kind = a.scheduler.or(cfg.as_ref().map(|c| c.scheduler)).unwrap_or_default();
    let seed = a
        .seed
        .or(cfg.as_ref().and_then(|c| c.seed))
        .ok_or_else(|| usage("a seed is required (--seed or `seed:` in the config)"))?;
    let trace = a.trace || cfg.as_ref().is_some_and(|c| c.trace);
    let decision_log = a.decision_log || cfg.as_ref().is_some_and(|c| c.decision_log);
    let attempt_log = a.attempt_log || cfg.as_ref().is_some_and(|c| c.attempt_log);
    let out = out_dir(a.out, cfg.as_ref().and_then(|c| c.out_dir.as_deref()));

    let models = match kind {
        SchedulerKind::Atlas => Some(load_models(&settings, a.map_model, a.reduce_model)?),
        _ => None,
    };
    let sched = pipeline::build_scheduler(kind, &settings, models.as_ref(), decision_log).map_err(anyhow::Error::from)?;
    let mut output = pipeline::run_scenario(&scenario, sched, seed, horizon, settings.speculation)
        .map_err(anyhow::Error::from)?;
    output.report.config = serde_json::json!({
        "scheduler": kind,
        "seed": seed,
        "horizon_ms": horizon.0,
        "settings": settings,
    });

    write(&out.join("report.json"), &output.report.to_canonical_json())?;
    if trace {
        write(&out.join("trace.jsonl"), &pipeline::to_jsonl(&output.trace))?;
    }
    if decision_log {
        write(&out.join("decisions.jsonl"), &pipeline::to_jsonl(&output.decisions))?;
    }
    if attempt_log {
        write(&out.join("attempts.jsonl"), &pipeline::to_jsonl(&output.attempts))?;
    }
    let agg = &output.report.aggregates;
    println!(
        "{} seed={} jobs={} failed_jobs={:.2}% failed_tasks={:.2}% mean_job_time_ms={:.0} -> {}",
        output.report.scheduler,
        seed,
        output.report.jobs.len(),
        agg.pct_failed_jobs,
        agg.pct_failed_tasks,
        agg.mean_job_time_ms,
        out.join("report.json").display()
    );
    Ok(())
}

fn cmd_export(a: ExportArgs) -> Result<(), Failure> {
    require_file(&a.log)?;
    let records = pipeline::read_attempt_log(&a.log).map_err(anyhow::Error::from)?;
    let ds = export_dataset(&records, &a.run_id, DatasetFilter { kind: a.kind.map(Into::into) });
    ds.save(&a.out).map_err(anyhow::Error::from)?;
    println!(
        "rows={} finished={} failed={}",
        ds.len(),
        ds.count_label(Label::Finished),
        ds.count_label(Label::Failed)
    );
    Ok(())
}

fn cv_json(r: &CvReport) -> serde_json::Value {
    serde_json::to_value(r).expect("cv report serializes")
}

/// Cross-validates the requested kinds, trains the chosen one on the full dataset and
/// returns (model, per-kind CV reports, chosen kind).
fn train_one(ds: &Dataset, a: &TrainArgs) -> anyhow::Result<(mrsim::predictor::PredictiveModel, serde_json::Value)> {
    let hp = Hyperparams::default();
    let kinds: Vec<ModelKind> = if a.select_best.is_empty() { vec![a.kind] } else { a.select_best.clone() };
    let mut reports = Vec::new();
    for &k in &kinds {
        reports.push(cross_validate(ds, k, &hp, a.seed)?);
    }
    let best = reports
        .iter()
        .enumerate()
        .max_by(|(i, x), (j, y)| x.mean.accuracy.total_cmp(&y.mean.accuracy).then(j.cmp(i)))
        .map(|(i, _)| kinds[i])
        .ok_or_else(|| anyhow!("no model kind given"))?;
    let model = train(ds, best, &hp, a.seed)?;
    for r in &reports {
        println!(
            "  {:<8} rows={} accuracy={:.4} precision={:.4} recall={:.4} error={:.4}",
            r.kind.to_string(),
            r.rows,
            r.mean.accuracy,
            r.mean.precision,
            r.mean.recall,
            r.mean.error
        );
    }
    let cv = serde_json::json!({
        "selected": best,
        "candidates": reports.iter().map(cv_json).collect::<Vec<_>>(),
    });
    Ok((model, cv))
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = p.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    p.with_file_name(format!("{stem}.{suffix}{ext}"))
}

fn cmd_train(a: TrainArgs) -> Result<(), Failure> {
    require_file(&a.data)?;
    let ds = Dataset::load(&a.data).map_err(anyhow::Error::from)?;
    let out = a.out.clone().unwrap_or_else(|| out_dir(None, None).join("model.json"));
    let types: Vec<(Option<TaskKind>, &str)> = match a.task_type {
        Some(k) => vec![(Some(k.into()), "")],
        None => vec![(Some(TaskKind::Map), "map"), (Some(TaskKind::Reduce), "reduce")],
    };
    let mut cv_all = serde_json::Map::new();
    for (kind, suffix) in types {
        let sub = match kind {
            Some(k) => ds.filter_kind(k),
            None => ds.clone(),
        };
        let label = kind.map(|k| format!("{k:?}").to_uppercase()).unwrap_or_default();
        println!("{label}: {} rows", sub.len());
        let (model, cv) = train_one(&sub, &a).with_context(|| format!("training {label} model"))?;
        let path = if suffix.is_empty() { out.clone() } else { with_suffix(&out, suffix) };
        model.save(&path).map_err(anyhow::Error::from)?;
        println!("  selected {} -> {}", model.kind, path.display());
        cv_all.insert(label, cv);
    }
    let cv_path = with_suffix(&out, "cv");
    write(&cv_path, &serde_json::to_string_pretty(&serde_json::Value::Object(cv_all)).expect("json"))?;
    println!("cv report -> {}", cv_path.display());
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> Result<(), Failure> {
    let (scenario, cfg, horizon) = resolve_scenario(&a.scenario)?;
    let settings = cfg.as_ref().map(|c| c.settings.clone()).unwrap_or_default();
    let seeds = parse_seeds(&a.seeds)?;
    if a.schedulers.is_empty() {
        return Err(usage("no schedulers given"));
    }
    let models = if !a.schedulers.contains(&SchedulerKind::Atlas) {
        None
    } else if a.map_model.is_some() || settings.atlas.map_model.is_some() {
        Some(load_models(&settings, a.map_model, a.reduce_model)?)
    } else {
        let train_seeds = parse_seeds(&a.train_seeds)?;
        if train_seeds.iter().any(|s| seeds.contains(s)) {
            return Err(usage("training seeds overlap evaluation seeds"));
        }
        Some(
            pipeline::train_atlas_models(&scenario, &train_seeds, a.model_kind, &Hyperparams::default(), 0, horizon)
                .map_err(anyhow::Error::from)?,
        )
    };
    let (_, table) = pipeline::compare(&scenario, &a.schedulers, &seeds, &settings, models.as_ref(), horizon)
        .map_err(anyhow::Error::from)?;
    let out = out_dir(a.out, cfg.as_ref().and_then(|c| c.out_dir.as_deref()));
    write(&out.join("comparison.csv"), &table.to_csv())?;
    write(&out.join("comparison.json"), &table.to_json())?;
    for r in &table.rows {
        let d = |v: Option<f64>| v.map(|v| format!("{:+.1}%", 100.0 * v)).unwrap_or_else(|| "n/a".into());
        println!(
            "{:<16} failed_jobs={:6.2}% ({}) failed_tasks={:6.2}% ({}) mean_job_time_ms={:.0} ({})",
            r.scheduler,
            r.pct_failed_jobs,
            d(r.delta_pct_failed_jobs),
            r.pct_failed_tasks,
            d(r.delta_pct_failed_tasks),
            r.mean_job_time_ms,
            d(r.delta_mean_job_time)
        );
    }
    println!("table -> {}", out.join("comparison.csv").display());
    Ok(())
}
