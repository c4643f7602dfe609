//! Trainable failure classifiers and their on-disk format.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::dataset::Dataset;
use crate::predictor::features::{schema_fingerprint, FeatureVector, MODEL_FEATURES, N_FEATURES};
use crate::predictor::glm::{GlmParams, LogisticModel};
use crate::predictor::metrics::{Confusion, EvalMetrics};
use crate::predictor::tree::{DecisionTree, MaxFeatures, TrainData, TreeParams};
use crate::rng::{derive_seed, stream, stream_rng};
use crate::workload::TaskKind;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Tree,
    Forest,
    Glm,
    #[serde(rename = "neural_network")]
    NeuralNetwork,
    Boost,
    Ctree,
}

impl ModelKind {
    pub const IMPLEMENTED: [ModelKind; 3] = [ModelKind::Tree, ModelKind::Forest, ModelKind::Glm];

    pub fn is_implemented(self) -> bool {
        Self::IMPLEMENTED.contains(&self)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tree" => Ok(ModelKind::Tree),
            "forest" | "random_forest" | "rf" => Ok(ModelKind::Forest),
            "glm" | "logistic" => Ok(ModelKind::Glm),
            "neural_network" | "nn" => Ok(ModelKind::NeuralNetwork),
            "boost" => Ok(ModelKind::Boost),
            "ctree" => Ok(ModelKind::Ctree),
            other => Err(Error::Invalid(format!("unknown model kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).expect("serializable");
        write!(f, "{}", s.as_str().unwrap_or("?"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestParams {
    #[serde(default = "default_trees")]
    pub trees: usize,
    #[serde(default = "yes")]
    pub bootstrap: bool,
    #[serde(default = "sqrt")]
    pub max_features: MaxFeatures,
}

fn default_trees() -> usize {
    50
}
fn yes() -> bool {
    true
}
fn sqrt() -> MaxFeatures {
    MaxFeatures::Sqrt
}
fn default_threshold() -> f64 {
    0.5
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            trees: default_trees(),
            bootstrap: true,
            max_features: MaxFeatures::Sqrt,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    #[serde(default)]
    pub tree: TreeParams,
    #[serde(default)]
    pub forest: ForestParams,
    #[serde(default)]
    pub glm: GlmParams,
    /// FAIL is predicted when P(FAILED) is strictly above this.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Inverse-frequency example weights.
    #[serde(default = "yes")]
    pub class_weighting: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            tree: TreeParams::default(),
            forest: ForestParams::default(),
            glm: GlmParams::default(),
            threshold: default_threshold(),
            class_weighting: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelParams {
    Tree { tree: DecisionTree },
    Forest { trees: Vec<DecisionTree> },
    Glm { glm: LogisticModel },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub fail: bool,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveModel {
    pub format_version: u32,
    pub kind: ModelKind,
    #[serde(default)]
    pub task_type: Option<TaskKind>,
    pub hyperparams: Hyperparams,
    pub schema_fingerprint: String,
    pub features: Vec<String>,
    pub threshold: f64,
    pub params: ModelParams,
}

/// Per-example weights; with class weighting each class carries half the total mass.
pub fn class_weights(y: &[bool], enabled: bool) -> Vec<f64> {
    let n = y.len() as f64;
    let pos = y.iter().filter(|&&v| v).count() as f64;
    let neg = n - pos;
    y.iter()
        .map(|&v| match (enabled, v) {
            (false, _) => 1.0,
            (true, true) => n / (2.0 * pos),
            (true, false) => n / (2.0 * neg),
        })
        .collect()
}

fn forest_tree(data: &TrainData, n: usize, hp: &Hyperparams, seed: u64, i: usize) -> DecisionTree {
    let mut rng = stream_rng(seed, &[stream::TRAIN, i as u64]);
    let idx: Vec<usize> = if hp.forest.bootstrap {
        let mut b = stream_rng(seed, &[stream::TRAIN, i as u64, 1]);
        (0..n).map(|_| b.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let params = TreeParams {
        max_features: hp.forest.max_features,
        ..hp.tree
    };
    DecisionTree::fit(data, idx, &params, &mut rng)
}

/// Fits a model of `kind` on raw inputs. Both labels must be present.
pub fn train_matrix(x: &[[f64; N_FEATURES]], y: &[bool], kind: ModelKind, hp: &Hyperparams, seed: u64) -> Result<PredictiveModel> {
    if !kind.is_implemented() {
        return Err(Error::UnimplementedModel(kind.to_string()));
    }
    if x.is_empty() || y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(Error::SingleClassDataset);
    }
    let w = class_weights(y, hp.class_weighting);
    let n = x.len();
    let params = match kind {
        ModelKind::Tree => {
            let data = TrainData::new(x, y, &w);
            let mut rng = stream_rng(seed, &[stream::TRAIN, 0]);
            ModelParams::Tree {
                tree: DecisionTree::fit(&data, (0..n).collect(), &hp.tree, &mut rng),
            }
        }
        ModelKind::Forest => {
            let data = TrainData::new(x, y, &w);
            let trees = (0..hp.forest.trees.max(1))
                .into_par_iter()
                .map(|i| forest_tree(&data, n, hp, seed, i))
                .collect();
            ModelParams::Forest { trees }
        }
        ModelKind::Glm => {
            let rows: Vec<Vec<f64>> = x.iter().map(|r| r.to_vec()).collect();
            ModelParams::Glm {
                glm: LogisticModel::fit(&rows, y, &w, &hp.glm),
            }
        }
        _ => unreachable!("checked above"),
    };
    Ok(PredictiveModel {
        format_version: MODEL_FORMAT_VERSION,
        kind,
        task_type: None,
        hyperparams: *hp,
        schema_fingerprint: schema_fingerprint(),
        features: MODEL_FEATURES.iter().map(|s| s.to_string()).collect(),
        threshold: hp.threshold,
        params,
    })
}

pub fn train(dataset: &Dataset, kind: ModelKind, hp: &Hyperparams, seed: u64) -> Result<PredictiveModel> {
    let expected: Vec<String> = crate::predictor::features::CSV_COLUMNS.iter().map(|s| s.to_string()).collect();
    if dataset.schema != expected {
        return Err(Error::SchemaMismatch {
            expected: expected.join(","),
            found: dataset.schema.join(","),
        });
    }
    let (x, y) = dataset.to_matrix()?;
    let mut model = train_matrix(&x, &y, kind, hp, seed)?;
    let kinds: std::collections::BTreeSet<_> = dataset.rows.iter().map(|r| r.task_type).collect();
    if kinds.len() == 1 {
        model.task_type = kinds.into_iter().next();
    }
    Ok(model)
}

impl PredictiveModel {
    /// P(FAILED) for a raw model input.
    pub fn probability(&self, x: &[f64]) -> f64 {
        match &self.params {
            ModelParams::Tree { tree } => tree.predict_proba(x),
            ModelParams::Forest { trees } => trees.iter().map(|t| t.predict_proba(x)).sum::<f64>() / trees.len() as f64,
            ModelParams::Glm { glm } => glm.predict_proba(x),
        }
    }

    pub fn classify(&self, x: &[f64]) -> Prediction {
        let probability = self.probability(x);
        Prediction {
            fail: probability > self.threshold,
            probability,
        }
    }

    pub fn predict(&self, fv: &FeatureVector) -> Result<Prediction> {
        let current = schema_fingerprint();
        if self.schema_fingerprint != current {
            return Err(Error::SchemaMismatch {
                expected: self.schema_fingerprint.clone(),
                found: current,
            });
        }
        Ok(self.classify(&fv.to_input()))
    }

    pub fn evaluate(&self, x: &[[f64; N_FEATURES]], y: &[bool]) -> EvalMetrics {
        EvalMetrics::from_confusion(Confusion::from_pairs(x.iter().zip(y).map(|(r, &l)| (self.classify(r).fail, l))))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<PredictiveModel> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: PredictiveModel = serde_json::from_str(&text).map_err(|e| Error::config(path, e.to_string()))?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::config(path, format!("unsupported model format version {}", m.format_version)));
        }
        if m.schema_fingerprint != schema_fingerprint() {
            return Err(Error::SchemaMismatch {
                expected: schema_fingerprint(),
                found: m.schema_fingerprint,
            });
        }
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub kind: ModelKind,
    pub rows: usize,
    pub fold_sizes: Vec<usize>,
    pub folds: Vec<EvalMetrics>,
    pub mean: EvalMetrics,
}

/// Random permutation split into `k` folds; the first `n % k` folds get one extra row.
pub fn fold_partition<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let (base, extra) = (n / k, n % k);
    let mut out = Vec::with_capacity(k);
    let mut at = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        out.push(perm[at..at + size].to_vec());
        at += size;
    }
    out
}

pub const CV_FOLDS: usize = 10;

/// 10-fold cross validation; folds are trained in parallel and merged in fold order.
pub fn cross_validate(dataset: &Dataset, kind: ModelKind, hp: &Hyperparams, seed: u64) -> Result<CvReport> {
    let (x, y) = dataset.to_matrix()?;
    cross_validate_matrix(&x, &y, kind, hp, seed)
}

pub fn cross_validate_matrix(x: &[[f64; N_FEATURES]], y: &[bool], kind: ModelKind, hp: &Hyperparams, seed: u64) -> Result<CvReport> {
    if !kind.is_implemented() {
        return Err(Error::UnimplementedModel(kind.to_string()));
    }
    let n = x.len();
    if n < CV_FOLDS {
        return Err(Error::InsufficientRows { rows: n, needed: CV_FOLDS });
    }
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(Error::SingleClassDataset);
    }
    let folds = fold_partition(n, CV_FOLDS, &mut stream_rng(seed, &[stream::CV]));
    let mut in_fold = vec![0usize; n];
    for (f, idx) in folds.iter().enumerate() {
        for &i in idx {
            in_fold[i] = f;
        }
    }
    let results: Result<Vec<EvalMetrics>> = (0..CV_FOLDS)
        .into_par_iter()
        .map(|f| {
            let train_idx: Vec<usize> = (0..n).filter(|&i| in_fold[i] != f).collect();
            let tx: Vec<[f64; N_FEATURES]> = train_idx.iter().map(|&i| x[i]).collect();
            let ty: Vec<bool> = train_idx.iter().map(|&i| y[i]).collect();
            let model = train_matrix(&tx, &ty, kind, hp, derive_seed(seed, &[f as u64]))?;
            let vx: Vec<[f64; N_FEATURES]> = folds[f].iter().map(|&i| x[i]).collect();
            let vy: Vec<bool> = folds[f].iter().map(|&i| y[i]).collect();
            Ok(model.evaluate(&vx, &vy))
        })
        .collect();
    let folds_m = results?;
    Ok(CvReport {
        kind,
        rows: n,
        fold_sizes: folds.iter().map(Vec::len).collect(),
        mean: EvalMetrics::mean(&folds_m),
        folds: folds_m,
    })
}
