//! Failure prediction: feature schema, datasets, models and cross validation.

pub mod dataset;
pub mod features;
pub mod glm;
pub mod metrics;
pub mod model;
pub mod tree;

pub use dataset::{export_dataset, label_for, Dataset, DatasetFilter, Provenance};
pub use features::{extract_features, schema_fingerprint, ExecutionType, FeatureVector, Label, CSV_COLUMNS, MODEL_FEATURES, N_FEATURES};
pub use glm::{log_loss_and_gradient, GlmParams, LogisticModel};
pub use metrics::{Confusion, EvalMetrics};
pub use model::{
    class_weights, cross_validate, cross_validate_matrix, fold_partition, train, train_matrix, CvReport, ForestParams,
    Hyperparams, ModelKind, ModelParams, Prediction, PredictiveModel, CV_FOLDS,
};
pub use tree::{DecisionTree, MaxFeatures, TreeNode, TreeParams};

use crate::error::Result;

/// Anything that can classify a feature vector as likely to fail.
pub trait FailurePredictor: Send + Sync {
    fn predict(&self, fv: &FeatureVector) -> Result<Prediction>;
}

impl FailurePredictor for PredictiveModel {
    fn predict(&self, fv: &FeatureVector) -> Result<Prediction> {
        PredictiveModel::predict(self, fv)
    }
}

/// Always returns the same answer.
#[derive(Clone, Copy, Debug)]
pub struct ConstantPredictor {
    pub fail: bool,
}

impl ConstantPredictor {
    pub const SUCCEED: ConstantPredictor = ConstantPredictor { fail: false };
    pub const FAIL: ConstantPredictor = ConstantPredictor { fail: true };
}

impl FailurePredictor for ConstantPredictor {
    fn predict(&self, _fv: &FeatureVector) -> Result<Prediction> {
        Ok(Prediction {
            fail: self.fail,
            probability: if self.fail { 1.0 } else { 0.0 },
        })
    }
}
