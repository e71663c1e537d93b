//! Classical classifiers behind one fit/predict contract.
//!
//! Features are dense `f32` rows (flattened images scaled to `[0, 1]`),
//! labels are `0..K`. Everything is deterministic given `ModelSpec::seed`.

mod knn;
mod linear;
mod naive_bayes;
mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Features;

pub use knn::{Knn, Weights};
pub use linear::{LinearConfig, LinearModel, Loss, Penalty};
pub use naive_bayes::GaussianNb;
pub use tree::{Criterion, DecisionTree, RandomForest, Splitter};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("{rows} feature rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("class {0} has no training samples")]
    EmptyClass(u8),
    #[error("non-finite feature at row {row}, column {col}")]
    NonFiniteFeature { row: usize, col: usize },
    #[error("model expects {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{0} does not provide probabilities")]
    Unsupported(&'static str),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("model file: {0}")]
    Io(String),
}

/// Which classifier to fit, with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ModelKind {
    DecisionTree {
        criterion: Criterion,
        max_depth: usize,
        splitter: Splitter,
    },
    RandomForest {
        criterion: Criterion,
        max_depth: usize,
        n_trees: usize,
    },
    KNeighbors {
        k: usize,
        weights: Weights,
        /// Minkowski exponent, 1 or 2.
        p: u8,
    },
    /// Uniform class priors.
    GaussianNb,
    LinearSgd(LinearConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub kind: ModelKind,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        ModelSpec { kind, seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn decision_tree(criterion: Criterion, max_depth: usize, splitter: Splitter) -> Self {
        Self::new(ModelKind::DecisionTree {
            criterion,
            max_depth,
            splitter,
        })
    }

    pub fn random_forest(criterion: Criterion, max_depth: usize, n_trees: usize) -> Self {
        Self::new(ModelKind::RandomForest {
            criterion,
            max_depth,
            n_trees,
        })
    }

    pub fn knn(k: usize, weights: Weights, p: u8) -> Self {
        Self::new(ModelKind::KNeighbors { k, weights, p })
    }

    pub fn gaussian_nb() -> Self {
        Self::new(ModelKind::GaussianNb)
    }

    pub fn linear(config: LinearConfig) -> Self {
        Self::new(ModelKind::LinearSgd(config))
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidSpec(m.to_string()));
        match &self.kind {
            ModelKind::DecisionTree { max_depth, .. } if *max_depth < 1 => bad("max_depth must be >= 1"),
            ModelKind::RandomForest { max_depth, n_trees, .. } if *max_depth < 1 || *n_trees < 1 => {
                bad("max_depth and n_trees must be >= 1")
            }
            ModelKind::KNeighbors { k, p, .. } if *k < 1 || !(*p == 1 || *p == 2) => bad("k >= 1 and p in {1, 2}"),
            ModelKind::LinearSgd(c) => c.validate(),
            _ => Ok(()),
        }
    }
}

/// A fitted model. Immutable; prediction is a pure function of model and input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params")]
pub enum TrainedModel {
    DecisionTree(DecisionTree),
    RandomForest(RandomForest),
    KNeighbors(Knn),
    GaussianNb(GaussianNb),
    LinearSgd(LinearModel),
}

/// Checks shapes and labels; returns the number of classes.
fn check_training_data(x: &Features, y: &[u8]) -> Result<usize, ClassifierError> {
    if x.rows != y.len() {
        return Err(ClassifierError::LengthMismatch {
            rows: x.rows,
            labels: y.len(),
        });
    }
    if y.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    if let Some(pos) = x.data.iter().position(|v| !v.is_finite()) {
        return Err(ClassifierError::NonFiniteFeature {
            row: pos / x.cols.max(1),
            col: pos % x.cols.max(1),
        });
    }
    let k = *y.iter().max().expect("nonempty") as usize + 1;
    let mut seen = vec![false; k];
    for &l in y {
        seen[l as usize] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(ClassifierError::EmptyClass(missing as u8));
    }
    Ok(k)
}

/// Fits the model `spec` describes on `x`, `y`.
pub fn fit(spec: &ModelSpec, x: &Features, y: &[u8]) -> Result<TrainedModel, ClassifierError> {
    spec.validate()?;
    let k = check_training_data(x, y)?;
    Ok(match &spec.kind {
        ModelKind::DecisionTree {
            criterion,
            max_depth,
            splitter,
        } => TrainedModel::DecisionTree(DecisionTree::fit(x, y, k, *criterion, *max_depth, *splitter, spec.seed)),
        ModelKind::RandomForest {
            criterion,
            max_depth,
            n_trees,
        } => TrainedModel::RandomForest(RandomForest::fit(x, y, k, *criterion, *max_depth, *n_trees, spec.seed)),
        ModelKind::KNeighbors { k: nn, weights, p } => {
            TrainedModel::KNeighbors(Knn::fit(x, y, k, *nn, *weights, *p))
        }
        ModelKind::GaussianNb => TrainedModel::GaussianNb(GaussianNb::fit(x, y, k)),
        ModelKind::LinearSgd(cfg) => TrainedModel::LinearSgd(LinearModel::fit(x, y, k, cfg, spec.seed)),
    })
}

impl TrainedModel {
    pub fn n_features(&self) -> usize {
        match self {
            TrainedModel::DecisionTree(m) => m.n_features,
            TrainedModel::RandomForest(m) => m.n_features,
            TrainedModel::KNeighbors(m) => m.n_features(),
            TrainedModel::GaussianNb(m) => m.n_features(),
            TrainedModel::LinearSgd(m) => m.n_features(),
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            TrainedModel::DecisionTree(m) => m.n_classes,
            TrainedModel::RandomForest(m) => m.n_classes,
            TrainedModel::KNeighbors(m) => m.n_classes,
            TrainedModel::GaussianNb(m) => m.n_classes(),
            TrainedModel::LinearSgd(m) => m.n_classes(),
        }
    }

    fn check_dims(&self, x: &Features) -> Result<(), ClassifierError> {
        if x.cols != self.n_features() {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.n_features(),
                got: x.cols,
            });
        }
        Ok(())
    }

    pub fn predict(&self, x: &Features) -> Result<Vec<u8>, ClassifierError> {
        self.check_dims(x)?;
        Ok(match self {
            TrainedModel::DecisionTree(m) => (0..x.rows).map(|i| m.predict_row(x.row(i))).collect(),
            TrainedModel::RandomForest(m) => (0..x.rows).map(|i| m.predict_row(x.row(i))).collect(),
            TrainedModel::KNeighbors(m) => m.predict(x),
            TrainedModel::GaussianNb(m) => (0..x.rows).map(|i| argmax(&m.proba_row(x.row(i)))).collect(),
            TrainedModel::LinearSgd(m) => (0..x.rows).map(|i| m.predict_row(x.row(i))).collect(),
        })
    }

    /// Class probabilities, one row per sample.
    pub fn predict_proba(&self, x: &Features) -> Result<Vec<Vec<f64>>, ClassifierError> {
        self.check_dims(x)?;
        match self {
            TrainedModel::RandomForest(m) => Ok((0..x.rows).map(|i| m.proba_row(x.row(i))).collect()),
            TrainedModel::GaussianNb(m) => Ok((0..x.rows).map(|i| m.proba_row(x.row(i))).collect()),
            TrainedModel::LinearSgd(m) if m.config.loss == Loss::Log => {
                Ok((0..x.rows).map(|i| m.proba_row(x.row(i))).collect())
            }
            TrainedModel::LinearSgd(_) => Err(ClassifierError::Unsupported("a non-log-loss linear model")),
            TrainedModel::DecisionTree(_) => Err(ClassifierError::Unsupported("a single decision tree")),
            TrainedModel::KNeighbors(_) => Err(ClassifierError::Unsupported("k-nearest neighbours")),
        }
    }

    /// Versioned JSON container holding the spec and the parameters.
    pub fn save(&self, spec: &ModelSpec, path: &Path) -> Result<(), ClassifierError> {
        let saved = SavedModel {
            format_version: MODEL_FORMAT_VERSION,
            spec: spec.clone(),
            model: self.clone(),
        };
        let json = serde_json::to_vec(&saved).map_err(|e| ClassifierError::Io(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| ClassifierError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<(ModelSpec, TrainedModel), ClassifierError> {
        let bytes = std::fs::read(path).map_err(|e| ClassifierError::Io(format!("{}: {e}", path.display())))?;
        let saved: SavedModel = serde_json::from_slice(&bytes).map_err(|e| ClassifierError::Io(e.to_string()))?;
        if saved.format_version != MODEL_FORMAT_VERSION {
            return Err(ClassifierError::Io(format!(
                "unsupported model format version {}",
                saved.format_version
            )));
        }
        Ok((saved.spec, saved.model))
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SavedModel {
    format_version: u32,
    spec: ModelSpec,
    model: TrainedModel,
}

/// Index of the first maximum.
pub(crate) fn argmax(v: &[f64]) -> u8 {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best as u8
}

/// Smallest class among those with the most votes.
pub(crate) fn vote<I: IntoIterator<Item = u8>>(votes: I, k: usize) -> u8 {
    let mut counts = vec![0usize; k];
    for v in votes {
        counts[v as usize] += 1;
    }
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best as u8
}

#[cfg(test)]
pub(crate) mod testdata {
    use super::*;
    use crate::seed;
    use rand::Rng;

    /// Two Gaussian-ish clouds per class around distinct centers.
    pub fn blobs(n_per_class: usize, k: usize, dim: usize, spread: f32, seed_: u64) -> (Features, Vec<u8>) {
        let mut rng = seed::rng(seed_);
        let centers: Vec<Vec<f32>> = (0..k)
            .map(|_| (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let mut data = Vec::new();
        let mut y = Vec::new();
        for i in 0..n_per_class * k {
            let c = i % k;
            for d in 0..dim {
                data.push(centers[c][d] + rng.gen_range(-spread..spread));
            }
            y.push(c as u8);
        }
        (Features::new(n_per_class * k, dim, data), y)
    }

    pub fn accuracy(pred: &[u8], y: &[u8]) -> f64 {
        pred.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
    }
}
