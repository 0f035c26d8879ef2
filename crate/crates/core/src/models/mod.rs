//! Classical baselines: the probabilistic voting model and KNN vote averaging,
//! plus a frozen, serializable form bundling either with its feature space.

mod knn;
mod pvm;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Campaign, ModelId};
use crate::features::{EmbeddingConfig, FeatureError, FeatureSchema, FeatureSpace, FeatureVector};

pub use knn::{predict_knn, KnnModel, DEFAULT_K};
pub use pvm::{
    fit_pvm, gradient, log_likelihood, predict_pvm, pvm_probabilities, scores, softmax,
    FitDiagnostics, PvmConfig, PvmModel,
};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("feature row {row}: expected dimension {expected}, got {got}")]
    DimensionMismatch { row: usize, expected: usize, got: usize },
    #[error("feature row {row} contains a non-finite value")]
    NonFinite { row: usize },
    #[error("{features} feature rows but {votes} vote counts")]
    LengthMismatch { features: usize, votes: usize },
    #[error("need at least 2 training projects, got {n}")]
    TooFewProjects { n: usize },
    #[error("vote counts must be finite and non-negative")]
    NegativeVotes,
    #[error("training votes are all zero")]
    NoVotes,
    #[error("log-likelihood became NaN at iteration {iteration}")]
    NanObjective { iteration: usize },
    #[error("total votes must be positive, got {0}")]
    NonPositiveTotal(f64),
    #[error("k = {k} must lie in 1..={n}")]
    InvalidK { k: usize, n: usize },
    #[error("campaign {0:?} lacks ground-truth votes")]
    MissingVotes(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("model file {path}: {message}")]
    File { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Pvm,
    Knn,
}

impl ModelKind {
    pub fn model_id(self) -> ModelId {
        match self {
            ModelKind::Pvm => ModelId::Pvm,
            ModelKind::Knn => ModelId::Knn,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.model_id().as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "pvm" => Ok(ModelKind::Pvm),
            "knn" => Ok(ModelKind::Knn),
            other => Err(format!("not a classical model: {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassicalOptions {
    pub pvm: PvmConfig,
    /// KNN neighbour count; `None` uses [`DEFAULT_K`].
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Predictor {
    Pvm(PvmModel),
    Knn(KnnModel),
}

/// A fitted classical model with everything needed to score new projects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalModel {
    pub train_campaign: String,
    pub embedding: EmbeddingConfig,
    pub space: FeatureSpace,
    pub schema_hash: String,
    pub predictor: Predictor,
}

impl ClassicalModel {
    pub fn kind(&self) -> ModelKind {
        match self.predictor {
            Predictor::Pvm(_) => ModelKind::Pvm,
            Predictor::Knn(_) => ModelKind::Knn,
        }
    }

    pub fn pca_dim(&self) -> usize {
        self.space.pca.dim()
    }

    /// Predicted votes for encoded projects. `total_votes` is the evaluated
    /// campaign's `T`; only the PVM uses it.
    pub fn predict(&self, features: &[FeatureVector], total_votes: f64) -> Result<Vec<f64>, ModelError> {
        let x = self.space.transform_all(features);
        match &self.predictor {
            Predictor::Pvm(m) => predict_pvm(m, &x, total_votes),
            Predictor::Knn(m) => Ok(predict_knn(m, &x)),
        }
    }

    /// Prediction for one extra project scored alongside a campaign. The PVM
    /// normalizes over the campaign plus the extra project.
    pub fn predict_extra(
        &self,
        campaign_features: &[FeatureVector],
        extra: &FeatureVector,
        total_votes: f64,
    ) -> Result<f64, ModelError> {
        let mut all = campaign_features.to_vec();
        all.push(extra.clone());
        let predictions = self.predict(&all, total_votes)?;
        Ok(*predictions.last().expect("non-empty"))
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let err = |message: String| ModelError::File { path: path.display().to_string(), message };
        let json = serde_json::to_string_pretty(self).map_err(|e| err(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let err = |message: String| ModelError::File { path: path.display().to_string(), message };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }
}

/// Fits the feature space (PCA of dimension `dim` on the embedding block) and
/// the chosen model on a training campaign.
pub fn train_classical(
    kind: ModelKind,
    train: &Campaign,
    train_features: &[FeatureVector],
    schema: FeatureSchema,
    embedding: EmbeddingConfig,
    dim: usize,
    options: &ClassicalOptions,
) -> Result<ClassicalModel, ModelError> {
    let space = FeatureSpace::fit(schema, train_features, dim)?;
    fit_on_space(kind, train, train_features, space, embedding, options)
}

/// Like [`train_classical`] with an already-fitted feature space.
pub fn fit_on_space(
    kind: ModelKind,
    train: &Campaign,
    train_features: &[FeatureVector],
    space: FeatureSpace,
    embedding: EmbeddingConfig,
    options: &ClassicalOptions,
) -> Result<ClassicalModel, ModelError> {
    let votes = train.real_votes().ok_or_else(|| ModelError::MissingVotes(train.id()))?;
    let x = space.transform_all(train_features);
    let predictor = match kind {
        ModelKind::Pvm => Predictor::Pvm(fit_pvm(&x, &votes, &options.pvm)?),
        ModelKind::Knn => Predictor::Knn(KnnModel::new(x, votes, options.k.unwrap_or(DEFAULT_K))?),
    };
    Ok(ClassicalModel {
        train_campaign: train.id(),
        embedding,
        schema_hash: space.schema.hash(),
        space,
        predictor,
    })
}
