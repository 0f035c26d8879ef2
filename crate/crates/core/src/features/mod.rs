//! Project feature vectors, text embeddings, PCA and PCA-dimension selection.
//!
//! Models never see the raw embedding: [`FeatureSpace`] keeps the structural
//! block (category, district, cost) as is and replaces the embedding block by
//! its PCA projection fitted on the training campaign.

mod embed;
mod pca;
mod schema;
mod select;

use serde::{Deserialize, Serialize};

pub use embed::{
    build_embedder, embed_all, CachedEmbedder, EmbedError, Embedder, Embedding, EmbeddingCache,
    EmbeddingConfig, HashingEmbedder, HttpEmbedder, DEFAULT_HASHING_DIM,
};
pub use pca::{fit_pca, PcaModel};
pub use schema::{build_features, FeatureSchema, FeatureVector, OTHER_LABEL};
pub use select::{select_pca_dim, DimSweep, SweepData, SweepRow};

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch { what: String, expected: usize, got: usize },
    #[error("project {project:?}: non-finite feature at index {index}")]
    NonFinite { project: String, index: usize },
    #[error("PCA dimension {dim} out of range 1..={max}")]
    DimOutOfRange { dim: usize, max: usize },
    #[error("PCA needs at least 2 samples, got {n}")]
    TooFewSamples { n: usize },
    #[error("training data has zero variance; PCA directions are undefined")]
    ZeroVariance,
    #[error("PCA dimension {dim}: {message}")]
    Sweep { dim: usize, message: String },
}

/// Schema plus PCA on the embedding block: the full input transform for the
/// classical models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpace {
    pub schema: FeatureSchema,
    pub pca: PcaModel,
}

impl FeatureSpace {
    /// Fits the embedding PCA on training vectors encoded with `schema`.
    pub fn fit(schema: FeatureSchema, train: &[FeatureVector], dim: usize) -> Result<Self, FeatureError> {
        let range = schema.embedding_range();
        let blocks: Vec<Vec<f64>> = train.iter().map(|v| v.values[range.clone()].to_vec()).collect();
        let pca = fit_pca(&blocks, dim)?;
        Ok(FeatureSpace { schema, pca })
    }

    pub fn with_dim(&self, dim: usize) -> FeatureSpace {
        FeatureSpace { schema: self.schema.clone(), pca: self.pca.truncated(dim) }
    }

    pub fn output_dim(&self) -> usize {
        self.schema.structural_len() + self.pca.dim()
    }

    pub fn transform(&self, v: &FeatureVector) -> Vec<f64> {
        let split = self.schema.structural_len();
        let mut out = v.values[..split].to_vec();
        out.extend(self.pca.transform(&v.values[split..]));
        out
    }

    pub fn transform_all(&self, vs: &[FeatureVector]) -> Vec<Vec<f64>> {
        vs.iter().map(|v| self.transform(v)).collect()
    }
}

/// Embeddings of every project description, in project order.
pub fn embed_descriptions(
    campaign: &crate::data::Campaign,
    embedder: &dyn Embedder,
    max_in_flight: usize,
) -> Result<Vec<Embedding>, EmbedError> {
    let texts: Vec<&str> = campaign.projects.iter().map(|p| p.description.as_str()).collect();
    embed_all(embedder, &texts, max_in_flight)
}

/// Embeds and encodes a whole campaign under `schema`.
pub fn encode_campaign(
    campaign: &crate::data::Campaign,
    schema: &FeatureSchema,
    embedder: &dyn Embedder,
    max_in_flight: usize,
) -> Result<Vec<FeatureVector>, FeatureError> {
    let embeddings = embed_descriptions(campaign, embedder, max_in_flight)?;
    build_features(campaign, schema, &embeddings)
}
