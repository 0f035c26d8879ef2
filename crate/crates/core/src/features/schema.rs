use std::collections::BTreeSet;

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::embed::Embedding;
use super::FeatureError;
use crate::data::{Campaign, Project};

/// Label slot for categories and districts not seen in training.
pub const OTHER_LABEL: &str = "__other__";

/// Frozen encoding of projects into dense vectors:
/// `[one-hot category | one-hot district | z-scored cost | embedding]`.
///
/// Both vocabularies end with [`OTHER_LABEL`], so their lengths include the
/// fallback slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub categories: Vec<String>,
    pub districts: Vec<String>,
    pub cost_mean: f64,
    pub cost_std: f64,
    pub embedding_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub project_id: String,
    pub values: Vec<f64>,
}

impl FeatureSchema {
    /// Fits vocabularies (sorted) and cost statistics on a training campaign.
    pub fn fit(train: &Campaign, embedding_dim: usize) -> Self {
        let vocab = |f: fn(&Project) -> &str| -> Vec<String> {
            let mut v: Vec<String> = train
                .projects
                .iter()
                .map(|p| f(p).to_string())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            v.push(OTHER_LABEL.to_string());
            v
        };
        let costs: Vec<f64> = train.projects.iter().map(|p| p.cost.as_major_f64()).collect();
        let n = costs.len().max(1) as f64;
        let mean = costs.iter().sum::<f64>() / n;
        let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        FeatureSchema {
            categories: vocab(|p| &p.category),
            districts: vocab(|p| &p.district),
            cost_mean: mean,
            cost_std: if std > 0.0 { std } else { 1.0 },
            embedding_dim,
        }
    }

    pub fn structural_len(&self) -> usize {
        self.categories.len() + self.districts.len() + 1
    }

    pub fn len(&self) -> usize {
        self.structural_len() + self.embedding_dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Range of the embedding block within a full vector.
    pub fn embedding_range(&self) -> std::ops::Range<usize> {
        self.structural_len()..self.len()
    }

    /// Stable fingerprint, stored alongside frozen models.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    fn slot(vocab: &[String], label: &str, kind: &str, project: &str) -> usize {
        match vocab[..vocab.len() - 1].binary_search_by(|v| v.as_str().cmp(label)) {
            Ok(i) => i,
            Err(_) => {
                warn!("project {project:?}: unseen {kind} {label:?} mapped to the other slot");
                vocab.len() - 1
            }
        }
    }

    /// Encodes one project. Unseen labels go to the `other` slot.
    pub fn encode(&self, project: &Project, embedding: &[f64]) -> Result<FeatureVector, FeatureError> {
        if embedding.len() != self.embedding_dim {
            return Err(FeatureError::LengthMismatch {
                what: format!("embedding of project {:?}", project.id),
                expected: self.embedding_dim,
                got: embedding.len(),
            });
        }
        let mut values = vec![0.0; self.len()];
        values[Self::slot(&self.categories, &project.category, "category", &project.id)] = 1.0;
        let off = self.categories.len();
        values[off + Self::slot(&self.districts, &project.district, "district", &project.id)] = 1.0;
        let cost_idx = off + self.districts.len();
        values[cost_idx] = (project.cost.as_major_f64() - self.cost_mean) / self.cost_std;
        values[cost_idx + 1..].copy_from_slice(embedding);
        if let Some(bad) = values.iter().position(|x| !x.is_finite()) {
            return Err(FeatureError::NonFinite { project: project.id.clone(), index: bad });
        }
        Ok(FeatureVector { project_id: project.id.clone(), values })
    }
}

/// Encodes every project of `campaign`; `embeddings` is aligned with
/// `campaign.projects`.
pub fn build_features(
    campaign: &Campaign,
    schema: &FeatureSchema,
    embeddings: &[Embedding],
) -> Result<Vec<FeatureVector>, FeatureError> {
    if embeddings.len() != campaign.projects.len() {
        return Err(FeatureError::LengthMismatch {
            what: "embedding table".into(),
            expected: campaign.projects.len(),
            got: embeddings.len(),
        });
    }
    campaign
        .projects
        .iter()
        .zip(embeddings)
        .map(|(p, e)| schema.encode(p, e))
        .collect()
}
