use serde::{Deserialize, Serialize};

use crate::features::Embedding;

/// A past project picked as context, by index into the past campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Retrieved {
    pub index: usize,
    pub similarity: f64,
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// The `m` past projects whose description embeddings are most cosine-similar
/// to `query`, most similar first. Equal similarities keep past-campaign order.
pub fn retrieve_similar(query: &[f64], past: &[Embedding], m: usize) -> Vec<Retrieved> {
    if m > past.len() {
        log::info!("requested {m} similar projects but the past campaign has {}; returning all", past.len());
    }
    let mut scored: Vec<Retrieved> = past
        .iter()
        .enumerate()
        .map(|(index, e)| Retrieved { index, similarity: cosine(query, e) })
        .collect();
    scored.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then(a.index.cmp(&b.index)));
    scored.truncate(m);
    scored
}
