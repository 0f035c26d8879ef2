use serde::{Deserialize, Serialize};

use super::ModelError;

/// Neighbour count used for every campaign.
pub const DEFAULT_K: usize = 5;

/// Predicts a project's votes as the mean votes of its `k` nearest training
/// projects (Euclidean). Equal distances are broken by training index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    train: Vec<Vec<f64>>,
    votes: Vec<f64>,
    k: usize,
}

impl KnnModel {
    pub fn new(train: Vec<Vec<f64>>, votes: Vec<f64>, k: usize) -> Result<Self, ModelError> {
        if train.len() != votes.len() {
            return Err(ModelError::LengthMismatch { features: train.len(), votes: votes.len() });
        }
        if k == 0 || k > train.len() {
            return Err(ModelError::InvalidK { k, n: train.len() });
        }
        if let Some(dim) = train.first().map(Vec::len) {
            for (i, row) in train.iter().enumerate() {
                if row.len() != dim {
                    return Err(ModelError::DimensionMismatch { row: i, expected: dim, got: row.len() });
                }
                if row.iter().any(|x| !x.is_finite()) {
                    return Err(ModelError::NonFinite { row: i });
                }
            }
        }
        Ok(KnnModel { train, votes, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn train_votes(&self) -> &[f64] {
        &self.votes
    }

    /// Indices of the `k` nearest training rows, nearest first.
    pub fn neighbors(&self, query: &[f64]) -> Vec<usize> {
        let mut dist: Vec<(f64, usize)> = self
            .train
            .iter()
            .enumerate()
            .map(|(i, row)| (row.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        dist.into_iter().take(self.k).map(|(_, i)| i).collect()
    }

    pub fn predict_one(&self, query: &[f64]) -> f64 {
        let nb = self.neighbors(query);
        nb.iter().map(|&i| self.votes[i]).sum::<f64>() / nb.len() as f64
    }
}

pub fn predict_knn(model: &KnnModel, features: &[Vec<f64>]) -> Vec<f64> {
    features.iter().map(|q| model.predict_one(q)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(k: usize) -> KnnModel {
        KnnModel::new(
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![10.0, 10.0]],
            vec![10.0, 20.0, 60.0],
            k,
        )
        .unwrap()
    }

    #[test]
    fn self_query_with_k1_returns_exact_votes() {
        let m = model(1);
        assert_eq!(predict_knn(&m, &[vec![1.0, 0.0], vec![10.0, 10.0]]), vec![20.0, 60.0]);
    }

    #[test]
    fn k_equals_n_gives_mean() {
        let m = model(3);
        assert_eq!(m.predict_one(&[100.0, -4.0]), 30.0);
    }

    #[test]
    fn hand_constructed_geometry() {
        // Query sits between the first two points, far from the third.
        assert_eq!(model(2).predict_one(&[0.5, 0.1]), 15.0);
    }

    #[test]
    fn distance_ties_break_by_index() {
        let m = KnnModel::new(vec![vec![1.0], vec![-1.0], vec![3.0]], vec![1.0, 2.0, 3.0], 1).unwrap();
        assert_eq!(m.neighbors(&[0.0]), vec![0]);
    }

    #[test]
    fn invalid_k() {
        assert!(matches!(
            KnnModel::new(vec![vec![0.0]], vec![1.0], 2),
            Err(ModelError::InvalidK { k: 2, n: 1 })
        ));
        assert!(KnnModel::new(vec![vec![0.0]], vec![1.0], 0).is_err());
    }
}
