use std::cmp::Ordering;
use std::collections::HashSet;

use super::MetricError;
use crate::data::{Campaign, Money};

/// Secondary ordering for tied scores: cheaper first, then by project id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TieBreak {
    pub costs: Vec<Money>,
    pub ids: Vec<String>,
}

impl TieBreak {
    pub fn from_campaign(c: &Campaign) -> Self {
        TieBreak {
            costs: c.projects.iter().map(|p| p.cost).collect(),
            ids: c.projects.iter().map(|p| p.id.clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    fn cmp(&self, a: usize, b: usize) -> Ordering {
        self.costs[a].cmp(&self.costs[b]).then_with(|| self.ids[a].cmp(&self.ids[b]))
    }
}

/// Project indices from most to least supported. Missing scores (gaps) rank
/// after every scored project; ties fall back to [`TieBreak`].
pub fn rank_projects(scores: &[Option<f64>], tie_break: &TieBreak) -> Vec<usize> {
    assert_eq!(scores.len(), tie_break.len(), "scores and tie-break keys must align");
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        let primary = match (scores[a], scores[b]) {
            (Some(x), Some(y)) => y.total_cmp(&x),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        };
        primary.then_with(|| tie_break.cmp(a, b))
    });
    order
}

/// Ranks complete score vectors.
pub fn rank_by_values(values: &[f64], tie_break: &TieBreak) -> Vec<usize> {
    let scores: Vec<Option<f64>> = values.iter().map(|v| Some(*v)).collect();
    rank_projects(&scores, tie_break)
}

/// `|A ∩ B|` of the two top-k sets.
pub fn top_k_intersection(a: &[usize], b: &[usize], k: usize) -> Result<usize, MetricError> {
    let n = a.len();
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch { left: a.len(), right: b.len() });
    }
    if k == 0 || k > n {
        return Err(MetricError::KOutOfRange { k, n });
    }
    let top_a: HashSet<usize> = a[..k].iter().copied().collect();
    Ok(b[..k].iter().filter(|i| top_a.contains(i)).count())
}

/// Jaccard index of two rankings' top-k sets: `|∩| / (2k − |∩|)`.
pub fn jaccard_of_rankings(a: &[usize], b: &[usize], k: usize) -> Result<f64, MetricError> {
    let shared = top_k_intersection(a, b, k)?;
    Ok(shared as f64 / (2 * k - shared) as f64)
}

/// Jaccard index between predicted and real top-k after tie-breaking.
pub fn jaccard_top_k(
    predicted: &[Option<f64>],
    real: &[f64],
    k: usize,
    tie_break: &TieBreak,
) -> Result<f64, MetricError> {
    if predicted.len() != real.len() {
        return Err(MetricError::LengthMismatch { left: predicted.len(), right: real.len() });
    }
    let a = rank_projects(predicted, tie_break);
    let b = rank_by_values(real, tie_break);
    jaccard_of_rankings(&a, &b, k)
}

/// Running total of costs along `ranking`, for the first `k_max` projects.
pub fn aggregated_cost_curve(ranking: &[usize], costs: &[Money], k_max: usize) -> Vec<Money> {
    ranking
        .iter()
        .take(k_max)
        .scan(Money::ZERO, |acc, &i| {
            *acc = *acc + costs[i];
            Some(*acc)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tb(costs: &[i64]) -> TieBreak {
        TieBreak {
            costs: costs.iter().map(|c| Money::from_major(*c)).collect(),
            ids: (0..costs.len()).map(|i| format!("p{i:02}")).collect(),
        }
    }

    #[test]
    fn identical_rankings_score_one() {
        let real: Vec<f64> = (0..20).map(|i| (i * 7 % 13) as f64).collect();
        let pred: Vec<Option<f64>> = real.iter().map(|v| Some(*v)).collect();
        let t = tb(&[1; 20]);
        for k in 1..=20 {
            assert_eq!(jaccard_top_k(&pred, &real, k, &t).unwrap(), 1.0);
        }
    }

    #[test]
    fn disjoint_top_k_scores_zero() {
        let real = [4.0, 3.0, 2.0, 1.0];
        let pred = [Some(1.0), Some(2.0), Some(3.0), Some(4.0)];
        assert_eq!(jaccard_top_k(&pred, &real, 2, &tb(&[1; 4])).unwrap(), 0.0);
    }

    #[test]
    fn half_overlap_at_ten() {
        // Real top 10 = 0..10; predicted top 10 = 5..15.
        let real: Vec<f64> = (0..20).map(|i| (20 - i) as f64).collect();
        let pred: Vec<Option<f64>> =
            (0..20).map(|i| Some(if (5..15).contains(&i) { 100.0 - i as f64 } else { -(i as f64) })).collect();
        let j = jaccard_top_k(&pred, &real, 10, &tb(&[1; 20])).unwrap();
        assert!((j - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ties_broken_by_increasing_cost_then_id() {
        let t = tb(&[40, 10, 30, 10]);
        let ranking = rank_projects(&[Some(5.0); 4], &t);
        assert_eq!(ranking, vec![1, 3, 2, 0]);
    }

    #[test]
    fn gaps_rank_last() {
        let t = tb(&[1, 1, 1]);
        assert_eq!(rank_projects(&[None, Some(1.0), Some(2.0)], &t), vec![2, 1, 0]);
    }

    #[test]
    fn k_range_is_checked() {
        let t = tb(&[1, 1]);
        let real = [1.0, 2.0];
        let pred = [Some(1.0), Some(2.0)];
        assert!(matches!(jaccard_top_k(&pred, &real, 0, &t), Err(MetricError::KOutOfRange { .. })));
        assert!(matches!(jaccard_top_k(&pred, &real, 3, &t), Err(MetricError::KOutOfRange { .. })));
    }

    #[test]
    fn cost_curve_of_unit_costs() {
        let costs = vec![Money::from_major(1); 20];
        let ranking: Vec<usize> = (0..20).collect();
        let curve = aggregated_cost_curve(&ranking, &costs, 15);
        assert_eq!(curve, (1..=15).map(Money::from_major).collect::<Vec<_>>());
    }
}
