use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::greedy::{greedy_allocate, GreedyRule};
use super::null::intersection_series;
use super::topk::{aggregated_cost_curve, rank_by_values, rank_projects, TieBreak};
use super::{kendall_tau_b, MetricError};
use crate::data::{Campaign, Money, ModelId, PredictionRun};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Evaluate runs flagged incomplete.
    pub force: bool,
    pub greedy_rule: GreedyRule,
}

/// Metrics for one run against a campaign's real votes. Money amounts are in
/// major currency units. Series are indexed by `k - 1` for `k = 1..=k_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub campaign_id: String,
    pub model: ModelId,
    pub run_id: Option<String>,
    pub n_projects: usize,
    pub gap_count: usize,
    pub voters: u64,
    pub budget: f64,
    /// RMSE over non-gap projects divided by the voter count.
    pub normalized_rmse: Option<f64>,
    /// Tau-b over non-gap projects; `None` when a side is constant.
    pub kendall_tau: Option<f64>,
    pub k_max: usize,
    pub jaccard: Vec<f64>,
    pub top_k_intersection: Vec<f64>,
    pub cum_cost_real: Vec<f64>,
    pub cum_cost_pred: Vec<f64>,
    pub greedy_rule: GreedyRule,
    pub funded_real: Vec<String>,
    pub funded_pred: Vec<String>,
    pub distinct_predictions: usize,
    /// At most a third as many distinct predicted values as projects.
    pub banded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shuffles: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl EvalReport {
    /// Plot series as CSV, one row per k.
    pub fn series_csv(&self) -> String {
        let mut out = String::from("k,jaccard,cum_cost_real,cum_cost_pred\n");
        for k in 0..self.k_max {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                k + 1,
                self.jaccard[k],
                self.cum_cost_real[k],
                self.cum_cost_pred[k]
            );
        }
        out
    }

    pub fn jaccard_at(&self, k: usize) -> Option<f64> {
        k.checked_sub(1).and_then(|i| self.jaccard.get(i).copied())
    }
}

/// Length of the top-k sweep: 30% of the projects, rounded down.
pub fn k_max(n: usize) -> usize {
    n * 3 / 10
}

/// `sqrt(mean((p − r)²)) / voters`.
pub fn normalized_rmse(predicted: &[f64], real: &[f64], voters: u64) -> Result<f64, MetricError> {
    if predicted.len() != real.len() {
        return Err(MetricError::LengthMismatch { left: predicted.len(), right: real.len() });
    }
    if voters == 0 {
        return Err(MetricError::NonPositiveVoters);
    }
    if predicted.is_empty() {
        return Err(MetricError::NoPredictions);
    }
    if predicted.iter().chain(real).any(|v| v.is_nan()) {
        return Err(MetricError::NonFinite);
    }
    let mse = predicted.iter().zip(real).map(|(p, r)| (p - r) * (p - r)).sum::<f64>() / predicted.len() as f64;
    Ok(mse.sqrt() / voters as f64)
}

/// Number of distinct values among the non-gap predictions.
pub fn distinct_values(values: &[Option<f64>]) -> usize {
    let mut v: Vec<f64> = values.iter().flatten().copied().collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

/// Computes every metric for `run` against `campaign`. Gaps are dropped from
/// RMSE and tau and rank last for top-k.
pub fn evaluate_run(run: &PredictionRun, campaign: &Campaign, options: &EvalOptions) -> Result<EvalReport, MetricError> {
    run.check_against(campaign).map_err(MetricError::RunMismatch)?;
    let real = campaign.real_votes().ok_or_else(|| MetricError::MissingGroundTruth(campaign.id()))?;
    let n = campaign.len();
    let gaps = run.gap_count();
    if !run.complete && !options.force {
        return Err(MetricError::Incomplete { gaps, n });
    }
    let predicted = run.predictions();
    let (p_ok, r_ok): (Vec<f64>, Vec<f64>) =
        predicted.iter().zip(&real).filter_map(|(p, r)| p.map(|p| (p, *r))).unzip();
    if p_ok.is_empty() {
        return Err(MetricError::NoPredictions);
    }
    let rmse = normalized_rmse(&p_ok, &r_ok, campaign.meta.voters)?;
    let tau = match kendall_tau_b(&p_ok, &r_ok) {
        Ok(t) => Some(t),
        Err(MetricError::UndefinedTau | MetricError::TooShort { .. }) => None,
        Err(e) => return Err(e),
    };

    let tb = TieBreak::from_campaign(campaign);
    let costs = campaign.costs();
    let pred_rank = rank_projects(&predicted, &tb);
    let real_rank = rank_by_values(&real, &tb);
    let km = k_max(n);
    let inter = intersection_series(&pred_rank, &real_rank, km);
    let jaccard = inter.iter().enumerate().map(|(i, &s)| s as f64 / (2 * (i + 1) - s) as f64).collect();
    let major = |v: Vec<Money>| v.into_iter().map(Money::as_major_f64).collect::<Vec<_>>();
    let funded = |rank: &[usize]| {
        greedy_allocate(rank, &costs, campaign.meta.budget, options.greedy_rule)
            .into_iter()
            .map(|i| campaign.projects[i].id.clone())
            .collect::<Vec<_>>()
    };
    let distinct = distinct_values(&predicted);

    Ok(EvalReport {
        campaign_id: campaign.id(),
        model: run.model,
        run_id: run.run_id(),
        n_projects: n,
        gap_count: gaps,
        voters: campaign.meta.voters,
        budget: campaign.meta.budget.as_major_f64(),
        normalized_rmse: Some(rmse),
        kendall_tau: tau,
        k_max: km,
        jaccard,
        top_k_intersection: inter.into_iter().map(|s| s as f64).collect(),
        cum_cost_real: major(aggregated_cost_curve(&real_rank, &costs, km)),
        cum_cost_pred: major(aggregated_cost_curve(&pred_rank, &costs, km)),
        greedy_rule: options.greedy_rule,
        funded_real: funded(&real_rank),
        funded_pred: funded(&pred_rank),
        distinct_predictions: distinct,
        banded: distinct * 3 <= n,
        shuffles: None,
        seed: run.config.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PredictionRecord, RunConfig};
    use crate::synthetic::{synthetic_campaign, SyntheticSpec};

    fn campaign() -> Campaign {
        synthetic_campaign(&SyntheticSpec { projects: 50, ..SyntheticSpec::default() }, 1)
    }

    fn run_with(c: &Campaign, values: Vec<Option<f64>>) -> PredictionRun {
        let records = c
            .projects
            .iter()
            .zip(values)
            .map(|(p, v)| PredictionRecord { predicted_votes: v, ..PredictionRecord::value(p.id.clone(), 0.0) })
            .collect();
        PredictionRun::new(c, ModelId::Knn, records, RunConfig::default())
    }

    #[test]
    fn rmse_identities() {
        assert_eq!(normalized_rmse(&[1.0, 2.0], &[1.0, 2.0], 10).unwrap(), 0.0);
        assert_eq!(normalized_rmse(&[11.0, -8.0], &[1.0, 2.0], 10).unwrap(), 1.0);
        assert!(matches!(normalized_rmse(&[1.0], &[1.0, 2.0], 10), Err(MetricError::LengthMismatch { .. })));
        assert!(matches!(normalized_rmse(&[1.0], &[1.0], 0), Err(MetricError::NonPositiveVoters)));
    }

    #[test]
    fn perfect_run() {
        let c = campaign();
        let real = c.real_votes().unwrap();
        let r = evaluate_run(&run_with(&c, real.iter().map(|v| Some(*v)).collect()), &c, &EvalOptions::default()).unwrap();
        assert_eq!(r.normalized_rmse, Some(0.0));
        assert_eq!(r.kendall_tau, Some(1.0));
        assert_eq!(r.k_max, 15);
        assert!(r.jaccard.iter().all(|j| *j == 1.0));
        assert_eq!(r.funded_real, r.funded_pred);
        assert_eq!(r.cum_cost_real, r.cum_cost_pred);
        assert!(!r.banded);
    }

    #[test]
    fn funded_sets_fit_budget() {
        let c = campaign();
        let r = evaluate_run(&crate::metrics::null_run(&c, 4), &c, &EvalOptions::default()).unwrap();
        for set in [&r.funded_real, &r.funded_pred] {
            let spent: Money = set.iter().map(|id| c.project(id).unwrap().cost).sum();
            assert!(spent <= c.meta.budget);
        }
    }

    #[test]
    fn banded_predictions_flagged() {
        let c = campaign();
        let values = (0..50).map(|i| Some([100.0, 500.0, 2000.0][i % 3])).collect();
        let r = evaluate_run(&run_with(&c, values), &c, &EvalOptions::default()).unwrap();
        assert_eq!(r.distinct_predictions, 3);
        assert!(r.banded);
    }

    #[test]
    fn incomplete_run_refused_unless_forced() {
        let c = campaign();
        let values = (0..50).map(|i| if i < 10 { None } else { Some(i as f64) }).collect();
        let run = run_with(&c, values);
        assert!(!run.complete);
        assert_eq!(
            evaluate_run(&run, &c, &EvalOptions::default()).unwrap_err(),
            MetricError::Incomplete { gaps: 10, n: 50 }
        );
        let r = evaluate_run(&run, &c, &EvalOptions { force: true, ..EvalOptions::default() }).unwrap();
        assert_eq!(r.gap_count, 10);
    }

    #[test]
    fn gaps_rank_last_in_top_k() {
        let c = campaign();
        let real = c.real_votes().unwrap();
        let tb = TieBreak::from_campaign(&c);
        let best = rank_by_values(&real, &tb)[0];
        let mut values: Vec<Option<f64>> = real.iter().map(|v| Some(*v)).collect();
        values[best] = None;
        let r = evaluate_run(&run_with(&c, values), &c, &EvalOptions::default()).unwrap();
        assert_eq!(r.jaccard[0], 0.0);
        assert_eq!(r.kendall_tau, Some(1.0));
    }

    #[test]
    fn series_csv_shape() {
        let c = campaign();
        let r = evaluate_run(&crate::metrics::null_run(&c, 2), &c, &EvalOptions::default()).unwrap();
        let csv = r.series_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "k,jaccard,cum_cost_real,cum_cost_pred");
        assert_eq!(lines.len(), 16);
        assert!(lines[1].starts_with("1,"));
    }
}
