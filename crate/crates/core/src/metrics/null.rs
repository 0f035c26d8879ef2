use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::report::{k_max, EvalReport};
use super::topk::{aggregated_cost_curve, rank_by_values, TieBreak};
use super::{kendall_tau_b, GreedyRule, MetricError};
use crate::data::{Campaign, ModelId, PredictionRecord, PredictionRun, RunConfig};

pub const DEFAULT_SHUFFLES: usize = 100;

/// Scores a uniformly random permutation: the first project drawn gets `n`,
/// the last gets 1.
fn shuffled_scores(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut scores = vec![0.0; n];
    for (pos, &i) in order.iter().enumerate() {
        scores[i] = (n - pos) as f64;
    }
    scores
}

/// `|top_k(a) ∩ top_k(b)|` for k = 1..=k_max in one pass.
pub(super) fn intersection_series(a: &[usize], b: &[usize], k_max: usize) -> Vec<usize> {
    let mut in_a = vec![false; a.len()];
    let mut in_b = vec![false; b.len()];
    let mut shared = 0;
    let mut out = Vec::with_capacity(k_max);
    for k in 0..k_max {
        in_a[a[k]] = true;
        if in_b[a[k]] {
            shared += 1;
        }
        in_b[b[k]] = true;
        if in_a[b[k]] {
            shared += 1;
        }
        out.push(shared);
    }
    out
}

/// A single seeded shuffle, packaged as a run of the null model.
pub fn null_run(campaign: &Campaign, seed: u64) -> PredictionRun {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores = shuffled_scores(campaign.len(), &mut rng);
    let records = campaign
        .projects
        .iter()
        .zip(scores)
        .map(|(p, s)| PredictionRecord::value(p.id.clone(), s))
        .collect();
    let config = RunConfig { seed: Some(seed), ..RunConfig::default() };
    PredictionRun::new(campaign, ModelId::Null, records, config)
}

/// Ranking metrics averaged over `shuffles` random permutations. Vote-level
/// fields (RMSE, funded sets) are left empty since shuffles carry no counts.
pub fn null_predictor(campaign: &Campaign, shuffles: usize, seed: u64) -> Result<EvalReport, MetricError> {
    let real = campaign.real_votes().ok_or_else(|| MetricError::MissingGroundTruth(campaign.id()))?;
    let n = campaign.len();
    if n < 2 {
        return Err(MetricError::TooShort { n, min: 2 });
    }
    if shuffles == 0 {
        return Err(MetricError::NoPredictions);
    }
    let tb = TieBreak::from_campaign(campaign);
    let costs = campaign.costs();
    let km = k_max(n);
    let real_rank = rank_by_values(&real, &tb);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tau_sum = 0.0;
    let mut tau_count = 0usize;
    let mut inter = vec![0.0; km];
    let mut jac = vec![0.0; km];
    let mut cum_pred = vec![0.0; km];
    for _ in 0..shuffles {
        let scores = shuffled_scores(n, &mut rng);
        if let Ok(t) = kendall_tau_b(&scores, &real) {
            tau_sum += t;
            tau_count += 1;
        }
        let pred_rank = rank_by_values(&scores, &tb);
        for (k, shared) in (1..=km).zip(intersection_series(&pred_rank, &real_rank, km)) {
            inter[k - 1] += shared as f64;
            jac[k - 1] += shared as f64 / (2 * k - shared) as f64;
        }
        for (acc, c) in cum_pred.iter_mut().zip(aggregated_cost_curve(&pred_rank, &costs, km)) {
            *acc += c.as_major_f64();
        }
    }
    let s = shuffles as f64;
    let scale = |v: Vec<f64>| v.into_iter().map(|x| x / s).collect::<Vec<_>>();

    Ok(EvalReport {
        campaign_id: campaign.id(),
        model: ModelId::Null,
        run_id: None,
        n_projects: n,
        gap_count: 0,
        voters: campaign.meta.voters,
        budget: campaign.meta.budget.as_major_f64(),
        normalized_rmse: None,
        kendall_tau: (tau_count > 0).then(|| tau_sum / tau_count as f64),
        k_max: km,
        jaccard: scale(jac),
        top_k_intersection: scale(inter),
        cum_cost_real: aggregated_cost_curve(&real_rank, &costs, km).iter().map(|c| c.as_major_f64()).collect(),
        cum_cost_pred: scale(cum_pred),
        greedy_rule: GreedyRule::default(),
        funded_real: Vec::new(),
        funded_pred: Vec::new(),
        distinct_predictions: n,
        banded: false,
        shuffles: Some(shuffles),
        seed: Some(seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{evaluate_run, top_k_intersection, EvalOptions};
    use crate::synthetic::{synthetic_campaign, SyntheticSpec};

    fn campaign(n: usize) -> Campaign {
        synthetic_campaign(&SyntheticSpec { projects: n, ..SyntheticSpec::default() }, 7)
    }

    #[test]
    fn incremental_intersection_matches_direct_count() {
        let c = campaign(40);
        let tb = TieBreak::from_campaign(&c);
        let real = rank_by_values(&c.real_votes().unwrap(), &tb);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let pred = rank_by_values(&shuffled_scores(40, &mut rng), &tb);
            let series = intersection_series(&pred, &real, 40);
            for k in 1..=40 {
                assert_eq!(series[k - 1], top_k_intersection(&pred, &real, k).unwrap());
            }
        }
    }

    #[test]
    fn same_seed_same_report() {
        let c = campaign(30);
        assert_eq!(null_predictor(&c, 20, 5).unwrap(), null_predictor(&c, 20, 5).unwrap());
        assert_ne!(null_predictor(&c, 20, 5).unwrap(), null_predictor(&c, 20, 6).unwrap());
    }

    #[test]
    fn single_null_run_agrees_with_averaged_report_in_expectation() {
        let c = campaign(50);
        let avg = null_predictor(&c, 400, 11).unwrap();
        let mut mean_inter = 0.0;
        for seed in 0..400 {
            let r = evaluate_run(&null_run(&c, seed), &c, &EvalOptions::default()).unwrap();
            mean_inter += r.top_k_intersection[14];
        }
        mean_inter /= 400.0;
        assert!((mean_inter - avg.top_k_intersection[14]).abs() < 0.5);
    }
}
