//! What-if queries: where would a draft proposal land among a campaign's
//! predicted ranking, and would it be funded?

use serde::{Deserialize, Serialize};

use crate::data::{project_violations, Campaign, Money, ModelId, PredictionRun, Project, Violation};
use crate::metrics::{greedy_allocate, rank_projects, GreedyRule, TieBreak};

/// Id given to the draft inside the augmented ranking.
pub const DRAFT_ID: &str = "__draft__";

/// Top-k thresholds reported for the draft, in percent of the campaign size.
pub const TOP_K_PERCENTS: [u32; 3] = [10, 20, 30];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DraftProject {
    pub title: String,
    pub description: String,
    pub category: String,
    pub cost: Money,
    pub district: String,
}

impl DraftProject {
    pub fn to_project(&self) -> Project {
        Project {
            id: DRAFT_ID.to_string(),
            title: self.title.clone(),
            description: self.description.clone(),
            category: self.category.clone(),
            cost: self.cost,
            district: self.district.clone(),
            votes: None,
        }
    }

    pub fn violations(&self) -> Vec<Violation> {
        project_violations(&self.to_project())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfRequest {
    pub campaign: String,
    pub draft: DraftProject,
    pub model: ModelId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FundingStatus {
    Funded,
    NotFunded,
    /// Costs more than the whole budget.
    NeverFundable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopKFlag {
    pub percent: u32,
    pub k: usize,
    pub member: bool,
}

/// A campaign project next to the draft in the augmented ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub project_id: String,
    pub title: String,
    pub predicted_votes: Option<f64>,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionSource {
    /// A fitted classical model loaded from disk.
    FrozenModel,
    /// Answered from stored LLM transcripts.
    LlmReplay,
    /// Answered by a live LLM call.
    LlmLive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: PredictionSource,
    /// Run whose predictions form the ranking the draft is inserted into.
    pub ranking_run_id: Option<String>,
    /// Model file, LLM model name or similar.
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResponse {
    pub campaign: String,
    pub model: ModelId,
    pub predicted_votes: f64,
    /// 1-based position among the campaign's projects plus the draft.
    pub rank: usize,
    pub n_projects: usize,
    pub above: Option<Neighbor>,
    pub below: Option<Neighbor>,
    pub top_k: Vec<TopKFlag>,
    pub funding: FundingStatus,
    pub budget: f64,
    pub draft_cost: f64,
    pub provenance: Provenance,
}

/// `⌊percent · n / 100⌋`, at least 1.
pub fn top_k_size(n: usize, percent: u32) -> usize {
    (n * percent as usize / 100).max(1)
}

/// Inserts the draft with `predicted_votes` into `run`'s ranking of
/// `campaign` and re-runs greedy allocation on the augmented list.
pub fn insert_draft(
    campaign: &Campaign,
    run: &PredictionRun,
    draft: &DraftProject,
    predicted_votes: f64,
    provenance: Provenance,
) -> WhatIfResponse {
    let n = campaign.len();
    let mut scores = run.predictions();
    scores.push(Some(predicted_votes));
    let mut tb = TieBreak::from_campaign(campaign);
    tb.costs.push(draft.cost);
    tb.ids.push(DRAFT_ID.to_string());
    let ranking = rank_projects(&scores, &tb);
    let pos = ranking.iter().position(|&i| i == n).expect("draft is ranked");

    let neighbor = |p: usize| {
        ranking.get(p).map(|&i| {
            let proj = &campaign.projects[i];
            Neighbor { project_id: proj.id.clone(), title: proj.title.clone(), predicted_votes: scores[i], rank: p + 1 }
        })
    };
    let top_k = TOP_K_PERCENTS
        .iter()
        .map(|&percent| {
            let k = top_k_size(n, percent);
            TopKFlag { percent, k, member: pos < k }
        })
        .collect();
    let budget = campaign.meta.budget;
    let funding = if draft.cost > budget {
        FundingStatus::NeverFundable
    } else {
        let mut costs = campaign.costs();
        costs.push(draft.cost);
        if greedy_allocate(&ranking, &costs, budget, GreedyRule::SkipAndContinue).contains(&n) {
            FundingStatus::Funded
        } else {
            FundingStatus::NotFunded
        }
    };

    WhatIfResponse {
        campaign: campaign.id(),
        model: run.model,
        predicted_votes,
        rank: pos + 1,
        n_projects: n,
        above: pos.checked_sub(1).and_then(neighbor),
        below: neighbor(pos + 1),
        top_k,
        funding,
        budget: budget.as_major_f64(),
        draft_cost: draft.cost.as_major_f64(),
        provenance,
    }
}
