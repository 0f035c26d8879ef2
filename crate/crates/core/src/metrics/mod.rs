//! Evaluation metrics for predicted vote counts and rankings.

mod greedy;
mod null;
mod report;
mod tau;
mod topk;

pub use greedy::{greedy_allocate, GreedyRule};
pub use null::{null_predictor, null_run, DEFAULT_SHUFFLES};
pub use report::{distinct_values, evaluate_run, k_max, normalized_rmse, EvalOptions, EvalReport};
pub use tau::kendall_tau_b;
pub use topk::{
    aggregated_cost_curve, jaccard_of_rankings, jaccard_top_k, rank_by_values, rank_projects,
    top_k_intersection, TieBreak,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {min} values, got {n}")]
    TooShort { n: usize, min: usize },
    #[error("input contains NaN")]
    NonFinite,
    #[error("Kendall tau is undefined when one side is constant")]
    UndefinedTau,
    #[error("k = {k} must lie in 1..={n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("voter count must be positive")]
    NonPositiveVoters,
    #[error("run is incomplete: {gaps} of {n} predictions missing (pass force to evaluate anyway)")]
    Incomplete { gaps: usize, n: usize },
    #[error("run does not match campaign: {0}")]
    RunMismatch(String),
    #[error("campaign {0:?} has no ground-truth votes")]
    MissingGroundTruth(String),
    #[error("no usable predictions")]
    NoPredictions,
}
