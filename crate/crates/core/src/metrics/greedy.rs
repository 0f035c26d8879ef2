use serde::{Deserialize, Serialize};

use crate::data::Money;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreedyRule {
    /// Skip projects that no longer fit and keep scanning.
    #[default]
    SkipAndContinue,
    /// Stop at the first project that does not fit.
    StopAtFirstOverflow,
}

/// Funds projects in ranking order while the budget allows. Returns funded
/// indices in rank order.
pub fn greedy_allocate(ranking: &[usize], costs: &[Money], budget: Money, rule: GreedyRule) -> Vec<usize> {
    let mut remaining = budget;
    let mut funded = Vec::new();
    for &i in ranking {
        if costs[i] <= remaining {
            remaining = remaining - costs[i];
            funded.push(i);
        } else if rule == GreedyRule::StopAtFirstOverflow {
            break;
        }
    }
    funded
}
