use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::money::Money;

/// One consolidated proposal as it appeared on the ballot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Project {
    pub id: String,
    pub title: String,
    pub description: String,
    pub category: String,
    pub cost: Money,
    pub district: String,
    /// Real approval count. `None` for drafts and what-if proposals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub votes: Option<u64>,
}

/// Campaign-level facts that the project table does not carry. Stored as a
/// `meta.json` sidecar next to `projects.csv`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignMeta {
    /// Explicit identifier; defaults to `<city-slug>-<year>` (plus `-<language>`
    /// for translated variants).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub city: String,
    pub year: i32,
    pub currency: String,
    pub budget: Money,
    /// Distinct voters who cast a ballot.
    pub voters: u64,
    /// All approvals cast, summed over ballots.
    pub total_votes: u64,
    pub max_approvals: u32,
    /// BCP-47-ish tag of the text in the project table (`fr`, `pl`, `en`).
    pub language: String,
    /// Marks a machine/human translation of an original-language campaign.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub translated: bool,
}

impl CampaignMeta {
    pub fn campaign_id(&self) -> String {
        if let Some(id) = &self.id {
            return id.clone();
        }
        let base = format!("{}-{}", slug(&self.city), self.year);
        if self.translated {
            format!("{base}-{}", self.language.to_lowercase())
        } else {
            base
        }
    }
}

/// Lowercase ASCII slug: `"Wrocław"` → `"wroclaw"`.
pub fn slug(text: &str) -> String {
    let ascii = deunicode::deunicode(text).to_lowercase();
    let mut out = String::with_capacity(ascii.len());
    for c in ascii.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c);
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    out.trim_end_matches('-').to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Campaign {
    pub meta: CampaignMeta,
    pub projects: Vec<Project>,
}

impl Campaign {
    pub fn id(&self) -> String {
        self.meta.campaign_id()
    }

    pub fn len(&self) -> usize {
        self.projects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projects.is_empty()
    }

    pub fn project(&self, id: &str) -> Option<&Project> {
        self.projects.iter().find(|p| p.id == id)
    }

    /// True when every project carries a real vote count.
    pub fn has_ground_truth(&self) -> bool {
        !self.projects.is_empty() && self.projects.iter().all(|p| p.votes.is_some())
    }

    /// Real votes as floats, or `None` if any project lacks them.
    pub fn real_votes(&self) -> Option<Vec<f64>> {
        self.projects
            .iter()
            .map(|p| p.votes.map(|v| v as f64))
            .collect()
    }

    pub fn costs(&self) -> Vec<Money> {
        self.projects.iter().map(|p| p.cost).collect()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.projects.iter().map(|p| p.id.as_str()).collect()
    }

    pub fn vote_sum(&self) -> u64 {
        self.projects.iter().filter_map(|p| p.votes).sum()
    }
}

/// A single broken invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    EmptyProjects,
    DuplicateId { id: String, rows: Vec<usize> },
    EmptyField { id: String, field: String },
    NonPositiveCost { id: String, cost: Money },
    VotesExceedVoters { id: String, votes: u64, voters: u64 },
    TotalExceedsCapacity { total_votes: u64, voters: u64, max_approvals: u32 },
    VoteSumMismatch { sum: u64, total_votes: u64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyProjects => write!(f, "campaign has no projects"),
            Violation::DuplicateId { id, rows } => {
                let rows: Vec<String> = rows.iter().map(|r| r.to_string()).collect();
                write!(f, "duplicate project id {id:?} at rows {}", rows.join(", "))
            }
            Violation::EmptyField { id, field } => write!(f, "project {id:?}: empty {field}"),
            Violation::NonPositiveCost { id, cost } => {
                write!(f, "project {id:?}: cost must be positive, got {cost}")
            }
            Violation::VotesExceedVoters { id, votes, voters } => {
                write!(f, "project {id:?}: votes exceed voters ({votes} > {voters})")
            }
            Violation::TotalExceedsCapacity { total_votes, voters, max_approvals } => write!(
                f,
                "total votes {total_votes} exceed voters × max approvals ({voters} × {max_approvals})"
            ),
            Violation::VoteSumMismatch { sum, total_votes } => {
                write!(f, "project votes sum to {sum} but campaign total is {total_votes}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "clean");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "- {v}")?;
        }
        Ok(())
    }
}

/// Checks every campaign and project invariant. Vote checks are skipped for
/// projects without a vote count (drafts).
pub fn validate_campaign(c: &Campaign) -> ValidationReport {
    let mut violations = Vec::new();
    if c.projects.is_empty() {
        violations.push(Violation::EmptyProjects);
    }

    let mut rows_by_id: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in c.projects.iter().enumerate() {
        rows_by_id.entry(p.id.as_str()).or_default().push(i + 1);
    }
    for (id, rows) in rows_by_id {
        if rows.len() > 1 {
            violations.push(Violation::DuplicateId { id: id.to_string(), rows });
        }
    }

    for p in &c.projects {
        violations.extend(project_violations(p));
        if let Some(votes) = p.votes {
            if votes > c.meta.voters {
                violations.push(Violation::VotesExceedVoters {
                    id: p.id.clone(),
                    votes,
                    voters: c.meta.voters,
                });
            }
        }
    }

    let capacity = c.meta.voters.saturating_mul(c.meta.max_approvals as u64);
    if c.meta.total_votes > capacity {
        violations.push(Violation::TotalExceedsCapacity {
            total_votes: c.meta.total_votes,
            voters: c.meta.voters,
            max_approvals: c.meta.max_approvals,
        });
    }
    if c.has_ground_truth() && c.vote_sum() != c.meta.total_votes {
        violations.push(Violation::VoteSumMismatch {
            sum: c.vote_sum(),
            total_votes: c.meta.total_votes,
        });
    }
    ValidationReport { violations }
}

/// Field-level checks for one project, shared with draft validation.
pub fn project_violations(p: &Project) -> Vec<Violation> {
    let mut out = Vec::new();
    for (field, value) in [
        ("id", &p.id),
        ("title", &p.title),
        ("description", &p.description),
        ("category", &p.category),
        ("district", &p.district),
    ] {
        if value.trim().is_empty() {
            out.push(Violation::EmptyField { id: p.id.clone(), field: field.to_string() });
        }
    }
    if !p.cost.is_positive() {
        out.push(Violation::NonPositiveCost { id: p.id.clone(), cost: p.cost });
    }
    out
}
