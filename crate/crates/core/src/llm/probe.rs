//! Contamination probes: can the model reproduce project descriptions or
//! recall district and cost from the title and description alone?

use serde::{Deserialize, Serialize};

use super::client::{LlmClient, LlmError};
use super::parse::parse_amount;
use super::prompt::{fill, templates};
use super::retrieve::cosine;
use crate::data::{slug, CampaignMeta, Project};
use crate::features::Embedder;
use crate::text::{ngram_overlap, words};

/// Word 3-gram overlap above which a completion counts as reproduced.
pub const OVERLAP_THRESHOLD: f64 = 0.5;
/// Embedding cosine above which a completion counts as reproduced.
pub const COSINE_THRESHOLD: f64 = 0.95;
/// Relative cost error within which a recalled cost counts as correct.
pub const COST_TOLERANCE: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionMode {
    /// Only the title is given.
    TitleOnly,
    /// The first third of the description's words is given.
    Prefix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    CompletionTitleOnly,
    CompletionPrefix,
    AttributeRetrieval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationReport {
    pub project_id: String,
    pub probe: ProbeKind,
    pub prompt_hash: String,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ngram_overlap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cosine: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub district_match: Option<bool>,
    /// `|recalled − true| / true`; `None` when no cost could be read.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_relative_error: Option<f64>,
    pub contaminated: bool,
}

/// Splits a description into the shown prefix and the hidden remainder.
pub fn split_prefix(description: &str) -> (String, String) {
    let w: Vec<&str> = description.split_whitespace().collect();
    let cut = w.len().div_ceil(3).max(1).min(w.len());
    (w[..cut].join(" "), w[cut..].join(" "))
}

/// Lexical and semantic similarity of a generated description to the
/// reference, with the verdict.
pub fn score_completion(generated: &str, reference: &str, embedder: &dyn Embedder) -> Result<(f64, f64, bool), LlmError> {
    let overlap = ngram_overlap(generated, reference, 3);
    let sim = if words(generated).is_empty() || words(reference).is_empty() {
        0.0
    } else {
        cosine(&embedder.embed(generated)?, &embedder.embed(reference)?)
    };
    Ok((overlap, sim, overlap > OVERLAP_THRESHOLD || sim > COSINE_THRESHOLD))
}

pub fn probe_description_completion(
    client: &LlmClient,
    embedder: &dyn Embedder,
    meta: &CampaignMeta,
    project: &Project,
    mode: CompletionMode,
) -> Result<ContaminationReport, LlmError> {
    let t = &templates(&meta.language).probe;
    let base = vec![("title", project.title.clone()), ("year", meta.year.to_string()), ("city", meta.city.clone())];
    let (prompt, reference, probe) = match mode {
        CompletionMode::TitleOnly => (fill(t.title_only, &base), project.description.clone(), ProbeKind::CompletionTitleOnly),
        CompletionMode::Prefix => {
            let (prefix, rest) = split_prefix(&project.description);
            let mut vars = base;
            vars.push(("prefix", prefix));
            (fill(t.prefix, &vars), rest, ProbeKind::CompletionPrefix)
        }
    };
    let transcript = client.complete(&prompt)?;
    let (overlap, sim, contaminated) = score_completion(&transcript.response, &reference, embedder)?;
    Ok(ContaminationReport {
        project_id: project.id.clone(),
        probe,
        prompt_hash: transcript.key,
        response: transcript.response,
        ngram_overlap: Some(overlap),
        cosine: Some(sim),
        district_match: None,
        cost_relative_error: None,
        contaminated,
    })
}

fn field<'a>(response: &'a str, name: &str) -> Option<&'a str> {
    response.lines().find_map(|l| {
        let l = l.trim().trim_start_matches(['*', '-', ' ']);
        let (k, v) = l.split_once(':')?;
        k.trim().trim_matches('*').eq_ignore_ascii_case(name).then(|| v.trim().trim_matches('*').trim())
    })
}

/// District match and relative cost error read from a `DISTRICT:` / `COST:`
/// answer. An unreadable cost is a miss.
pub fn score_attributes(response: &str, project: &Project) -> (bool, Option<f64>, bool) {
    let district_match = field(response, "district").is_some_and(|d| !d.is_empty() && slug(d) == slug(&project.district));
    let truth = project.cost.as_major_f64();
    let cost_err = field(response, "cost").and_then(parse_amount).map(|c| (c - truth).abs() / truth);
    let contaminated = district_match && cost_err.is_some_and(|e| e <= COST_TOLERANCE);
    (district_match, cost_err, contaminated)
}

pub fn probe_attribute_retrieval(
    client: &LlmClient,
    meta: &CampaignMeta,
    project: &Project,
) -> Result<ContaminationReport, LlmError> {
    let t = &templates(&meta.language).probe;
    let prompt = fill(
        t.attributes,
        &[
            ("title", project.title.clone()),
            ("description", project.description.clone()),
            ("year", meta.year.to_string()),
            ("city", meta.city.clone()),
            ("currency", meta.currency.clone()),
        ],
    );
    let transcript = client.complete(&prompt)?;
    let (district_match, cost_err, contaminated) = score_attributes(&transcript.response, project);
    Ok(ContaminationReport {
        project_id: project.id.clone(),
        probe: ProbeKind::AttributeRetrieval,
        prompt_hash: transcript.key,
        response: transcript.response,
        ngram_overlap: None,
        cosine: None,
        district_match: Some(district_match),
        cost_relative_error: cost_err,
        contaminated,
    })
}

/// Counts per probe kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub probe: ProbeKind,
    pub projects: usize,
    pub contaminated: usize,
}

pub fn summarize_probes(reports: &[ContaminationReport]) -> Vec<ProbeSummary> {
    [ProbeKind::CompletionTitleOnly, ProbeKind::CompletionPrefix, ProbeKind::AttributeRetrieval]
        .into_iter()
        .filter_map(|probe| {
            let of_kind: Vec<_> = reports.iter().filter(|r| r.probe == probe).collect();
            (!of_kind.is_empty()).then(|| ProbeSummary {
                probe,
                projects: of_kind.len(),
                contaminated: of_kind.iter().filter(|r| r.contaminated).count(),
            })
        })
        .collect()
}
