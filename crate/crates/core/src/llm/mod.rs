//! LLM vote prediction: prompt variants, retrieval over the past campaign,
//! record/replay client, answer parsing and contamination probes.

mod client;
mod parse;
mod pipeline;
mod probe;
mod prompt;
mod retrieve;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::ModelId;

pub use client::{
    transcript_key, ChatBackend, Completion, LlmClient, LlmConfig, LlmError, LlmMode, OpenAiChat,
    RateLimiter, ScriptedBackend, Transcript, TranscriptStore, SCRIPTED_MODEL,
};
pub use parse::{parse_amount, parse_prediction, ParseError};
pub use pipeline::{predict_project, run_campaign_prediction, PipelineOptions, PredictionInputs};
pub use probe::{
    probe_attribute_retrieval, probe_description_completion, score_attributes, score_completion,
    split_prefix, summarize_probes, CompletionMode, ContaminationReport, ProbeKind, ProbeSummary,
    COSINE_THRESHOLD, COST_TOLERANCE, OVERLAP_THRESHOLD,
};
pub use prompt::{
    build_prompt, build_step_back_prompt, project_line, summarize_past_election, with_format_reminder,
    PromptContext, PromptError, PromptStats,
};
pub use retrieve::{cosine, retrieve_similar, Retrieved};

/// How much past-campaign context a prompt carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PromptKind {
    /// No context.
    Nc,
    /// Past-campaign summary plus retrieved similar projects.
    Rag,
    /// RAG with a step-back abstraction stage first.
    RagSb,
    /// Full past project list with votes.
    Ic,
}

impl PromptKind {
    pub const ALL: [PromptKind; 4] = [PromptKind::Nc, PromptKind::Rag, PromptKind::RagSb, PromptKind::Ic];

    pub fn model_id(self) -> ModelId {
        match self {
            PromptKind::Nc => ModelId::Nc,
            PromptKind::Rag => ModelId::Rag,
            PromptKind::RagSb => ModelId::RagSb,
            PromptKind::Ic => ModelId::Ic,
        }
    }

    pub fn from_model_id(id: ModelId) -> Option<Self> {
        PromptKind::ALL.into_iter().find(|k| k.model_id() == id)
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.model_id().as_str())
    }
}

impl FromStr for PromptKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<ModelId>()
            .ok()
            .and_then(PromptKind::from_model_id)
            .ok_or_else(|| format!("not an LLM prompt variant: {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reasoning {
    #[default]
    ChainOfThought,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptVariant {
    pub kind: PromptKind,
    #[serde(default)]
    pub reasoning: Reasoning,
    pub language: String,
}

impl PromptVariant {
    /// Chain-of-thought variant in the campaign's language.
    pub fn for_campaign(kind: PromptKind, campaign: &crate::data::Campaign) -> Self {
        PromptVariant { kind, reasoning: Reasoning::ChainOfThought, language: campaign.meta.language.clone() }
    }
}
