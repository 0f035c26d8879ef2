use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};

use super::client::{LlmClient, LlmError};
use super::parse::parse_prediction;
use super::prompt::{build_prompt, build_step_back_prompt, with_format_reminder, PromptContext};
use super::retrieve::retrieve_similar;
use super::{PromptKind, PromptVariant};
use crate::data::{Campaign, PredictionRecord, PredictionRun, Project, RunConfig};
use crate::features::Embedding;

/// Past-campaign context and description embeddings for a run.
#[derive(Debug, Clone, Copy)]
pub struct PredictionInputs<'a> {
    pub target: &'a Campaign,
    pub past: Option<&'a Campaign>,
    /// One per target project; required by the RAG variants.
    pub target_embeddings: Option<&'a [Embedding]>,
    /// One per past project; required by the RAG variants.
    pub past_embeddings: Option<&'a [Embedding]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineOptions {
    /// Similar past projects shown to RAG prompts.
    pub retrieval_size: usize,
    pub max_in_flight: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions { retrieval_size: 5, max_in_flight: 4 }
    }
}

fn check_inputs(variant: &PromptVariant, inputs: &PredictionInputs<'_>) -> Result<(), LlmError> {
    let target = inputs.target;
    if target.projects.is_empty() {
        return Err(LlmError::Invalid(format!("campaign {} has no projects", target.id())));
    }
    if !variant.language.eq_ignore_ascii_case(&target.meta.language) {
        return Err(LlmError::Invalid(format!(
            "prompt language {:?} does not match campaign language {:?}",
            variant.language, target.meta.language
        )));
    }
    if variant.kind != PromptKind::Nc && inputs.past.is_none() {
        return Err(LlmError::Invalid(format!("{} needs a past campaign", variant.kind)));
    }
    if matches!(variant.kind, PromptKind::Rag | PromptKind::RagSb) {
        let (Some(t), Some(p), Some(past)) = (inputs.target_embeddings, inputs.past_embeddings, inputs.past) else {
            return Err(LlmError::Invalid(format!("{} needs description embeddings", variant.kind)));
        };
        if t.len() != target.len() || p.len() != past.len() {
            return Err(LlmError::Invalid("embedding counts do not match project counts".into()));
        }
    }
    Ok(())
}

fn predict_one(
    client: &LlmClient,
    variant: &PromptVariant,
    inputs: &PredictionInputs<'_>,
    options: &PipelineOptions,
    index: usize,
) -> Result<PredictionRecord, LlmError> {
    let embedding = inputs.target_embeddings.map(|t| t[index].as_slice());
    predict_project(client, variant, inputs, options, &inputs.target.projects[index], embedding)
}

/// Predicts one project (a campaign member or a draft) against the target
/// campaign's context. `embedding` is the project's description embedding,
/// required by the RAG variants.
pub fn predict_project(
    client: &LlmClient,
    variant: &PromptVariant,
    inputs: &PredictionInputs<'_>,
    options: &PipelineOptions,
    project: &Project,
    embedding: Option<&[f64]>,
) -> Result<PredictionRecord, LlmError> {
    let similar = match (variant.kind, embedding, inputs.past_embeddings) {
        (PromptKind::Rag | PromptKind::RagSb, Some(e), Some(p)) => Some(retrieve_similar(e, p, options.retrieval_size)),
        (PromptKind::Rag | PromptKind::RagSb, _, _) => {
            return Err(LlmError::Invalid(format!("{} needs description embeddings", variant.kind)))
        }
        _ => None,
    };
    let mut ctx = PromptContext {
        target: &inputs.target.meta,
        target_projects: inputs.target.len(),
        past: inputs.past,
        similar: similar.as_deref(),
        abstraction: None,
    };
    let abstraction;
    if variant.kind == PromptKind::RagSb {
        abstraction = client.complete(&build_step_back_prompt(variant, &ctx)?)?.response;
        ctx.abstraction = Some(&abstraction);
    }
    let prompt = build_prompt(variant, project, &ctx)?;

    let gap = |prompt: &str, response: Option<String>, error: String| PredictionRecord {
        project_id: project.id.clone(),
        predicted_votes: None,
        prompt: Some(prompt.to_string()),
        prompt_hash: Some(client.key(prompt)),
        response,
        error: Some(error),
    };
    let attempt = |prompt: &str| -> Result<Result<PredictionRecord, PredictionRecord>, LlmError> {
        let t = match client.complete(prompt) {
            Ok(t) => t,
            Err(e) if e.is_retryable() => return Ok(Err(gap(prompt, None, e.to_string()))),
            Err(e) => return Err(e),
        };
        Ok(match parse_prediction(&t.response) {
            Ok(v) => Ok(PredictionRecord {
                project_id: project.id.clone(),
                predicted_votes: Some(v as f64),
                prompt: Some(prompt.to_string()),
                prompt_hash: Some(t.key),
                response: Some(t.response),
                error: None,
            }),
            Err(e) => Err(gap(prompt, Some(e.response), e.reason)),
        })
    };

    match attempt(&prompt)? {
        Ok(r) => Ok(r),
        Err(first) if first.response.is_some() => {
            log::info!("{}: unreadable answer ({}); retrying with a format reminder", project.id, first.error.as_deref().unwrap_or(""));
            let retry = with_format_reminder(&prompt, &variant.language);
            Ok(attempt(&retry)?.unwrap_or_else(|gap| gap))
        }
        Err(gap) => Ok(gap),
    }
}

/// Predicts every project of the target campaign with one independent prompt
/// each. Unreadable answers are retried once with a format reminder and then
/// recorded as gaps; transient provider failures also become gaps. Any other
/// error (missing fixture, authentication) aborts the run.
pub fn run_campaign_prediction(
    client: &LlmClient,
    variant: &PromptVariant,
    inputs: PredictionInputs<'_>,
    options: &PipelineOptions,
) -> Result<PredictionRun, LlmError> {
    check_inputs(variant, &inputs)?;
    let n = inputs.target.len();
    let workers = options.max_in_flight.clamp(1, n);
    let slots: Mutex<Vec<Option<Result<PredictionRecord, LlmError>>>> = Mutex::new((0..n).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if abort.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = predict_one(client, variant, &inputs, options, i);
                if r.is_err() {
                    abort.store(true, Ordering::Relaxed);
                }
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });

    let mut records = Vec::with_capacity(n);
    for slot in slots.into_inner().unwrap() {
        match slot {
            Some(Ok(r)) => records.push(r),
            Some(Err(e)) => return Err(e),
            None => {}
        }
    }
    if records.len() != n {
        return Err(LlmError::Invalid("run aborted before every project was predicted".into()));
    }

    let cfg = client.config();
    let mut config = RunConfig {
        train_campaign: inputs.past.map(Campaign::id),
        temperature: Some(cfg.temperature),
        llm_model: Some(cfg.model.clone()),
        ..RunConfig::default()
    };
    if matches!(variant.kind, PromptKind::Rag | PromptKind::RagSb) {
        config.retrieval_size = Some(options.retrieval_size);
    }
    config.extra.insert("reasoning".into(), serde_json::to_value(variant.reasoning).expect("serializable"));
    config.extra.insert("prompt_language".into(), variant.language.clone().into());
    let run = PredictionRun::new(inputs.target, variant.kind.model_id(), records, config);
    if !run.complete {
        log::warn!("{} run for {} has {} gaps out of {n}; marked incomplete", variant.kind, run.campaign_id, run.gap_count());
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{embed_all, HashingEmbedder};
    use crate::llm::client::{ChatBackend, Completion, LlmConfig, LlmMode, ScriptedBackend, SCRIPTED_MODEL};
    use crate::llm::Reasoning;
    use crate::synthetic::{synthetic_pair, SyntheticSpec};

    fn embed(c: &Campaign) -> Vec<Embedding> {
        let texts: Vec<&str> = c.projects.iter().map(|p| p.description.as_str()).collect();
        embed_all(&HashingEmbedder::default(), &texts, 1).unwrap()
    }

    fn variant(kind: PromptKind) -> PromptVariant {
        PromptVariant { kind, reasoning: Reasoning::ChainOfThought, language: "en".into() }
    }

    fn client(dir: &std::path::Path, mode: LlmMode) -> LlmClient {
        let cfg = LlmConfig { model: SCRIPTED_MODEL.into(), mode, transcripts_dir: Some(dir.into()), ..LlmConfig::default() };
        let backend: Option<Box<dyn ChatBackend>> = (mode != LlmMode::Replay).then(|| Box::new(ScriptedBackend) as _);
        LlmClient::new(cfg, backend).unwrap()
    }

    #[test]
    fn record_then_replay_is_identical() {
        let (past, target) = synthetic_pair(&SyntheticSpec { projects: 20, ..SyntheticSpec::default() }, 20, 8);
        let (pe, te) = (embed(&past), embed(&target));
        let inputs = PredictionInputs { target: &target, past: Some(&past), target_embeddings: Some(&te), past_embeddings: Some(&pe) };
        let dir = tempfile::tempdir().unwrap();
        for kind in [PromptKind::Nc, PromptKind::Rag, PromptKind::RagSb, PromptKind::Ic] {
            let rec = run_campaign_prediction(&client(dir.path(), LlmMode::Record), &variant(kind), inputs, &PipelineOptions::default()).unwrap();
            let rep = run_campaign_prediction(&client(dir.path(), LlmMode::Replay), &variant(kind), inputs, &PipelineOptions::default()).unwrap();
            assert_eq!(rec, rep);
            assert_eq!(rec.records.len(), 20);
            assert!(rec.complete);
            let store = client(dir.path(), LlmMode::Replay);
            for r in &rec.records {
                assert!(store.store().unwrap().contains(r.prompt_hash.as_ref().unwrap()));
            }
        }
    }

    #[test]
    fn replay_without_fixtures_fails_loudly() {
        let (past, target) = synthetic_pair(&SyntheticSpec { projects: 5, ..SyntheticSpec::default() }, 5, 8);
        let dir = tempfile::tempdir().unwrap();
        let inputs = PredictionInputs { target: &target, past: Some(&past), target_embeddings: None, past_embeddings: None };
        let err = run_campaign_prediction(&client(dir.path(), LlmMode::Replay), &variant(PromptKind::Ic), inputs, &PipelineOptions::default()).unwrap_err();
        assert!(matches!(err, LlmError::MissingFixture { .. }));
    }

    struct Stubborn;
    impl ChatBackend for Stubborn {
        fn model(&self) -> String {
            "stubborn".into()
        }
        fn complete(&self, prompt: &str, _: &LlmConfig) -> Result<Completion, LlmError> {
            let text = if prompt.contains("Title: Odd") { "I cannot answer".to_string() } else { "PREDICTION: 10".to_string() };
            Ok(Completion { text, prompt_tokens: 0, completion_tokens: 0 })
        }
    }

    #[test]
    fn unreadable_answers_become_gaps_after_one_retry() {
        let (_, mut target) = synthetic_pair(&SyntheticSpec { projects: 5, ..SyntheticSpec::default() }, 5, 8);
        target.projects[2].title = "Odd".into();
        let cfg = LlmConfig { mode: LlmMode::Live, ..LlmConfig::default() };
        let c = LlmClient::new(cfg, Some(Box::new(Stubborn))).unwrap();
        let inputs = PredictionInputs { target: &target, past: None, target_embeddings: None, past_embeddings: None };
        let run = run_campaign_prediction(&c, &variant(PromptKind::Nc), inputs, &PipelineOptions::default()).unwrap();
        assert_eq!(run.gap_count(), 1);
        let gap = &run.records[2];
        assert_eq!(gap.response.as_deref(), Some("I cannot answer"));
        assert!(gap.prompt.as_ref().unwrap().contains("could not be read"));
        // One gap in five is above the 10% limit.
        assert!(!run.complete);
    }

    #[test]
    fn argument_checks() {
        let (past, mut target) = synthetic_pair(&SyntheticSpec { projects: 5, ..SyntheticSpec::default() }, 5, 8);
        let dir = tempfile::tempdir().unwrap();
        let c = client(dir.path(), LlmMode::Replay);
        let no_emb = PredictionInputs { target: &target, past: Some(&past), target_embeddings: None, past_embeddings: None };
        assert!(matches!(run_campaign_prediction(&c, &variant(PromptKind::Rag), no_emb, &PipelineOptions::default()), Err(LlmError::Invalid(_))));
        let fr = PromptVariant { language: "fr".into(), ..variant(PromptKind::Nc) };
        assert!(run_campaign_prediction(&c, &fr, no_emb, &PipelineOptions::default()).is_err());
        target.projects.clear();
        let empty = PredictionInputs { target: &target, past: None, target_embeddings: None, past_embeddings: None };
        assert!(run_campaign_prediction(&c, &variant(PromptKind::Nc), empty, &PipelineOptions::default()).is_err());
    }
}
