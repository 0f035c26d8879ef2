//! Fitting and prediction steps shared by the commands and the service.

use pbforecast::data::{Campaign, ModelId, PredictionRecord, PredictionRun, RunConfig};
use pbforecast::features::{build_features, embed_descriptions, encode_campaign, Embedder, FeatureSchema, FeatureVector};
use pbforecast::llm::{
    predict_project, run_campaign_prediction, LlmClient, PipelineOptions, PredictionInputs, PromptKind, PromptVariant,
};
use pbforecast::models::{train_classical, ClassicalModel, ClassicalOptions, ModelKind, Predictor};
use pbforecast::whatif::DraftProject;

use crate::error::{CliError, CliResult};
use crate::workspace::Workspace;

/// PCA dimension for `kind`: the explicit value, else the configured choice
/// for the evaluation campaign.
pub fn resolve_dim(ws: &Workspace, kind: ModelKind, explicit: Option<usize>, eval: Option<&str>) -> CliResult<usize> {
    explicit
        .or_else(|| eval.and_then(|e| ws.settings.pca_dims.get(e)).and_then(|d| d.get(kind)))
        .ok_or_else(|| {
            CliError::usage(format!(
                "no PCA dimension for {kind}{}; pass --dim or run `select-dim`",
                eval.map(|e| format!(" on {e}")).unwrap_or_default()
            ))
        })
}

/// Embeds and encodes the training campaign under a schema fitted on it.
pub fn encode_train(train: &Campaign, embedder: &dyn Embedder, max_in_flight: usize) -> CliResult<(FeatureSchema, Vec<FeatureVector>)> {
    let embeddings = embed_descriptions(train, embedder, max_in_flight)?;
    let dim = embeddings.first().map_or(0, Vec::len);
    let schema = FeatureSchema::fit(train, dim);
    let features = build_features(train, &schema, &embeddings)?;
    Ok((schema, features))
}

/// Fits a classical model on `train` and writes it to the models directory.
pub fn fit_and_save(ws: &Workspace, train_id: &str, kind: ModelKind, dim: usize, k: Option<usize>) -> CliResult<ClassicalModel> {
    let train = ws.load(train_id)?;
    let embedder = ws.embedder()?;
    let (schema, features) = encode_train(&train, &*embedder, ws.settings.embedding.max_in_flight)?;
    let options = ClassicalOptions { k, ..ClassicalOptions::default() };
    let model = train_classical(kind, &train, &features, schema, ws.settings.embedding.clone(), dim, &options)?;
    let path = ws.model_path(train_id, kind);
    std::fs::create_dir_all(&ws.settings.models_dir)?;
    model.save(&path)?;
    log::info!("saved {kind} model (PCA {dim}) to {}", path.display());
    Ok(model)
}

/// Encodes `campaign` for a fitted model.
pub fn encode_for_model(ws: &Workspace, model: &ClassicalModel, campaign: &Campaign) -> CliResult<(Box<dyn Embedder>, Vec<FeatureVector>)> {
    let embedder = ws.embedder_for(&model.embedding)?;
    let features = encode_campaign(campaign, &model.space.schema, &*embedder, ws.settings.embedding.max_in_flight)?;
    Ok((embedder, features))
}

pub fn classical_run(ws: &Workspace, model: &ClassicalModel, target: &Campaign) -> CliResult<PredictionRun> {
    let (_, features) = encode_for_model(ws, model, target)?;
    let predictions = model.predict(&features, target.meta.total_votes as f64)?;
    let records = target
        .projects
        .iter()
        .zip(predictions)
        .map(|(p, v)| PredictionRecord::value(p.id.clone(), v))
        .collect();
    let config = RunConfig {
        train_campaign: Some(model.train_campaign.clone()),
        pca_dim: Some(model.pca_dim()),
        k_neighbors: match &model.predictor {
            Predictor::Knn(m) => Some(m.k()),
            Predictor::Pvm(_) => None,
        },
        embedding: Some(model.embedding.describe()),
        ..RunConfig::default()
    };
    Ok(PredictionRun::new(target, model.kind().model_id(), records, config))
}

/// Campaign context for an LLM variant: the past campaign and, for the RAG
/// variants, description embeddings of both campaigns.
pub struct LlmContext {
    pub past: Option<Campaign>,
    pub target_embeddings: Option<Vec<Vec<f64>>>,
    pub past_embeddings: Option<Vec<Vec<f64>>>,
    pub embedder: Option<Box<dyn Embedder>>,
}

impl LlmContext {
    pub fn build(ws: &Workspace, kind: PromptKind, target: &Campaign, train: Option<&str>) -> CliResult<Self> {
        let past = match kind {
            PromptKind::Nc => None,
            _ => Some(ws.load(&ws.train_for(&target.id(), train)?)?),
        };
        let mut ctx = LlmContext { past, target_embeddings: None, past_embeddings: None, embedder: None };
        if matches!(kind, PromptKind::Rag | PromptKind::RagSb) {
            let embedder = ws.embedder()?;
            let n = ws.settings.embedding.max_in_flight;
            ctx.target_embeddings = Some(embed_descriptions(target, &*embedder, n)?);
            ctx.past_embeddings = Some(embed_descriptions(ctx.past.as_ref().expect("set above"), &*embedder, n)?);
            ctx.embedder = Some(embedder);
        }
        Ok(ctx)
    }

    pub fn inputs<'a>(&'a self, target: &'a Campaign) -> PredictionInputs<'a> {
        PredictionInputs {
            target,
            past: self.past.as_ref(),
            target_embeddings: self.target_embeddings.as_deref(),
            past_embeddings: self.past_embeddings.as_deref(),
        }
    }
}

pub fn llm_run(
    ws: &Workspace,
    client: &LlmClient,
    variant: &PromptVariant,
    target: &Campaign,
    train: Option<&str>,
    options: &PipelineOptions,
) -> CliResult<PredictionRun> {
    let ctx = LlmContext::build(ws, variant.kind, target, train)?;
    let mut run = run_campaign_prediction(client, variant, ctx.inputs(target), options)?;
    if ctx.embedder.is_some() {
        run.config.embedding = Some(ws.settings.embedding.describe());
    }
    Ok(run)
}

/// Classical prediction for a draft scored alongside the campaign.
pub fn classical_draft(
    model: &ClassicalModel,
    embedder: &dyn Embedder,
    campaign: &Campaign,
    campaign_features: &[FeatureVector],
    draft: &DraftProject,
) -> CliResult<f64> {
    let embedding = embedder.embed(&draft.description)?;
    let features = model.space.schema.encode(&draft.to_project(), &embedding)?;
    Ok(model.predict_extra(campaign_features, &features, campaign.meta.total_votes as f64)?)
}

/// LLM prediction for a draft. `None` means the answer held no usable number.
pub fn llm_draft(
    client: &LlmClient,
    variant: &PromptVariant,
    ctx: &LlmContext,
    campaign: &Campaign,
    options: &PipelineOptions,
    draft: &DraftProject,
) -> CliResult<Option<f64>> {
    let embedding = match &ctx.embedder {
        Some(e) => Some(e.embed(&draft.description)?),
        None => None,
    };
    let record = predict_project(client, variant, &ctx.inputs(campaign), options, &draft.to_project(), embedding.as_deref())?;
    Ok(record.predicted_votes)
}

pub fn parse_model(s: &str) -> Result<ModelId, String> {
    s.parse::<ModelId>().map_err(|e| e.to_string())
}
