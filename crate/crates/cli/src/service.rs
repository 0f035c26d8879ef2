//! JSON API for the companion UI: campaigns, rankings, evaluation reports
//! and what-if predictions.
//!
//! | Method | Path | Body |
//! |---|---|---|
//! | GET | `/api/health` | status, campaign count, loaded models, LLM mode |
//! | GET | `/api/campaigns` | campaign summaries |
//! | GET | `/api/campaigns/{id}` | projects, real ranking, latest predicted ranking per model |
//! | GET | `/api/campaigns/{id}/reports` | stored evaluation reports |
//! | GET | `/api/campaigns/{id}/reports/{model}/series.csv` | plot series |
//! | POST | `/api/whatif` | [`WhatIfRequest`] → [`WhatIfResponse`] |
//!
//! Errors are `{"error": {"code", "message", "details"}}`.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::json;
use tower_http::cors::CorsLayer;

use pbforecast::data::{Campaign, ModelId, PredictionRun};
use pbforecast::features::{Embedder, FeatureVector};
use pbforecast::llm::{LlmClient, LlmMode, PromptKind, PromptVariant};
use pbforecast::metrics::{rank_by_values, rank_projects, TieBreak};
use pbforecast::models::{ClassicalModel, ModelKind};
use pbforecast::whatif::{insert_draft, PredictionSource, Provenance, WhatIfRequest, WhatIfResponse};

use crate::commands::load_reports;
use crate::error::{CliError, ErrorKind};
use crate::forecast::{classical_draft, encode_for_model, llm_draft, LlmContext};
use crate::workspace::Workspace;

/// Seconds a client should wait before retrying when the LLM is unavailable.
pub const RETRY_AFTER_SECS: u64 = 30;

/// A frozen classical model with the campaign it serves already encoded.
pub struct LoadedModel {
    pub model: ClassicalModel,
    pub path: String,
    pub embedder: Box<dyn Embedder>,
    pub features: Vec<FeatureVector>,
}

/// Read-only state shared by all requests.
pub struct AppState {
    pub ws: Workspace,
    pub campaigns: BTreeMap<String, Campaign>,
    pub models: BTreeMap<(String, ModelKind), LoadedModel>,
    /// `None` when no client could be built (e.g. replay without fixtures dir).
    pub llm: Option<LlmClient>,
}

impl AppState {
    /// Loads every campaign and every fitted model matching a campaign's
    /// default training pair.
    pub fn load(ws: Workspace) -> Result<Self, CliError> {
        let mut campaigns = BTreeMap::new();
        for id in ws.campaign_ids() {
            campaigns.insert(id.clone(), ws.load(&id)?);
        }
        let mut models = BTreeMap::new();
        for (id, campaign) in &campaigns {
            let Ok(train) = ws.default_train(id) else { continue };
            for kind in [ModelKind::Pvm, ModelKind::Knn] {
                let path = ws.model_path(&train, kind);
                if !path.is_file() {
                    continue;
                }
                let model = ws.load_model(&path)?;
                let (embedder, features) = encode_for_model(&ws, &model, campaign)?;
                log::info!("serving {kind} for {id} from {}", path.display());
                models.insert(
                    (id.clone(), kind),
                    LoadedModel { model, path: path.display().to_string(), embedder, features },
                );
            }
        }
        let llm = match ws.llm_client() {
            Ok(c) => Some(c),
            Err(e) => {
                log::warn!("LLM variants unavailable: {e}");
                None
            }
        };
        Ok(AppState { ws, campaigns, models, llm })
    }

    fn campaign(&self, id: &str) -> Result<&Campaign, ApiError> {
        self.campaigns
            .get(id)
            .ok_or_else(|| ApiError::from(CliError::not_found(format!("unknown campaign {id:?}"))))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/campaigns", get(list_campaigns))
        .route("/api/campaigns/{id}", get(get_campaign))
        .route("/api/campaigns/{id}/reports", get(get_reports))
        .route("/api/campaigns/{id}/reports/{model}/series.csv", get(get_series))
        .route("/api/whatif", post(whatif))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

pub async fn serve(state: AppState, addr: &str) -> Result<(), CliError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| CliError::new(ErrorKind::Data, format!("cannot bind {addr}: {e}")))?;
    log::info!("listening on {addr}");
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::new(ErrorKind::Internal, e.to_string()))
}

/// An HTTP error with a JSON body.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub error: CliError,
    pub retry_after: Option<u64>,
}

impl ApiError {
    fn new(status: StatusCode, error: CliError) -> Self {
        ApiError { status, error, retry_after: None }
    }
}

impl From<CliError> for ApiError {
    fn from(error: CliError) -> Self {
        let status = match error.kind {
            ErrorKind::Usage | ErrorKind::Validation => StatusCode::BAD_REQUEST,
            ErrorKind::NotFound => StatusCode::NOT_FOUND,
            ErrorKind::MissingFixture => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorKind::Provider => StatusCode::SERVICE_UNAVAILABLE,
            ErrorKind::Incomplete | ErrorKind::Data | ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let mut e = ApiError::new(status, error);
        if status == StatusCode::SERVICE_UNAVAILABLE {
            e.retry_after = Some(RETRY_AFTER_SECS);
        }
        e
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": {
            "code": self.error.kind,
            "message": self.error.message,
            "details": self.error.details,
        }});
        let mut response = (self.status, Json(body)).into_response();
        if let Some(secs) = self.retry_after {
            response.headers_mut().insert(header::RETRY_AFTER, HeaderValue::from(secs));
        }
        response
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Serialize)]
struct CampaignSummary {
    id: String,
    city: String,
    year: i32,
    language: String,
    translated: bool,
    currency: String,
    budget: f64,
    projects: usize,
    voters: u64,
    total_votes: u64,
    max_approvals: u32,
}

fn summary(c: &Campaign) -> CampaignSummary {
    CampaignSummary {
        id: c.id(),
        city: c.meta.city.clone(),
        year: c.meta.year,
        language: c.meta.language.clone(),
        translated: c.meta.translated,
        currency: c.meta.currency.clone(),
        budget: c.meta.budget.as_major_f64(),
        projects: c.len(),
        voters: c.meta.voters,
        total_votes: c.meta.total_votes,
        max_approvals: c.meta.max_approvals,
    }
}

async fn health(State(s): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let models: Vec<String> = s.models.keys().map(|(c, k)| format!("{c}:{k}")).collect();
    Json(json!({
        "status": "ok",
        "campaigns": s.campaigns.len(),
        "models": models,
        "llm": s.llm.as_ref().map(|c| json!({ "mode": c.config().mode, "model": c.config().model })),
    }))
}

async fn list_campaigns(State(s): State<Arc<AppState>>) -> Json<Vec<CampaignSummary>> {
    Json(s.campaigns.values().map(summary).collect())
}

#[derive(Serialize)]
struct ProjectView<'a> {
    id: &'a str,
    title: &'a str,
    description: &'a str,
    category: &'a str,
    cost: f64,
    district: &'a str,
    votes: Option<u64>,
}

#[derive(Serialize)]
struct PredictedRanking {
    model: ModelId,
    run_id: Option<String>,
    complete: bool,
    /// Aligned with `projects`.
    predicted_votes: Vec<Option<f64>>,
    ranking: Vec<String>,
}

fn ids_in_order(c: &Campaign, order: &[usize]) -> Vec<String> {
    order.iter().map(|&i| c.projects[i].id.clone()).collect()
}

async fn get_campaign(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let c = s.campaign(&id)?;
    let tb = TieBreak::from_campaign(c);
    let real_ranking = c.real_votes().map(|v| ids_in_order(c, &rank_by_values(&v, &tb)));
    let runs: Vec<PredictionRun> = s
        .ws
        .run_store()
        .and_then(|store| Ok(store.latest_per_model(&id)?))
        .map_err(ApiError::from)?
        .into_iter()
        .filter(|r| r.check_against(c).is_ok())
        .collect();
    let predicted: Vec<PredictedRanking> = runs
        .into_iter()
        .map(|r| {
            let values = r.predictions();
            PredictedRanking {
                model: r.model,
                run_id: r.run_id(),
                complete: r.complete,
                ranking: ids_in_order(c, &rank_projects(&values, &tb)),
                predicted_votes: values,
            }
        })
        .collect();
    let projects: Vec<ProjectView> = c
        .projects
        .iter()
        .map(|p| ProjectView {
            id: &p.id,
            title: &p.title,
            description: &p.description,
            category: &p.category,
            cost: p.cost.as_major_f64(),
            district: &p.district,
            votes: p.votes,
        })
        .collect();
    Ok(Json(json!({
        "campaign": summary(c),
        "projects": projects,
        "real_ranking": real_ranking,
        "predicted_rankings": predicted,
    })))
}

async fn get_reports(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    s.campaign(&id)?;
    let reports = load_reports(&s.ws, &id)?;
    Ok(Json(json!({ "campaign": id, "reports": reports })))
}

async fn get_series(State(s): State<Arc<AppState>>, Path((id, model)): Path<(String, String)>) -> ApiResult<Response> {
    s.campaign(&id)?;
    let model: ModelId = model.parse().map_err(|e: pbforecast::data::UnknownModel| {
        ApiError::from(CliError::usage(e.to_string()))
    })?;
    let report = load_reports(&s.ws, &id)?
        .into_iter()
        .find(|r| r.model == model)
        .ok_or_else(|| CliError::not_found(format!("no {model} report for {id:?}")))?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], report.series_csv()).into_response())
}

async fn whatif(State(s): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<WhatIfResponse>> {
    let request: WhatIfRequest = serde_json::from_slice(&body).map_err(|e| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            CliError::new(ErrorKind::Usage, format!("malformed request: {e}"))
                .with_details(json!({ "line": e.line(), "column": e.column() })),
        )
    })?;
    let state = s.clone();
    tokio::task::spawn_blocking(move || whatif_blocking(&state, &request))
        .await
        .map_err(|e| ApiError::from(CliError::new(ErrorKind::Internal, e.to_string())))?
        .map(Json)
}

/// Computes a what-if answer. Blocking: may embed text or call the LLM.
pub fn whatif_blocking(s: &AppState, request: &WhatIfRequest) -> ApiResult<WhatIfResponse> {
    let violations = request.draft.violations();
    if !violations.is_empty() {
        return Err(CliError::new(ErrorKind::Validation, "draft project is invalid")
            .with_details(serde_json::to_value(&violations).unwrap_or_default())
            .into());
    }
    let campaign = s.campaign(&request.campaign)?;
    let run = s
        .ws
        .run_store()
        .and_then(|store| Ok(store.latest(&request.campaign, request.model)?))?
        .ok_or_else(|| {
            CliError::not_found(format!("no stored {} run for {:?} to rank against", request.model, request.campaign))
        })?;
    if let Err(e) = run.check_against(campaign) {
        return Err(CliError::new(ErrorKind::Data, format!("stored run does not match campaign: {e}")).into());
    }

    let (predicted, provenance) = match request.model {
        ModelId::Pvm | ModelId::Knn => {
            let kind = if request.model == ModelId::Pvm { ModelKind::Pvm } else { ModelKind::Knn };
            let loaded = s.models.get(&(request.campaign.clone(), kind)).ok_or_else(|| {
                CliError::not_found(format!("no frozen {kind} model for {:?}", request.campaign))
            })?;
            let v = classical_draft(&loaded.model, &*loaded.embedder, campaign, &loaded.features, &request.draft)?;
            (v, Provenance { source: PredictionSource::FrozenModel, ranking_run_id: run.run_id(), detail: loaded.path.clone() })
        }
        ModelId::Null => return Err(CliError::usage("the null predictor cannot score a draft").into()),
        llm => {
            let client = s.llm.as_ref().ok_or_else(|| {
                ApiError::from(CliError::new(ErrorKind::Provider, "LLM client is not configured"))
            })?;
            let kind = PromptKind::from_model_id(llm).expect("remaining ids are LLM variants");
            let variant = PromptVariant {
                kind,
                reasoning: Default::default(),
                language: request.language.clone().unwrap_or_else(|| campaign.meta.language.clone()),
            };
            let ctx = LlmContext::build(&s.ws, kind, campaign, None)?;
            let v = llm_draft(client, &variant, &ctx, campaign, &s.ws.settings.pipeline, &request.draft)
?
                .ok_or_else(|| {
                    ApiError::new(
                        StatusCode::BAD_GATEWAY,
                        CliError::new(ErrorKind::Provider, "the model's answer contained no usable prediction"),
                    )
                })?;
            let source = match client.config().mode {
                LlmMode::Replay => PredictionSource::LlmReplay,
                _ => PredictionSource::LlmLive,
            };
            (v, Provenance { source, ranking_run_id: run.run_id(), detail: client.config().model.clone() })
        }
    };
    Ok(insert_draft(campaign, &run, &request.draft, predicted, provenance))
}
