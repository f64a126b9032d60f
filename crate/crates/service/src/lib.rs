//! HTTP JSON API for running a live batch against the decision engine.
//!
//! All routes live under `/v1`:
//!
//! | method | path | |
//! |---|---|---|
//! | GET  | `/v1/health` | liveness |
//! | POST | `/v1/sessions` | create from a config plus historical data or a prior |
//! | GET  | `/v1/sessions/{id}` | full session document |
//! | POST | `/v1/sessions/{id}/observe` | ingest the next measured `(p, i)` |
//! | GET  | `/v1/sessions/{id}/recommendation` | `?mode=planner\|myopic&resample=n&p=&i=` |
//! | GET  | `/v1/sessions/{id}/boundary` | `?format=json\|csv&points=n` |
//! | POST | `/v1/sessions/{id}/harvest` | end the batch |
//!
//! Errors are `{code, message, field?}` with status 400 (bad input), 401,
//! 404 (unknown session), 409 (session state forbids the call) or 422
//! (well-formed but unusable input, e.g. too little data for a rule).

pub mod error;
pub mod store;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use harvest_core::config::ExperimentConfig;
use harvest_core::learning::fit_improper;
use harvest_core::myopic::{default_p_grid, trace_boundary, Beliefs, HarvestBoundary, DEFAULT_BOUNDARY_POINTS, DEFAULT_BOUNDARY_TOL};
use harvest_core::planner::recommend;
use harvest_core::{
    Channel, HyperState, KnowledgeState, Observation, PhysicalState, RecommendMode, Recommendation, TerminalClass,
};

pub use error::{ApiError, ErrorBody};
pub use store::{HarvestOutcome, LogEntry, Session, Store, VarianceDecomposition};

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    /// When set, every request must carry `Authorization: Bearer <token>`.
    pub token: Option<String>,
    /// Used by sessions created without a `config`.
    pub default_config: ExperimentConfig,
}

impl AppState {
    pub fn new(store: Store) -> Self {
        Self { store: Arc::new(store), token: None, default_config: ExperimentConfig::default() }
    }

    pub fn with_default_config(mut self, config: ExperimentConfig) -> Self {
        self.default_config = config;
        self
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/observe", post(observe))
        .route("/v1/sessions/{id}/recommendation", get(recommendation))
        .route("/v1/sessions/{id}/boundary", get(boundary))
        .route("/v1/sessions/{id}/harvest", post(harvest))
        .layer(middleware::from_fn_with_state(state.clone(), auth))
        .with_state(state)
}

/// Bind and serve until the process is stopped.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

async fn auth(State(state): State<AppState>, headers: HeaderMap, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let ok = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|v| v == token);
        if !ok {
            return ApiError::unauthorized().into_response();
        }
    }
    next.run(req).await
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed JSON: {e}"), None))
}

fn session(state: &AppState, id: &str) -> Result<store::SessionHandle, ApiError> {
    state.store.get(id).ok_or_else(|| ApiError::not_found(id))
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok"}))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CreateRequest {
    pub config: Option<ExperimentConfig>,
    pub prior: Option<KnowledgeState>,
    pub historical_data: Option<Vec<Observation>>,
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateResponse {
    pub id: String,
    pub seed: u64,
    pub initial_state: HyperState,
    pub variance_decomposition: Option<VarianceDecomposition>,
}

/// Starting knowledge: the prior (if any) updated with the data (if any).
fn initial_knowledge(req: &CreateRequest) -> Result<KnowledgeState, ApiError> {
    if let Some(prior) = &req.prior {
        prior.validate().map_err(|e| ApiError::from(e.within("prior")))?;
        for c in Channel::BOTH {
            let n = prior.channel(c);
            if !(n.nu > 0.0 && n.lambda > 0.0 && n.beta > 0.0) {
                return Err(ApiError::bad_request(
                    format!("prior must be proper: {} channel needs nu, lambda, beta > 0", c.name()),
                    Some("prior"),
                ));
            }
        }
        let data = req.historical_data.as_deref().unwrap_or(&[]);
        return Ok(prior.update_all(data));
    }
    match req.historical_data.as_deref() {
        None => Err(ApiError::bad_request(
            "provide historical_data (at least 3 observations) or a proper prior",
            Some("historical_data"),
        )),
        Some(data) if data.len() < 3 => Err(ApiError::bad_request(
            format!(
                "J0 = {} gives lambda = {}; the predictive needs lambda > 1 (at least 3 observations)",
                data.len(),
                data.len() as f64 / 2.0
            ),
            Some("historical_data"),
        )),
        Some(data) => {
            if data.iter().any(|o| !(o.phi.is_finite() && o.psi.is_finite())) {
                return Err(ApiError::bad_request("observations must be finite", Some("historical_data")));
            }
            Ok(fit_improper(data)?)
        }
    }
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let req: CreateRequest = parse(&body)?;
    let config = req.config.clone().unwrap_or_else(|| state.default_config.clone());
    config.validate()?;
    let k = initial_knowledge(&req)?;
    let seed = req.seed.unwrap_or(config.planner.seed);
    let s = Session::new(config, k, seed);
    let resp = CreateResponse {
        id: s.id.clone(),
        seed,
        initial_state: s.state,
        variance_decomposition: VarianceDecomposition::of(&k),
    };
    state.store.insert(s)?;
    Ok((StatusCode::CREATED, Json(resp)))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Session>, ApiError> {
    let h = session(&state, &id)?;
    let s = h.lock().await;
    Ok(Json(s.clone()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserveRequest {
    pub p_next: f64,
    pub i_next: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ObserveResponse {
    pub epoch: u32,
    pub observation: Observation,
    pub state: PhysicalState,
    pub class: TerminalClass,
    pub knowledge: KnowledgeState,
    pub variance_decomposition: Option<VarianceDecomposition>,
}

async fn observe(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<ObserveResponse>, ApiError> {
    let h = session(&state, &id)?;
    let req: ObserveRequest = parse(&body)?;
    let mut s = h.lock().await;
    let mut next = s.clone();
    let entry = next.observe(req.p_next, req.i_next)?;
    state.store.persist(&next)?;
    *s = next;
    let (clamped, class) = s.current();
    Ok(Json(ObserveResponse {
        epoch: entry.epoch,
        observation: entry.observation,
        state: clamped,
        class,
        knowledge: s.state.knowledge,
        variance_decomposition: VarianceDecomposition::of(&s.state.knowledge),
    }))
}

#[derive(Debug, Default, Deserialize)]
pub struct RecommendationQuery {
    #[serde(default)]
    pub mode: RecommendMode,
    /// Non-zero draws a fresh planner sample instead of the session-fixed one.
    #[serde(default)]
    pub resample: u64,
    /// What-if protein amount; replaces the current state without committing.
    pub p: Option<f64>,
    pub i: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RecommendationResponse {
    pub epoch: u32,
    pub mode: RecommendMode,
    pub state: PhysicalState,
    #[serde(flatten)]
    pub recommendation: Recommendation,
}

async fn recommendation(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<RecommendationQuery>,
) -> Result<Json<RecommendationResponse>, ApiError> {
    let h = session(&state, &id)?;
    let s = h.lock().await.clone();
    if !s.is_live() {
        return Err(ApiError::conflict("session already harvested"));
    }
    let mut hyper = s.state;
    for (field, v) in [("p", q.p), ("i", q.i)] {
        if let Some(v) = v {
            if !(v.is_finite() && v > 0.0) {
                return Err(ApiError::unprocessable(format!("{field} must be a positive number"), Some(field)));
            }
        }
    }
    hyper.physical = PhysicalState::new(q.p.unwrap_or(hyper.physical.p), q.i.unwrap_or(hyper.physical.i));
    let state = harvest_core::model::clamp_and_classify(&hyper.physical, hyper.t, &s.config.limits).0;
    let rec = tokio::task::spawn_blocking(move || {
        let c = &s.config;
        recommend(&hyper, &c.planner, q.mode, Some(&c.truth), &c.economics, &c.limits, s.seed, q.resample)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(RecommendationResponse { epoch: hyper.t, mode: q.mode, state, recommendation: rec }))
}

#[derive(Debug, Default, Deserialize)]
pub struct BoundaryQuery {
    pub format: Option<String>,
    pub points: Option<usize>,
}

async fn boundary(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<BoundaryQuery>,
) -> Result<Response, ApiError> {
    let h = session(&state, &id)?;
    let s = h.lock().await.clone();
    let n = q.points.unwrap_or(DEFAULT_BOUNDARY_POINTS);
    if !(2..=2000).contains(&n) {
        return Err(ApiError::bad_request("points must lie in 2..=2000", Some("points")));
    }
    let b: HarvestBoundary = tokio::task::spawn_blocking(move || {
        let c = &s.config;
        let grid = default_p_grid(&c.limits, n);
        trace_boundary(&Beliefs::Knowledge(s.state.knowledge), &c.economics, &c.limits, &grid, DEFAULT_BOUNDARY_TOL)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    match q.format.as_deref() {
        None | Some("json") => Ok(Json(b).into_response()),
        Some("csv") => Ok(([(header::CONTENT_TYPE, "text/csv")], b.to_csv()).into_response()),
        Some(other) => Err(ApiError::bad_request(format!("unknown format {other}"), Some("format"))),
    }
}

async fn harvest(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<HarvestOutcome>, ApiError> {
    let h = session(&state, &id)?;
    let mut s = h.lock().await;
    let mut next = s.clone();
    let out = next.harvest()?;
    state.store.persist(&next)?;
    *s = next;
    Ok(Json(out))
}
