//! JSON-over-HTTP front end.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tickscope_core::classify::{FeedbackEvent, TargetField};
use tickscope_core::ingest::IngestConfig;

use crate::engine::{
    CorrelationRequest, CvRequest, Engine, Envelope, FieldsUpdate, PrecisionRequest, RecommendRequest,
    SearchRequest, ThemesRequest,
};
use crate::error::ApiError;

pub const OPENAPI: &str = include_str!("openapi.json");

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

/// JSON body whose rejections use the API error shape.
pub struct ApiJson<T>(pub T);

impl<S, T> FromRequest<S> for ApiJson<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(ApiJson(v)),
            Err(rejection) => Err(json_rejection(rejection)),
        }
    }
}

fn json_rejection(rejection: JsonRejection) -> ApiError {
    ApiError::malformed(rejection.body_text())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub kind: String,
    pub state: JobState,
    pub submitted_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    /// The envelope the synchronous call would have returned.
    pub result: Option<Value>,
    pub error: Option<ApiError>,
}

#[derive(Clone)]
pub struct AppState {
    engine: Arc<Engine>,
    jobs: Arc<Mutex<BTreeMap<String, Job>>>,
    next_job: Arc<AtomicU64>,
}

impl AppState {
    pub fn new(engine: Arc<Engine>) -> Self {
        Self {
            engine,
            jobs: Arc::default(),
            next_job: Arc::new(AtomicU64::new(1)),
        }
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }

    fn large(&self) -> bool {
        self.engine
            .corpus_size()
            .is_some_and(|n| n > self.engine.settings().sync_limit)
    }

    /// Runs `work` in the background and answers 202 with the job handle.
    fn submit<T, F>(&self, kind: &str, work: F) -> Response
    where
        T: Serialize,
        F: FnOnce(&Engine) -> Result<Envelope<T>, ApiError> + Send + 'static,
    {
        let id = format!("job-{}", self.next_job.fetch_add(1, Ordering::Relaxed));
        let job = Job {
            id: id.clone(),
            kind: kind.to_string(),
            state: JobState::Running,
            submitted_at: Utc::now(),
            finished_at: None,
            result: None,
            error: None,
        };
        self.jobs.lock().unwrap().insert(id.clone(), job.clone());
        let engine = self.engine.clone();
        let jobs = self.jobs.clone();
        let job_id = id.clone();
        tokio::task::spawn_blocking(move || {
            let outcome = work(&engine);
            let mut jobs = jobs.lock().unwrap();
            let job = jobs.get_mut(&job_id).expect("job registered");
            job.finished_at = Some(Utc::now());
            match outcome.and_then(|env| serde_json::to_value(env).map_err(|e| ApiError::internal(e.to_string()))) {
                Ok(v) => {
                    job.state = JobState::Succeeded;
                    job.result = Some(v);
                }
                Err(e) => {
                    job.state = JobState::Failed;
                    job.error = Some(e);
                }
            }
        });
        (
            StatusCode::ACCEPTED,
            [(header::LOCATION, format!("/jobs/{id}"))],
            Json(job),
        )
            .into_response()
    }
}

async fn blocking<T, F>(state: &AppState, work: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&Engine) -> Result<T, ApiError> + Send + 'static,
{
    let engine = state.engine.clone();
    tokio::task::spawn_blocking(move || work(&engine))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

fn ok<T: Serialize>(status: StatusCode, result: Result<T, ApiError>) -> Response {
    match result {
        Ok(body) => (status, Json(body)).into_response(),
        Err(e) => e.into_response(),
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/config/fields", put(put_fields))
        .route("/ingest", post(post_ingest))
        .route("/search", post(post_search))
        .route("/recommend/{target}", post(post_recommend))
        .route("/feedback", post(post_feedback))
        .route("/themes", post(post_themes))
        .route("/themes/pair", get(get_theme_pair))
        .route("/evaluate/{kind}", post(post_evaluate))
        .route("/versions", get(get_versions))
        .route("/jobs/{id}", get(get_job))
        .route("/openapi.json", get(get_openapi))
        .fallback(|| async { ApiError::new(404, "UnknownResource", "no such endpoint") })
        .with_state(state)
}

async fn put_fields(State(state): State<AppState>, ApiJson(body): ApiJson<FieldsUpdate>) -> Response {
    ok(StatusCode::OK, blocking(&state, move |e| e.set_fields(body)).await)
}

async fn post_ingest(State(state): State<AppState>, multipart: Multipart) -> Response {
    let (bytes, config, seed) = match read_ingest_form(multipart).await {
        Ok(parts) => parts,
        Err(e) => return e.into_response(),
    };
    let pending = match blocking(&state, move |e| e.prepare_ingest(&bytes, &config, seed)).await {
        Ok(p) => p,
        Err(e) => return e.into_response(),
    };
    if pending.ticket_count() > state.engine.settings().sync_limit {
        return state.submit("ingest", move |e| e.finish_ingest(pending));
    }
    ok(StatusCode::OK, blocking(&state, move |e| e.finish_ingest(pending)).await)
}

async fn read_ingest_form(mut form: Multipart) -> Result<(Vec<u8>, IngestConfig, Option<u64>), ApiError> {
    let mut file = None;
    let mut config = IngestConfig::default();
    let mut seed = None;
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ApiError::malformed(e.body_text()))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let data = field.bytes().await.map_err(|e| ApiError::malformed(e.body_text()))?;
        match name.as_str() {
            "file" => file = Some(data.to_vec()),
            "config" => {
                config = serde_json::from_slice(&data)
                    .map_err(|e| ApiError::malformed(format!("config: {e}")).with_field("config"))?
            }
            "seed" => {
                let text = String::from_utf8_lossy(&data);
                seed = Some(
                    text.trim()
                        .parse()
                        .map_err(|_| ApiError::malformed(format!("seed {text:?} is not an integer")).with_field("seed"))?,
                )
            }
            other => return Err(ApiError::malformed(format!("unexpected form field {other:?}")).with_field(other)),
        }
    }
    let file = file.ok_or_else(|| ApiError::malformed("missing file part").with_field("file"))?;
    Ok((file, config, seed))
}

async fn post_search(State(state): State<AppState>, ApiJson(body): ApiJson<SearchRequest>) -> Response {
    ok(StatusCode::OK, blocking(&state, move |e| e.search(&body)).await)
}

fn parse_target(raw: &str) -> Result<TargetField, ApiError> {
    raw.parse()
        .map_err(|msg: String| ApiError::new(404, "UnknownTarget", msg).with_field("target"))
}

async fn post_recommend(
    State(state): State<AppState>,
    Path(target): Path<String>,
    ApiJson(body): ApiJson<RecommendRequest>,
) -> Response {
    let target = match parse_target(&target) {
        Ok(t) => t,
        Err(e) => return e.into_response(),
    };
    ok(StatusCode::OK, blocking(&state, move |e| e.recommend(target, &body)).await)
}

async fn post_feedback(State(state): State<AppState>, ApiJson(event): ApiJson<FeedbackEvent>) -> Response {
    ok(StatusCode::ACCEPTED, blocking(&state, move |e| e.feedback(&event)).await)
}

async fn post_themes(State(state): State<AppState>, ApiJson(body): ApiJson<ThemesRequest>) -> Response {
    if let Err(e) = Engine::theme_config(&body) {
        return e.into_response();
    }
    if state.large() {
        return state.submit("themes", move |e| e.themes(&body));
    }
    ok(StatusCode::OK, blocking(&state, move |e| e.themes(&body)).await)
}

#[derive(Debug, Deserialize)]
struct PairParams {
    p: String,
    q: String,
}

async fn get_theme_pair(State(state): State<AppState>, params: Result<Query<PairParams>, QueryRejection>) -> Response {
    let Query(params) = match params {
        Ok(p) => p,
        Err(e) => return ApiError::malformed(e.body_text()).into_response(),
    };
    ok(StatusCode::OK, blocking(&state, move |e| e.theme_pair(&params.p, &params.q)).await)
}

async fn post_evaluate(State(state): State<AppState>, Path(kind): Path<String>, body: axum::body::Bytes) -> Response {
    fn parse<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
        serde_json::from_slice(bytes).map_err(|e| ApiError::malformed(e.to_string()))
    }
    match kind.as_str() {
        "cv" => {
            let req: CvRequest = match parse(&body) {
                Ok(r) => r,
                Err(e) => return e.into_response(),
            };
            if req.seed.is_none() {
                return ApiError::missing_seed().into_response();
            }
            if state.large() {
                return state.submit("cv", move |e| e.evaluate_cv(&req));
            }
            ok(StatusCode::OK, blocking(&state, move |e| e.evaluate_cv(&req)).await)
        }
        "precision-at-k" => match parse::<PrecisionRequest>(&body) {
            Ok(req) => ok(StatusCode::OK, blocking(&state, move |e| e.evaluate_precision(&req)).await),
            Err(e) => e.into_response(),
        },
        "correlation" => {
            let req: CorrelationRequest = match parse(&body) {
                Ok(r) => r,
                Err(e) => return e.into_response(),
            };
            if req.seed.is_none() {
                return ApiError::missing_seed().into_response();
            }
            if state.large() {
                return state.submit("correlation", move |e| e.evaluate_correlation(&req));
            }
            ok(StatusCode::OK, blocking(&state, move |e| e.evaluate_correlation(&req)).await)
        }
        other => ApiError::new(404, "UnknownEvaluation", format!("no evaluation named {other:?}"))
            .with_field("kind")
            .into_response(),
    }
}

async fn get_versions(State(state): State<AppState>) -> Response {
    ok(StatusCode::OK, blocking(&state, |e| e.versions()).await)
}

async fn get_job(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    match state.jobs.lock().unwrap().get(&id) {
        Some(job) => (StatusCode::OK, Json(job.clone())).into_response(),
        None => ApiError::new(404, "UnknownJob", format!("no job {id:?}")).into_response(),
    }
}

async fn get_openapi() -> Response {
    ([(header::CONTENT_TYPE, "application/json")], OPENAPI).into_response()
}

/// Serves the API until interrupted.
pub async fn serve(engine: Arc<Engine>, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(engine)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
