//! HTTP front of the kiosk assistant.
//!
//! Routes:
//!
//! | method | path            | body / query   | response                         |
//! |--------|-----------------|----------------|----------------------------------|
//! | POST   | `/api/ask`      | `{text}`       | [`AskResponse`]                  |
//! | POST   | `/api/classify` | `{text}`       | `{label, posteriors}`            |
//! | GET    | `/api/events`   |                | NDJSON stream of kiosk events    |
//! | GET    | `/api/stats`    | `?top=k&days=` | usage statistics                 |
//! | GET    | `/healthz`      |                | `{status: "ok"}`                 |
//!
//! Engine state (knowledge base, model, rules) is loaded once at startup and
//! never mutated afterwards.

use std::convert::Infallible;
use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bytes::Bytes;
use chrono::Utc;
use kiosk_core::analytics::{compute_stats, DayCount, RequestLog, RequestRecord, FALLBACK_INTENT};
use kiosk_core::classify::MnbModel;
use kiosk_core::events::{Broadcaster, EventKind, EventTemplate, KioskEvent, RuleSet};
use kiosk_core::qa::{self, AnswerConfig, FaqEntry, DEFAULT_THRESHOLD};
use kiosk_core::text::StopWords;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

pub const MAX_TEXT_CHARS: usize = 2048;
pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_TOP: usize = 10;

/// Score reported for requests answered by a command rule.
pub const COMMAND_SCORE: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub port: u16,
    pub kb: Option<PathBuf>,
    pub model: Option<PathBuf>,
    /// Built-in command rules are used when absent.
    pub rules: Option<PathBuf>,
    /// Requests are kept in memory when absent.
    pub log: Option<PathBuf>,
    pub threshold: f64,
    pub stopwords: Option<PathBuf>,
    pub category_filter: bool,
    pub fallback_text: Option<String>,
    pub ui_dir: Option<PathBuf>,
    /// Allowed CORS origin; any origin when absent.
    pub cors_origin: Option<String>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            port: DEFAULT_PORT,
            kb: None,
            model: None,
            rules: None,
            log: None,
            threshold: DEFAULT_THRESHOLD,
            stopwords: None,
            category_filter: false,
            fallback_text: None,
            ui_dir: None,
            cors_origin: None,
        }
    }
}

/// Immutable artifacts the pipeline answers from.
pub struct Engine {
    pub kb: Option<Vec<FaqEntry>>,
    pub model: Option<MnbModel>,
    pub rules: RuleSet,
    pub answer_config: AnswerConfig,
}

impl Engine {
    /// Loads every configured artifact or fails as a whole.
    pub fn load(config: &ServerConfig) -> kiosk_core::Result<Self> {
        let stopwords = match &config.stopwords {
            Some(p) => StopWords::load(p)?,
            None => StopWords::none(),
        };
        let kb = config.kb.as_deref().map(qa::load_kb).transpose()?;
        let model = config.model.as_deref().map(MnbModel::load).transpose()?;
        let rules = match &config.rules {
            Some(p) => RuleSet::load(p)?,
            None => RuleSet::default_rules(),
        };
        if config.threshold.is_nan() || config.threshold < 0.0 {
            return Err(kiosk_core::Error::InvalidArgument(format!(
                "threshold must be non-negative, got {}",
                config.threshold
            )));
        }
        let mut answer_config = AnswerConfig {
            threshold: config.threshold,
            category_filter: config.category_filter,
            stopwords,
            ..AnswerConfig::default()
        };
        if let Some(text) = &config.fallback_text {
            answer_config.fallback_text = text.clone();
        }
        Ok(Engine {
            kb,
            model,
            rules,
            answer_config,
        })
    }
}

pub struct AppInner {
    pub engine: Engine,
    pub broadcaster: Broadcaster,
    pub log: RequestLog,
}

pub type AppState = Arc<AppInner>;

pub fn build_state(config: &ServerConfig) -> kiosk_core::Result<AppState> {
    let engine = Engine::load(config)?;
    let log = match &config.log {
        Some(p) => RequestLog::open(p),
        None => RequestLog::in_memory(),
    };
    Ok(Arc::new(AppInner {
        engine,
        broadcaster: Broadcaster::new(),
        log,
    }))
}

#[derive(Debug, Deserialize)]
pub struct TextRequest {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AskResponse {
    pub answer_text: String,
    pub intent: String,
    pub score: f64,
    pub fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_id: Option<String>,
    pub events: Vec<KioskEvent>,
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

fn unavailable(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::SERVICE_UNAVAILABLE, msg.into())
}

fn internal(err: impl std::fmt::Display) -> ApiError {
    ApiError(StatusCode::INTERNAL_SERVER_ERROR, err.to_string())
}

fn check_length(text: &str) -> Result<(), ApiError> {
    let n = text.chars().count();
    if n > MAX_TEXT_CHARS {
        return Err(bad_request(format!(
            "text has {n} characters, limit is {MAX_TEXT_CHARS}"
        )));
    }
    Ok(())
}

async fn ask(
    State(state): State<AppState>,
    Json(req): Json<TextRequest>,
) -> Result<Json<AskResponse>, ApiError> {
    if req.text.trim().is_empty() {
        return Err(bad_request("text must not be empty"));
    }
    check_length(&req.text)?;
    let engine = &state.engine;

    let response = if let Some(m) = engine.rules.route(&req.text) {
        let events = state
            .broadcaster
            .publish_all(&m.rule.events)
            .map_err(unavailable_from)?;
        AskResponse {
            answer_text: m.rule.response_text.clone(),
            intent: m.rule.triggers[0].clone(),
            score: COMMAND_SCORE,
            fallback: false,
            entry_id: None,
            events,
        }
    } else {
        let kb = engine
            .kb
            .as_deref()
            .ok_or_else(|| unavailable("no knowledge base loaded"))?;
        let result = qa::answer(&req.text, kb, engine.model.as_ref(), &engine.answer_config)
            .map_err(internal)?;
        let talk = EventTemplate::new(EventKind::AvatarAnimation, "talk", &result.answer_text);
        let event = state.broadcaster.publish(&talk).map_err(unavailable_from)?;
        AskResponse {
            intent: result
                .category
                .clone()
                .unwrap_or_else(|| FALLBACK_INTENT.to_owned()),
            answer_text: result.answer_text,
            score: result.score,
            fallback: result.fallback,
            entry_id: result.entry_id,
            events: vec![event],
        }
    };

    let record = RequestRecord::new(Utc::now(), &req.text, &response.intent, response.score);
    if let Err(e) = state.log.record(&record) {
        // logging is best-effort; the answer still goes out
        tracing::warn!("request log append failed: {e}");
    }
    Ok(Json(response))
}

fn unavailable_from(e: kiosk_core::Error) -> ApiError {
    unavailable(e.to_string())
}

async fn classify(
    State(state): State<AppState>,
    Json(req): Json<TextRequest>,
) -> Result<Response, ApiError> {
    let model = state
        .engine
        .model
        .as_ref()
        .ok_or_else(|| unavailable("no classifier model loaded"))?;
    check_length(&req.text)?;
    Ok(Json(model.predict(&req.text)).into_response())
}

async fn events(State(state): State<AppState>) -> Result<Response, ApiError> {
    let sub = state.broadcaster.subscribe().map_err(unavailable_from)?;
    let stream = futures::stream::unfold(sub, |mut sub| async move {
        let item = sub.next().await?;
        let mut line = serde_json::to_vec(&item).expect("stream items serialize");
        line.push(b'\n');
        Some((Ok::<_, Infallible>(Bytes::from(line)), sub))
    });
    Ok((
        [
            (
                header::CONTENT_TYPE,
                HeaderValue::from_static("application/x-ndjson"),
            ),
            (header::CACHE_CONTROL, HeaderValue::from_static("no-cache")),
        ],
        Body::from_stream(stream),
    )
        .into_response())
}

#[derive(Debug, Deserialize)]
struct StatsQuery {
    top: Option<usize>,
    days: Option<DayCount>,
}

async fn stats(
    State(state): State<AppState>,
    Query(q): Query<StatsQuery>,
) -> Result<Response, ApiError> {
    let records = state.log.read_all().map_err(internal)?;
    let s = compute_stats(
        &records,
        q.top.unwrap_or(DEFAULT_TOP),
        q.days.unwrap_or_default(),
    );
    Ok(Json(s).into_response())
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

pub fn router(state: AppState, config: &ServerConfig) -> Router {
    let cors = match &config.cors_origin {
        Some(origin) => match HeaderValue::from_str(origin) {
            Ok(v) => CorsLayer::new().allow_origin(AllowOrigin::exact(v)),
            Err(_) => CorsLayer::new(),
        },
        None => CorsLayer::new().allow_origin(AllowOrigin::any()),
    }
    .allow_methods([axum::http::Method::GET, axum::http::Method::POST])
    .allow_headers([header::CONTENT_TYPE]);

    let mut app = Router::new()
        .route("/api/ask", post(ask))
        .route("/api/classify", post(classify))
        .route("/api/events", get(events))
        .route("/api/stats", get(stats))
        .route("/healthz", get(healthz));
    if let Some(dir) = &config.ui_dir {
        app = app.nest_service("/ui", ServeDir::new(dir));
    }
    app.layer(cors).with_state(state)
}

/// Serves until `shutdown` resolves, then closes all event streams.
pub async fn serve_on(
    listener: TcpListener,
    state: AppState,
    config: &ServerConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let app = router(Arc::clone(&state), config);
    let closer = Arc::clone(&state);
    axum::serve(listener, app)
        .with_graceful_shutdown(async move {
            shutdown.await;
            closer.broadcaster.shutdown();
        })
        .await
}

/// Loads the engine, binds `0.0.0.0:port` and serves until Ctrl-C.
pub async fn run(config: ServerConfig) -> Result<(), ServeError> {
    let state = build_state(&config)?;
    let addr = SocketAddr::from(([0, 0, 0, 0], config.port));
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|e| ServeError::Bind(addr, e))?;
    tracing::info!("listening on http://{addr}");
    serve_on(listener, state, &config, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
    .map_err(ServeError::Serve)
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("failed to load artifacts: {0}")]
    Startup(#[from] kiosk_core::Error),
    #[error("cannot bind {0}: {1}")]
    Bind(SocketAddr, #[source] std::io::Error),
    #[error("server error: {0}")]
    Serve(#[source] std::io::Error),
}
