//! HTTP search service over one immutable index.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use axum::extract::rejection::QueryRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Semaphore;
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::error::{Error, Result};
use crate::http::{spawn, ServerHandle};
use crate::index::Index;
use crate::search::{result_page, Docstore, ResultRow};
use crate::search::SearchOptions;

pub const DEFAULT_BIND: &str = "127.0.0.1:7860";
pub const DEFAULT_K: usize = 100;
pub const DEFAULT_PER_PAGE: usize = 20;
pub const DEFAULT_RESULTS_CAP: usize = 1000;
pub const DEFAULT_PAGE_SIZE_CAP: usize = 100;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub index_path: PathBuf,
    /// Shard directory; defaults to the one recorded at build time.
    pub shards_path: Option<PathBuf>,
    pub bind: String,
    pub results_cap: usize,
    pub page_size_cap: usize,
    /// Allowed CORS origins; `*` allows any. Empty disables CORS.
    pub cors_origins: Vec<String>,
    pub worker_threads: usize,
}

impl ServiceConfig {
    pub fn new(index_path: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            index_path: index_path.into(),
            shards_path: None,
            bind: DEFAULT_BIND.to_string(),
            results_cap: DEFAULT_RESULTS_CAP,
            page_size_cap: DEFAULT_PAGE_SIZE_CAP,
            cors_origins: Vec::new(),
            worker_threads: std::thread::available_parallelism().map_or(4, |n| n.get()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub query: String,
    pub total_results: u64,
    pub page: u64,
    pub per_page: u64,
    pub num_pages: u64,
    pub rows: Vec<ResultRow>,
}

struct ServiceState {
    docstore: Docstore,
    results_cap: usize,
    page_size_cap: usize,
    started: Instant,
    hits: AtomicU64,
    /// One permit per worker; waiting requests are admitted in arrival order.
    searches: Semaphore,
}

type AppState = Arc<ServiceState>;

struct ApiError {
    status: StatusCode,
    error: &'static str,
    detail: String,
}

impl ApiError {
    fn bad_request(error: &'static str, detail: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            error,
            detail: detail.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, error) = match &e {
            Error::EmptyQuery => (StatusCode::BAD_REQUEST, "empty_query"),
            Error::Parameter(_) => (StatusCode::BAD_REQUEST, "invalid_parameter"),
            Error::PageOutOfRange { .. } => (StatusCode::BAD_REQUEST, "page_out_of_range"),
            Error::UnknownDocument(_) => (StatusCode::NOT_FOUND, "not_found"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError {
            status,
            error,
            detail: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "error": self.error, "detail": self.detail })),
        )
            .into_response()
    }
}

fn param(params: &BTreeMap<String, String>, name: &str, default: usize) -> Result<usize, ApiError> {
    match params.get(name) {
        None => Ok(default),
        Some(raw) => raw
            .parse::<usize>()
            .map_err(|_| ApiError::bad_request("invalid_parameter", format!("{name} must be a non-negative integer, got {raw:?}"))),
    }
}

async fn search(
    State(state): State<AppState>,
    params: Result<Query<BTreeMap<String, String>>, QueryRejection>,
) -> Result<Json<SearchResponse>, ApiError> {
    state.hits.fetch_add(1, Ordering::Relaxed);
    let Query(params) = params.map_err(|e| ApiError::bad_request("invalid_parameter", e.body_text()))?;
    let query = params.get("q").cloned().unwrap_or_default();
    if query.trim().is_empty() {
        return Err(Error::EmptyQuery.into());
    }
    let k = param(&params, "k", DEFAULT_K)?;
    let page = param(&params, "page", 0)?;
    let per_page = param(&params, "per_page", DEFAULT_PER_PAGE)?;
    if k == 0 || k > state.results_cap {
        return Err(ApiError::bad_request(
            "invalid_parameter",
            format!("k must be in 1..={}", state.results_cap),
        ));
    }
    if per_page == 0 || per_page > state.page_size_cap {
        return Err(ApiError::bad_request(
            "invalid_parameter",
            format!("per_page must be in 1..={}", state.page_size_cap),
        ));
    }
    let page = i64::try_from(page).map_err(|_| ApiError::bad_request("invalid_parameter", "page too large"))?;
    let _permit = state
        .searches
        .acquire()
        .await
        .map_err(|e| Error::Startup(format!("search pool closed: {e}")))?;
    let worker = state.clone();
    let page = tokio::task::spawn_blocking(move || -> Result<_> {
        let ranked = worker.docstore.index().search(&query, k, &SearchOptions::default())?;
        result_page(&worker.docstore, &ranked, page, per_page)
    })
    .await
    .map_err(|e| Error::Startup(format!("search task failed: {e}")))??;
    Ok(Json(SearchResponse {
        query: page.query,
        total_results: page.total_results,
        page: page.page_number,
        per_page: page.results_per_page,
        num_pages: page.num_pages,
        rows: page.rows,
    }))
}

async fn document(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let doc = state.docstore.fetch_external(&id)?;
    Ok(Json(doc).into_response())
}

async fn healthz(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "num_docs": state.docstore.index().num_docs() }))
}

async fn stats(State(state): State<AppState>) -> Json<serde_json::Value> {
    let stats = state.docstore.index().stats();
    Json(json!({
        "num_docs": stats.num_docs,
        "num_terms": stats.num_terms,
        "total_tokens": stats.total_tokens,
        "avgdl": stats.avgdl,
        "uptime_secs": state.started.elapsed().as_secs_f64(),
        "hits": state.hits.load(Ordering::Relaxed),
    }))
}

async fn fallback() -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        error: "not_found",
        detail: "no such endpoint".to_string(),
    }
}

fn cors_layer(origins: &[String]) -> Result<Option<CorsLayer>> {
    if origins.is_empty() {
        return Ok(None);
    }
    let allow = if origins.iter().any(|o| o == "*") {
        AllowOrigin::any()
    } else {
        let values = origins
            .iter()
            .map(|o| HeaderValue::from_str(o).map_err(|_| Error::Config(format!("bad CORS origin {o:?}"))))
            .collect::<Result<Vec<_>>>()?;
        AllowOrigin::list(values)
    };
    Ok(Some(CorsLayer::new().allow_origin(allow).allow_methods([Method::GET])))
}

/// Open the index and docstore and build the router.
pub fn service_router(config: &ServiceConfig) -> Result<Router> {
    if config.results_cap == 0 || config.page_size_cap == 0 {
        return Err(Error::Config("caps must be positive".to_string()));
    }
    let index = Arc::new(Index::open(&config.index_path)?);
    let docstore = match &config.shards_path {
        Some(path) => Docstore::open(path, index)?,
        None => Docstore::open_for(index)?,
    };
    let state = Arc::new(ServiceState {
        docstore,
        results_cap: config.results_cap,
        page_size_cap: config.page_size_cap,
        started: Instant::now(),
        hits: AtomicU64::new(0),
        searches: Semaphore::new(config.worker_threads.max(1)),
    });
    let mut router = Router::new()
        .route("/search", get(search))
        .route("/document/{*id}", get(document))
        .route("/healthz", get(healthz))
        .route("/stats", get(stats))
        .fallback(fallback)
        .with_state(state);
    if let Some(cors) = cors_layer(&config.cors_origins)? {
        router = router.layer(cors);
    }
    Ok(router)
}

/// Start serving on `config.bind` in the background.
pub fn serve(config: &ServiceConfig) -> Result<ServerHandle> {
    let router = service_router(config)?;
    spawn(router, &config.bind, config.worker_threads)
}
