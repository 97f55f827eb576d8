// Handlers short-circuit with ready-made responses.
#![allow(clippy::result_large_err)]
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde_json::json;

use super::archive::sha256_hex;
use super::{
    validate_name, verify_index_archive, Token, ARCHIVE_FILE, DIGEST_HEADER, DIGEST_SUFFIX, MANIFEST_FILE,
    SDK_HEADER, SPACE_ARCHIVE_FILE,
};
use crate::error::Result;
use crate::http::{spawn, ServerHandle};

#[derive(Debug, Clone)]
pub struct RegistryServerConfig {
    pub root: PathBuf,
    /// When set, uploads must carry `Authorization: Bearer <token>`.
    pub token: Option<Token>,
}

struct Shared {
    config: RegistryServerConfig,
    publish: Mutex<()>,
}

type AppState = Arc<Shared>;

fn failure(status: StatusCode, error: &str, detail: impl Into<String>) -> Response {
    (status, Json(json!({ "error": error, "detail": detail.into() }))).into_response()
}

fn internal(e: impl std::fmt::Display) -> Response {
    failure(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
}

fn check_names(names: &[&str]) -> Result<(), Response> {
    for name in names {
        validate_name(name).map_err(|e| failure(StatusCode::BAD_REQUEST, "invalid_name", e.to_string()))?;
    }
    Ok(())
}

fn check_auth(state: &Shared, headers: &HeaderMap) -> Result<(), Response> {
    let Some(token) = &state.config.token else {
        return Ok(());
    };
    let supplied = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    match supplied {
        Some(s) if s == token.expose() => Ok(()),
        Some(_) => Err(failure(StatusCode::FORBIDDEN, "forbidden", "token rejected")),
        None => Err(failure(StatusCode::UNAUTHORIZED, "unauthorized", "bearer token required")),
    }
}

fn check_digest(headers: &HeaderMap, body: &[u8]) -> Result<String, Response> {
    let digest = sha256_hex(body);
    match headers.get(DIGEST_HEADER).and_then(|v| v.to_str().ok()) {
        Some(claimed) if claimed == digest => Ok(digest),
        Some(_) => Err(failure(
            StatusCode::UNPROCESSABLE_ENTITY,
            "digest_mismatch",
            "body does not match its digest header",
        )),
        None => Err(failure(
            StatusCode::UNPROCESSABLE_ENTITY,
            "digest_missing",
            format!("{DIGEST_HEADER} header required"),
        )),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn latest_version(dir: &Path) -> std::io::Result<Option<u64>> {
    let entries = match fs::read_dir(dir) {
        Ok(entries) => entries,
        Err(e) if e.kind() == ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e),
    };
    let mut latest = None;
    for entry in entries {
        let entry = entry?;
        if let Some(v) = entry.file_name().to_str().and_then(|n| n.parse::<u64>().ok()) {
            if entry.path().join(ARCHIVE_FILE).is_file() {
                latest = latest.max(Some(v));
            }
        }
    }
    Ok(latest)
}

fn index_dir(state: &Shared, org: &str, slug: &str) -> PathBuf {
    state.config.root.join("indexes").join(org).join(slug)
}

fn space_dir(state: &Shared, org: &str, slug: &str) -> PathBuf {
    state.config.root.join("spaces").join(org).join(slug)
}

async fn put_index(
    State(state): State<AppState>,
    UrlPath((org, slug)): UrlPath<(String, String)>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    if let Err(r) = check_auth(&state, &headers)
        .and_then(|_| check_names(&[&org, &slug]))
    {
        return r;
    }
    let digest = match check_digest(&headers, &body) {
        Ok(d) => d,
        Err(r) => return r,
    };
    let manifest = match verify_index_archive(&body) {
        Ok((manifest, _)) => manifest,
        Err(e) => return failure(StatusCode::UNPROCESSABLE_ENTITY, "invalid_archive", e.to_string()),
    };
    if manifest.slug != slug {
        return failure(
            StatusCode::UNPROCESSABLE_ENTITY,
            "slug_mismatch",
            format!("archive is for {:?}", manifest.slug),
        );
    }
    let dir = index_dir(&state, &org, &slug);
    let _guard = state.publish.lock().unwrap_or_else(|p| p.into_inner());
    let next = match latest_version(&dir) {
        Ok(latest) => latest.map_or(0, |v| v + 1),
        Err(e) => return internal(e),
    };
    if manifest.version != next {
        return failure(
            StatusCode::CONFLICT,
            "version_conflict",
            format!("next version is {next}, archive carries {}", manifest.version),
        );
    }
    let version_dir = dir.join(next.to_string());
    let stored = (|| -> std::io::Result<()> {
        fs::create_dir_all(&version_dir)?;
        let manifest_bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        write_file(&version_dir.join(MANIFEST_FILE), &manifest_bytes)?;
        write_file(
            &version_dir.join(format!("{ARCHIVE_FILE}{DIGEST_SUFFIX}")),
            digest.as_bytes(),
        )?;
        write_file(&version_dir.join(ARCHIVE_FILE), &body)
    })();
    if let Err(e) = stored {
        let _ = fs::remove_dir_all(&version_dir);
        return internal(e);
    }
    tracing::info!(%org, %slug, version = next, "index stored");
    (
        StatusCode::CREATED,
        Json(json!({
            "url": format!("/indexes/{org}/{slug}/{next}"),
            "version": next,
            "sha256": digest,
        })),
    )
        .into_response()
}

async fn latest_index(State(state): State<AppState>, UrlPath((org, slug)): UrlPath<(String, String)>) -> Response {
    if let Err(r) = check_names(&[&org, &slug]) {
        return r;
    }
    match latest_version(&index_dir(&state, &org, &slug)) {
        Ok(Some(v)) => {
            let target = format!("/indexes/{org}/{slug}/{v}");
            (
                StatusCode::TEMPORARY_REDIRECT,
                [(header::LOCATION, HeaderValue::from_str(&target).expect("ascii path"))],
            )
                .into_response()
        }
        Ok(None) => failure(StatusCode::NOT_FOUND, "not_found", format!("{org}/{slug}")),
        Err(e) => internal(e),
    }
}

fn read_stored(path: &Path, what: &str) -> Result<Vec<u8>, Response> {
    fs::read(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => failure(StatusCode::NOT_FOUND, "not_found", what.to_string()),
        _ => internal(e),
    })
}

fn archive_response(bytes: Vec<u8>, digest: Option<String>) -> Response {
    let mut response = (
        [(header::CONTENT_TYPE, HeaderValue::from_static("application/gzip"))],
        bytes,
    )
        .into_response();
    if let Some(value) = digest.and_then(|d| HeaderValue::from_str(&d).ok()) {
        response.headers_mut().insert(DIGEST_HEADER, value);
    }
    response
}

async fn get_index(
    State(state): State<AppState>,
    UrlPath((org, slug, version)): UrlPath<(String, String, u64)>,
) -> Response {
    if let Err(r) = check_names(&[&org, &slug]) {
        return r;
    }
    let dir = index_dir(&state, &org, &slug).join(version.to_string());
    match read_stored(&dir.join(ARCHIVE_FILE), &format!("{org}/{slug}/{version}")) {
        Ok(bytes) => {
            let digest = fs::read_to_string(dir.join(format!("{ARCHIVE_FILE}{DIGEST_SUFFIX}")))
                .ok()
                .map(|s| s.trim().to_string());
            archive_response(bytes, digest)
        }
        Err(r) => r,
    }
}

async fn get_manifest(
    State(state): State<AppState>,
    UrlPath((org, slug, version)): UrlPath<(String, String, u64)>,
) -> Response {
    if let Err(r) = check_names(&[&org, &slug]) {
        return r;
    }
    let path = index_dir(&state, &org, &slug)
        .join(version.to_string())
        .join(MANIFEST_FILE);
    match read_stored(&path, &format!("{org}/{slug}/{version}")) {
        Ok(bytes) => ([(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))], bytes).into_response(),
        Err(r) => r,
    }
}

async fn put_space(
    State(state): State<AppState>,
    UrlPath((org, slug)): UrlPath<(String, String)>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    if let Err(r) = check_auth(&state, &headers)
        .and_then(|_| check_names(&[&org, &slug]))
    {
        return r;
    }
    let digest = match check_digest(&headers, &body) {
        Ok(d) => d,
        Err(r) => return r,
    };
    let sdk = headers
        .get(SDK_HEADER)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("static")
        .to_string();
    let dir = space_dir(&state, &org, &slug);
    let stored = (|| -> std::io::Result<()> {
        fs::create_dir_all(&dir)?;
        let meta = json!({ "sdk": sdk, "sha256": digest });
        write_file(&dir.join("space.json"), meta.to_string().as_bytes())?;
        write_file(
            &dir.join(format!("{SPACE_ARCHIVE_FILE}{DIGEST_SUFFIX}")),
            digest.as_bytes(),
        )?;
        write_file(&dir.join(SPACE_ARCHIVE_FILE), &body)
    })();
    if let Err(e) = stored {
        return internal(e);
    }
    (
        StatusCode::CREATED,
        Json(json!({ "url": format!("/spaces/{org}/{slug}"), "version": null, "sha256": digest })),
    )
        .into_response()
}

async fn get_space(State(state): State<AppState>, UrlPath((org, slug)): UrlPath<(String, String)>) -> Response {
    if let Err(r) = check_names(&[&org, &slug]) {
        return r;
    }
    let dir = space_dir(&state, &org, &slug);
    match read_stored(&dir.join(SPACE_ARCHIVE_FILE), &format!("{org}/{slug}")) {
        Ok(bytes) => {
            let digest = fs::read_to_string(dir.join(format!("{SPACE_ARCHIVE_FILE}{DIGEST_SUFFIX}")))
                .ok()
                .map(|s| s.trim().to_string());
            archive_response(bytes, digest)
        }
        Err(r) => r,
    }
}

pub fn registry_router(config: RegistryServerConfig) -> Router {
    let state = Arc::new(Shared {
        config,
        publish: Mutex::new(()),
    });
    Router::new()
        .route("/indexes/{org}/{slug}", axum::routing::put(put_index))
        .route("/indexes/{org}/{slug}/latest", get(latest_index))
        .route("/indexes/{org}/{slug}/{version}", get(get_index))
        .route("/indexes/{org}/{slug}/{version}/manifest.json", get(get_manifest))
        .route("/spaces/{org}/{slug}", get(get_space).put(put_space))
        .layer(DefaultBodyLimit::disable())
        .with_state(state)
}

/// Serve a registry rooted at `root` on `addr` (port 0 picks a free port).
pub fn serve_registry(root: &Path, addr: &str, token: Option<Token>) -> Result<ServerHandle> {
    fs::create_dir_all(root).map_err(|e| crate::error::Error::io_at(root, e))?;
    let router = registry_router(RegistryServerConfig {
        root: root.to_path_buf(),
        token,
    });
    spawn(router, addr, 4)
}
