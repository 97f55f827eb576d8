use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::archive::{self, sha256_hex};
use super::{
    pack_index_bytes, validate_name, verify_index_archive, IndexManifest, PackOptions, RegistryLocation, ARCHIVE_FILE,
    DIGEST_HEADER, DIGEST_SUFFIX, MANIFEST_FILE, SDK_HEADER, SPACE_ARCHIVE_FILE,
};
use crate::error::{Error, Result};

const PUBLISH_ATTEMPTS: usize = 8;

/// Acknowledgement of a stored archive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublishedArchive {
    pub url: String,
    #[serde(default)]
    pub version: Option<u64>,
    pub sha256: String,
}

#[derive(Debug, Deserialize)]
struct ErrorBody {
    #[serde(default)]
    error: String,
    #[serde(default)]
    detail: String,
}

enum Publish {
    Done(PublishedArchive),
    Conflict,
}

#[derive(Debug)]
enum Backend {
    File(PathBuf),
    Http { client: Client, no_redirect: Client },
}

/// Talks to one registry location. Counts every request it makes to the
/// backing store (HTTP round trips or file reads/writes).
#[derive(Debug)]
pub struct RegistryClient {
    location: RegistryLocation,
    backend: Backend,
    requests: AtomicU64,
}

fn transport(e: reqwest::Error) -> Error {
    Error::Transport(e.to_string())
}

fn read_ack(response: Response) -> Result<PublishedArchive> {
    let body = response.bytes().map_err(transport)?;
    serde_json::from_slice(&body).map_err(|e| Error::Transport(format!("bad acknowledgement: {e}")))
}

fn read_sidecar(path: &Path) -> Option<String> {
    fs::read_to_string(path).ok().map(|s| s.trim().to_string())
}

/// (highest complete version, highest claimed version) under a slug directory.
fn scan_versions(dir: &Path) -> Result<(Option<u64>, Option<u64>)> {
    let entries = match fs::read_dir(dir) {
        Ok(entries) => entries,
        Err(e) if e.kind() == ErrorKind::NotFound => return Ok((None, None)),
        Err(e) => return Err(Error::io_at(dir, e)),
    };
    let (mut complete, mut claimed) = (None, None);
    for entry in entries {
        let entry = entry?;
        let Some(version) = entry.file_name().to_str().and_then(|n| n.parse::<u64>().ok()) else {
            continue;
        };
        claimed = claimed.max(Some(version));
        if entry.path().join(ARCHIVE_FILE).is_file() {
            complete = complete.max(Some(version));
        }
    }
    Ok((complete, claimed))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("tmp-{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io_at(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io_at(path, e))
}

impl RegistryClient {
    pub fn new(location: RegistryLocation) -> Result<Self> {
        let backend = match location.file_root() {
            Some(root) => Backend::File(root),
            None => {
                let build = |redirects: reqwest::redirect::Policy| {
                    Client::builder()
                        .redirect(redirects)
                        .timeout(std::time::Duration::from_secs(300))
                        .build()
                        .map_err(transport)
                };
                Backend::Http {
                    client: build(reqwest::redirect::Policy::limited(5))?,
                    no_redirect: build(reqwest::redirect::Policy::none())?,
                }
            }
        };
        Ok(RegistryClient {
            location,
            backend,
            requests: AtomicU64::new(0),
        })
    }

    pub fn location(&self) -> &RegistryLocation {
        &self.location
    }

    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    fn count(&self) {
        self.requests.fetch_add(1, Ordering::Relaxed);
    }

    fn slug_dir(&self, root: &Path, kind: &str, slug: &str) -> PathBuf {
        root.join(kind).join(&self.location.org).join(slug)
    }

    fn http_url(&self, path: &str) -> String {
        format!("{}/{}", self.location.base, path)
    }

    fn authorize(&self, request: reqwest::blocking::RequestBuilder) -> reqwest::blocking::RequestBuilder {
        match &self.location.token {
            Some(token) => request.bearer_auth(token.expose()),
            None => request,
        }
    }

    fn send(&self, request: reqwest::blocking::RequestBuilder) -> Result<Response> {
        self.count();
        self.authorize(request).send().map_err(transport)
    }

    fn status_error(&self, what: &str, response: Response) -> Error {
        let status = response.status();
        let body: Option<ErrorBody> = response.bytes().ok().and_then(|b| serde_json::from_slice(&b).ok());
        let detail = body
            .map(|b| if b.detail.is_empty() { b.error } else { b.detail })
            .unwrap_or_default();
        let message = format!("{what}: {status} {detail}");
        match status {
            StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN => Error::Auth(message),
            StatusCode::NOT_FOUND => Error::NotFound(message),
            s if s.is_server_error() => Error::Transport(message),
            _ => Error::PublishRejected(message),
        }
    }

    /// Highest published version of `slug`, if any.
    pub fn latest_index_version(&self, slug: &str) -> Result<Option<u64>> {
        validate_name(slug)?;
        match &self.backend {
            Backend::File(root) => {
                self.count();
                Ok(scan_versions(&self.slug_dir(root, "indexes", slug))?.0)
            }
            Backend::Http { no_redirect, .. } => {
                let url = self.http_url(&format!("indexes/{}/{slug}/latest", self.location.org));
                let response = self.send(no_redirect.get(&url))?;
                let status = response.status();
                if status == StatusCode::NOT_FOUND {
                    return Ok(None);
                }
                if !status.is_redirection() {
                    return Err(self.status_error("resolve latest", response));
                }
                let location = response
                    .headers()
                    .get(reqwest::header::LOCATION)
                    .and_then(|v| v.to_str().ok())
                    .unwrap_or_default();
                location
                    .rsplit('/')
                    .next()
                    .and_then(|v| v.parse().ok())
                    .map(Some)
                    .ok_or_else(|| Error::Transport(format!("bad redirect {location:?}")))
            }
        }
    }

    /// Version a new publish should claim. File registries count claimed but
    /// unfinished versions so concurrent writers do not collide on them.
    fn next_index_version(&self, slug: &str) -> Result<u64> {
        let highest = match &self.backend {
            Backend::File(root) => {
                self.count();
                scan_versions(&self.slug_dir(root, "indexes", slug))?.1
            }
            Backend::Http { .. } => self.latest_index_version(slug)?,
        };
        Ok(highest.map_or(0, |v| v + 1))
    }

    fn publish_index(&self, slug: &str, version: u64, bytes: &[u8], manifest: &IndexManifest) -> Result<Publish> {
        let digest = sha256_hex(bytes);
        match &self.backend {
            Backend::File(root) => {
                self.count();
                let slug_dir = self.slug_dir(root, "indexes", slug);
                fs::create_dir_all(&slug_dir).map_err(|e| Error::io_at(&slug_dir, e))?;
                let dir = slug_dir.join(version.to_string());
                // Directory creation is the atomic version claim.
                match fs::create_dir(&dir) {
                    Ok(()) => {}
                    Err(e) if e.kind() == ErrorKind::AlreadyExists => return Ok(Publish::Conflict),
                    Err(e) => return Err(Error::io_at(dir, e)),
                }
                let manifest_bytes = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
                let written = write_atomic(&dir.join(MANIFEST_FILE), &manifest_bytes)
                    .and_then(|_| write_atomic(&dir.join(format!("{ARCHIVE_FILE}{DIGEST_SUFFIX}")), digest.as_bytes()))
                    .and_then(|_| write_atomic(&dir.join(ARCHIVE_FILE), bytes));
                if let Err(e) = written {
                    let _ = fs::remove_dir_all(&dir);
                    return Err(e);
                }
                Ok(Publish::Done(PublishedArchive {
                    url: self.location.index_url(slug, version),
                    version: Some(version),
                    sha256: digest,
                }))
            }
            Backend::Http { client, .. } => {
                let url = self.http_url(&format!("indexes/{}/{slug}", self.location.org));
                let response = self.send(
                    client
                        .put(&url)
                        .header(DIGEST_HEADER, &digest)
                        .body(bytes.to_vec()),
                )?;
                if response.status() == StatusCode::CONFLICT {
                    return Ok(Publish::Conflict);
                }
                if !response.status().is_success() {
                    return Err(self.status_error("publish", response));
                }
                let ack = read_ack(response)?;
                if ack.sha256 != digest || ack.version != Some(version) {
                    return Err(Error::PublishRejected(format!(
                        "server acknowledged {:?} v{:?}, sent {digest} v{version}",
                        ack.sha256, ack.version
                    )));
                }
                Ok(Publish::Done(PublishedArchive {
                    url: self.location.index_url(slug, version),
                    ..ack
                }))
            }
        }
    }

    /// Pack `index_path` and publish it as the next version of `slug`.
    pub fn push_index(&self, slug: &str, index_path: &Path, options: &PackOptions) -> Result<PublishedArchive> {
        validate_name(slug)?;
        for _ in 0..PUBLISH_ATTEMPTS {
            let version = self.next_index_version(slug)?;
            let packed = pack_index_bytes(
                index_path,
                &PackOptions {
                    slug: slug.to_string(),
                    version,
                    ..options.clone()
                },
            )?;
            match self.publish_index(slug, version, &packed.bytes, &packed.manifest)? {
                Publish::Done(published) => {
                    tracing::info!(url = %published.url, "index published");
                    return Ok(published);
                }
                Publish::Conflict => continue,
            }
        }
        Err(Error::PublishRejected(format!(
            "could not claim a version for {slug} after {PUBLISH_ATTEMPTS} attempts"
        )))
    }

    /// Archive bytes plus the digest recorded by the registry at publish time.
    pub fn fetch_index_archive(&self, slug: &str, version: u64) -> Result<(Vec<u8>, Option<String>)> {
        validate_name(slug)?;
        match &self.backend {
            Backend::File(root) => {
                self.count();
                let dir = self.slug_dir(root, "indexes", slug).join(version.to_string());
                let path = dir.join(ARCHIVE_FILE);
                let bytes = fs::read(&path).map_err(|e| match e.kind() {
                    ErrorKind::NotFound => Error::NotFound(self.location.index_url(slug, version)),
                    _ => Error::io_at(&path, e),
                })?;
                Ok((bytes, read_sidecar(&dir.join(format!("{ARCHIVE_FILE}{DIGEST_SUFFIX}")))))
            }
            Backend::Http { client, .. } => {
                let url = self.http_url(&format!("indexes/{}/{slug}/{version}", self.location.org));
                let response = self.send(client.get(&url))?;
                if !response.status().is_success() {
                    return Err(self.status_error("fetch", response));
                }
                let digest = response
                    .headers()
                    .get(DIGEST_HEADER)
                    .and_then(|v| v.to_str().ok())
                    .map(str::to_string);
                let bytes = response.bytes().map_err(transport)?.to_vec();
                Ok((bytes, digest))
            }
        }
    }

    pub fn fetch_index_manifest(&self, slug: &str, version: u64) -> Result<IndexManifest> {
        validate_name(slug)?;
        let bytes = match &self.backend {
            Backend::File(root) => {
                self.count();
                let path = self
                    .slug_dir(root, "indexes", slug)
                    .join(version.to_string())
                    .join(MANIFEST_FILE);
                fs::read(&path).map_err(|_| Error::NotFound(path.display().to_string()))?
            }
            Backend::Http { client, .. } => {
                let url = self.http_url(&format!(
                    "indexes/{}/{slug}/{version}/{MANIFEST_FILE}",
                    self.location.org
                ));
                let response = self.send(client.get(&url))?;
                if !response.status().is_success() {
                    return Err(self.status_error("fetch manifest", response));
                }
                response.bytes().map_err(transport)?.to_vec()
            }
        };
        serde_json::from_slice(&bytes).map_err(|e| Error::Corruption(format!("manifest: {e}")))
    }

    /// Download, verify and unpack an index into
    /// `cache_dir/{org}/{slug}/{version}`. A cached version is returned without
    /// contacting the registry.
    pub fn load_index(&self, slug: &str, cache_dir: &Path, version: Option<u64>) -> Result<PathBuf> {
        validate_name(slug)?;
        let version = match version {
            Some(v) => v,
            None => self
                .latest_index_version(slug)?
                .ok_or_else(|| Error::NotFound(format!("{}/{slug}", self.location.org)))?,
        };
        let entry = cache_dir
            .join(&self.location.org)
            .join(slug)
            .join(version.to_string());
        if entry.join(MANIFEST_FILE).is_file() {
            tracing::debug!(path = %entry.display(), "index served from cache");
            return Ok(entry);
        }
        let (bytes, digest) = self.fetch_index_archive(slug, version)?;
        let staging = entry.with_extension(format!("partial-{}", std::process::id()));
        let result = (|| {
            let digest = digest.ok_or_else(|| Error::Corruption("registry sent no archive digest".to_string()))?;
            if sha256_hex(&bytes) != digest {
                return Err(Error::Corruption(format!(
                    "archive digest mismatch for {slug} v{version}"
                )));
            }
            let (manifest, files) = verify_index_archive(&bytes)?;
            if manifest.slug != slug || manifest.version != version {
                return Err(Error::Corruption(format!(
                    "archive is {} v{}, expected {slug} v{version}",
                    manifest.slug, manifest.version
                )));
            }
            if staging.exists() {
                fs::remove_dir_all(&staging).map_err(|e| Error::io_at(&staging, e))?;
            }
            fs::create_dir_all(&staging).map_err(|e| Error::io_at(&staging, e))?;
            archive::write_tree(&staging, &files)?;
            fs::rename(&staging, &entry).map_err(|e| Error::io_at(&entry, e))?;
            Ok(entry.clone())
        })();
        if result.is_err() {
            let _ = fs::remove_dir_all(&staging);
            let _ = fs::remove_dir_all(&entry);
        }
        result
    }

    pub fn put_space(&self, slug: &str, sdk: &str, bytes: &[u8]) -> Result<PublishedArchive> {
        validate_name(slug)?;
        let digest = sha256_hex(bytes);
        match &self.backend {
            Backend::File(root) => {
                self.count();
                let dir = self.slug_dir(root, "spaces", slug);
                fs::create_dir_all(&dir).map_err(|e| Error::io_at(&dir, e))?;
                let meta = serde_json::json!({ "sdk": sdk, "sha256": digest });
                write_atomic(&dir.join("space.json"), meta.to_string().as_bytes())?;
                write_atomic(&dir.join(format!("{SPACE_ARCHIVE_FILE}{DIGEST_SUFFIX}")), digest.as_bytes())?;
                write_atomic(&dir.join(SPACE_ARCHIVE_FILE), bytes)?;
                Ok(PublishedArchive {
                    url: self.location.space_url(slug),
                    version: None,
                    sha256: digest,
                })
            }
            Backend::Http { client, .. } => {
                let url = self.http_url(&format!("spaces/{}/{slug}", self.location.org));
                let response = self.send(
                    client
                        .put(&url)
                        .header(DIGEST_HEADER, &digest)
                        .header(SDK_HEADER, sdk)
                        .body(bytes.to_vec()),
                )?;
                if !response.status().is_success() {
                    return Err(self.status_error("publish space", response));
                }
                let ack = read_ack(response)?;
                if ack.sha256 != digest {
                    return Err(Error::PublishRejected(format!(
                        "server acknowledged digest {}, sent {digest}",
                        ack.sha256
                    )));
                }
                Ok(PublishedArchive {
                    url: self.location.space_url(slug),
                    ..ack
                })
            }
        }
    }

    pub fn fetch_space(&self, slug: &str) -> Result<Vec<u8>> {
        validate_name(slug)?;
        let (bytes, digest) = match &self.backend {
            Backend::File(root) => {
                self.count();
                let dir = self.slug_dir(root, "spaces", slug);
                let bytes = fs::read(dir.join(SPACE_ARCHIVE_FILE))
                    .map_err(|_| Error::NotFound(self.location.space_url(slug)))?;
                (bytes, read_sidecar(&dir.join(format!("{SPACE_ARCHIVE_FILE}{DIGEST_SUFFIX}"))))
            }
            Backend::Http { client, .. } => {
                let url = self.http_url(&format!("spaces/{}/{slug}", self.location.org));
                let response = self.send(client.get(&url))?;
                if !response.status().is_success() {
                    return Err(self.status_error("fetch space", response));
                }
                let digest = response
                    .headers()
                    .get(DIGEST_HEADER)
                    .and_then(|v| v.to_str().ok())
                    .map(str::to_string);
                (response.bytes().map_err(transport)?.to_vec(), digest)
            }
        };
        if let Some(digest) = digest {
            if sha256_hex(&bytes) != digest {
                return Err(Error::Corruption(format!("space {slug} fails its digest")));
            }
        }
        Ok(bytes)
    }
}

/// Publish `index_path` as the next version of `slug`; returns its URL.
pub fn push_index_to_hub(slug: &str, index_path: &Path, registry: &RegistryLocation) -> Result<String> {
    let client = RegistryClient::new(registry.clone())?;
    Ok(client.push_index(slug, index_path, &PackOptions::default())?.url)
}

/// Fetch (or reuse from cache) a verified copy of `slug` and return its
/// local index directory.
pub fn load_index_from_hub(
    slug: &str,
    registry: &RegistryLocation,
    cache_dir: &Path,
    version: Option<u64>,
) -> Result<PathBuf> {
    RegistryClient::new(registry.clone())?.load_index(slug, cache_dir, version)
}
