//! Packing indexes into checksummed archives and sharing them through a
//! registry.
//!
//! A registry is addressed by a base URL (`file://`, `http://` or
//! `https://`) plus an organization. Index archives live at
//! `{base}/indexes/{org}/{slug}/{version}` with versions allocated
//! consecutively from 0; app archives ("spaces") at `{base}/spaces/{org}/{slug}`.
//! Every stored archive has a sha-256 sidecar, and every file inside an index
//! archive is listed with its digest in `manifest.json`.

pub mod archive;
mod client;
mod server;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SubsecRound, TimeZone, Utc};
use serde::{Deserialize, Serialize};

pub use client::{load_index_from_hub, push_index_to_hub, PublishedArchive, RegistryClient};
pub use server::{registry_router, serve_registry, RegistryServerConfig};

use crate::analysis::AnalyzerRecord;
use crate::error::{Error, Result};
use crate::index::{index_stats, IndexStats, ANALYZER_FILE, INDEX_FILES};
use crate::search::Bm25Params;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ARCHIVE_FILE: &str = "index.tar.gz";
pub const SPACE_ARCHIVE_FILE: &str = "app.tar.gz";
pub const DIGEST_SUFFIX: &str = ".sha256";
pub const TOKEN_ENV: &str = "PLUGSEARCH_TOKEN";
pub const DIGEST_HEADER: &str = "x-archive-sha256";
pub const SDK_HEADER: &str = "x-space-sdk";

/// Hosting quota above which packing warns: 50 GB.
pub const DEFAULT_QUOTA_BYTES: u64 = 50_000_000_000;

/// Slugs and organizations: `[a-z0-9][a-z0-9-]*`.
pub fn validate_name(name: &str) -> Result<()> {
    let mut chars = name.chars();
    let valid = matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c.is_ascii_digit())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-');
    if valid {
        Ok(())
    } else {
        Err(Error::Naming(name.to_string()))
    }
}

/// A bearer token. Never printed.
#[derive(Clone, PartialEq, Eq)]
pub struct Token(String);

impl Token {
    pub fn new(secret: impl Into<String>) -> Self {
        Token(secret.into())
    }

    pub fn from_env() -> Option<Self> {
        std::env::var(TOKEN_ENV)
            .ok()
            .filter(|t| !t.is_empty())
            .map(Token)
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Token(***)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistryLocation {
    pub base: String,
    pub org: String,
    pub token: Option<Token>,
}

impl RegistryLocation {
    /// Validates the scheme and organization; the token is taken from
    /// `PLUGSEARCH_TOKEN` when set.
    pub fn new(base: impl Into<String>, org: impl Into<String>) -> Result<Self> {
        let base = base.into().trim_end_matches('/').to_string();
        let org = org.into();
        validate_name(&org)?;
        if !(base.starts_with("file://") || base.starts_with("http://") || base.starts_with("https://")) {
            return Err(Error::Location(base));
        }
        Ok(RegistryLocation {
            base,
            org,
            token: Token::from_env(),
        })
    }

    pub fn with_token(mut self, token: Option<Token>) -> Self {
        self.token = token;
        self
    }

    pub fn file_root(&self) -> Option<PathBuf> {
        self.base.strip_prefix("file://").map(PathBuf::from)
    }

    pub fn index_url(&self, slug: &str, version: u64) -> String {
        format!("{}/indexes/{}/{}/{}", self.base, self.org, slug, version)
    }

    pub fn space_url(&self, slug: &str) -> String {
        format!("{}/spaces/{}/{}", self.base, self.org, slug)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub size: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub slug: String,
    pub version: u64,
    pub created_at: DateTime<Utc>,
    pub analyzer: AnalyzerRecord,
    pub bm25: Bm25Params,
    pub stats: IndexStats,
    pub files: Vec<FileDigest>,
    pub total_bytes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PackWarning {
    QuotaExceeded { total_bytes: u64, quota_bytes: u64 },
}

impl fmt::Display for PackWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PackWarning::QuotaExceeded {
                total_bytes,
                quota_bytes,
            } => write!(
                f,
                "index is {total_bytes} bytes, above the hosting quota of {quota_bytes} bytes"
            ),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PackOptions {
    pub slug: String,
    pub version: u64,
    /// Defaults to `SOURCE_DATE_EPOCH` when set, else the current time.
    pub created_at: Option<DateTime<Utc>>,
    pub quota_bytes: u64,
    pub bm25: Bm25Params,
}

impl Default for PackOptions {
    fn default() -> Self {
        PackOptions {
            slug: "local".to_string(),
            version: 0,
            created_at: None,
            quota_bytes: DEFAULT_QUOTA_BYTES,
            bm25: Bm25Params::default(),
        }
    }
}

fn default_timestamp() -> DateTime<Utc> {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse::<i64>().ok())
        .and_then(|secs| Utc.timestamp_opt(secs, 0).single())
        .unwrap_or_else(|| Utc::now().trunc_subsecs(0))
}

#[derive(Debug, Clone)]
pub struct PackedIndex {
    pub bytes: Vec<u8>,
    pub manifest: IndexManifest,
    pub warnings: Vec<PackWarning>,
}

/// Build the archive for `index_path` in memory.
pub fn pack_index_bytes(index_path: &Path, options: &PackOptions) -> Result<PackedIndex> {
    validate_name(&options.slug)?;
    let mut files = BTreeMap::new();
    for name in INDEX_FILES {
        let path = index_path.join(name);
        let bytes = fs::read(&path)
            .map_err(|e| Error::Integrity(format!("cannot read {}: {e}", path.display())))?;
        files.insert(name.to_string(), bytes);
    }
    let stats = index_stats(index_path)?;
    let analyzer: AnalyzerRecord = serde_json::from_slice(&files[ANALYZER_FILE])
        .map_err(|e| Error::Integrity(format!("{ANALYZER_FILE}: {e}")))?;
    let digests: Vec<FileDigest> = files
        .iter()
        .map(|(name, bytes)| FileDigest {
            name: name.clone(),
            size: bytes.len() as u64,
            sha256: archive::sha256_hex(bytes),
        })
        .collect();
    let total_bytes = digests.iter().map(|d| d.size).sum();
    let manifest = IndexManifest {
        slug: options.slug.clone(),
        version: options.version,
        created_at: options.created_at.unwrap_or_else(default_timestamp),
        analyzer,
        bm25: options.bm25,
        stats,
        files: digests,
        total_bytes,
    };
    let mut warnings = Vec::new();
    if total_bytes > options.quota_bytes {
        let warning = PackWarning::QuotaExceeded {
            total_bytes,
            quota_bytes: options.quota_bytes,
        };
        tracing::warn!("{warning}");
        warnings.push(warning);
    }
    files.insert(
        MANIFEST_FILE.to_string(),
        serde_json::to_vec_pretty(&manifest).expect("manifest serializes"),
    );
    Ok(PackedIndex {
        bytes: archive::write_archive(&files)?,
        manifest,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct PackOutcome {
    pub archive: PathBuf,
    pub manifest: IndexManifest,
    pub warnings: Vec<PackWarning>,
}

/// Write `index.tar.gz` for `index_path`. `out_path` is the archive file, or
/// a directory to place `index.tar.gz` in.
pub fn pack_index(index_path: &Path, out_path: &Path, options: &PackOptions) -> Result<PackOutcome> {
    let packed = pack_index_bytes(index_path, options)?;
    let archive = if out_path.is_dir() {
        out_path.join(ARCHIVE_FILE)
    } else {
        out_path.to_path_buf()
    };
    fs::write(&archive, &packed.bytes).map_err(|e| Error::io_at(&archive, e))?;
    Ok(PackOutcome {
        archive,
        manifest: packed.manifest,
        warnings: packed.warnings,
    })
}

/// Check an index archive: exactly the index files plus the manifest, each
/// matching its recorded size and digest. All-or-nothing.
pub fn verify_index_archive(bytes: &[u8]) -> Result<(IndexManifest, BTreeMap<String, Vec<u8>>)> {
    let mut files = archive::read_archive(bytes)?;
    let manifest_bytes = files
        .remove(MANIFEST_FILE)
        .ok_or_else(|| Error::Corruption("archive has no manifest.json".to_string()))?;
    let manifest: IndexManifest = serde_json::from_slice(&manifest_bytes)
        .map_err(|e| Error::Corruption(format!("manifest.json: {e}")))?;
    let listed: Vec<&str> = manifest.files.iter().map(|f| f.name.as_str()).collect();
    let mut expected: Vec<&str> = INDEX_FILES.to_vec();
    expected.sort_unstable();
    let mut listed_sorted = listed.clone();
    listed_sorted.sort_unstable();
    if listed_sorted != expected {
        return Err(Error::Corruption(format!("manifest lists {listed:?}")));
    }
    if files.len() != manifest.files.len() {
        return Err(Error::Corruption("archive holds unlisted files".to_string()));
    }
    for entry in &manifest.files {
        let bytes = files
            .get(&entry.name)
            .ok_or_else(|| Error::Corruption(format!("{} missing from archive", entry.name)))?;
        if bytes.len() as u64 != entry.size || archive::sha256_hex(bytes) != entry.sha256 {
            return Err(Error::Corruption(format!("{} fails its digest", entry.name)));
        }
    }
    let total: u64 = manifest.files.iter().map(|f| f.size).sum();
    if total != manifest.total_bytes {
        return Err(Error::Corruption("total_bytes disagrees with files".to_string()));
    }
    files.insert(MANIFEST_FILE.to_string(), manifest_bytes);
    Ok((manifest, files))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names() {
        for ok in ["s", "org", "lucene-english-analyzer-msmarco", "0a"] {
            validate_name(ok).unwrap();
        }
        for bad in ["", "-a", "A", "a_b", "a/b", "a.b"] {
            assert!(validate_name(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn token_is_redacted() {
        let loc = RegistryLocation::new("http://h", "o")
            .unwrap()
            .with_token(Some(Token::new("hunter2")));
        assert!(!format!("{loc:?}").contains("hunter2"));
    }

    #[test]
    fn location_schemes() {
        assert!(RegistryLocation::new("ftp://x", "o").is_err());
        assert!(RegistryLocation::new("file:///tmp/r", "Org").is_err());
        let loc = RegistryLocation::new("file:///tmp/r/", "org").unwrap();
        assert_eq!(loc.file_root().unwrap(), PathBuf::from("/tmp/r"));
        assert_eq!(loc.index_url("s", 0), "file:///tmp/r/indexes/org/s/0");
    }

    #[test]
    fn quota_default_is_fifty_gigabytes() {
        assert_eq!(DEFAULT_QUOTA_BYTES, 50 * 1_000_000_000);
        assert_eq!(PackOptions::default().quota_bytes, DEFAULT_QUOTA_BYTES);
    }
}
