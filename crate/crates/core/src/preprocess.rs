//! Partitioning a document stream into size-bounded shard files.
//!
//! Shards are JSON-lines files named `docs-{i:05}.jsonl` holding records with
//! exactly the fields `id` and `contents`. Metadata goes to a sidecar
//! `meta-{i:05}.jsonl` with one line per document in the same order.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Document;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Parse a size such as `"1GB"`, `"300B"`, `"2KB"` or `"4MiB"` into bytes.
///
/// Decimal units are powers of 10, binary units (`KiB`, `MiB`, `GiB`, `TiB`)
/// powers of 2. A bare number is a byte count. Fractions are accepted as long
/// as the result is a whole number of bytes.
pub fn parse_size(spec: &str) -> Result<u64> {
    let bad = || Error::SizeParse(spec.to_string());
    let s = spec.trim();
    let split = s
        .find(|c: char| !(c.is_ascii_digit() || c == '.'))
        .unwrap_or(s.len());
    let (number, unit) = s.split_at(split);
    if number.is_empty() {
        return Err(bad());
    }
    let multiplier: u64 = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1,
        "kb" => 1_000,
        "mb" => 1_000_000,
        "gb" => 1_000_000_000,
        "tb" => 1_000_000_000_000,
        "kib" => 1 << 10,
        "mib" => 1 << 20,
        "gib" => 1 << 30,
        "tib" => 1 << 40,
        _ => return Err(bad()),
    };
    let (whole, frac) = match number.split_once('.') {
        Some((w, f)) => (w, f),
        None => (number, ""),
    };
    if whole.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    if frac.contains('.') || frac.len() > 18 {
        return Err(bad());
    }
    let whole: u64 = if whole.is_empty() {
        0
    } else {
        whole.parse().map_err(|_| bad())?
    };
    let mut total = whole.checked_mul(multiplier).ok_or_else(bad)?;
    if !frac.is_empty() {
        let digits: u128 = frac.parse().map_err(|_| bad())?;
        let scale = 10u128.pow(frac.len() as u32);
        let scaled = digits * multiplier as u128;
        if !scaled.is_multiple_of(scale) {
            return Err(bad());
        }
        total = total
            .checked_add(u64::try_from(scaled / scale).map_err(|_| bad())?)
            .ok_or_else(bad)?;
    }
    Ok(total)
}

/// Canonical shard record. Field order is part of the file format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRecord {
    pub id: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataRecord {
    pub id: String,
    pub metadata: BTreeMap<String, String>,
}

pub fn doc_to_index_record(doc: &Document) -> IndexRecord {
    IndexRecord {
        id: doc.id.clone(),
        contents: doc.text.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardManifest {
    pub shards_path: PathBuf,
    pub shard_files: Vec<String>,
    pub metadata_files: Vec<String>,
    pub shard_size_limit: u64,
    pub total_docs: u64,
    pub per_shard_docs: Vec<u64>,
    pub column_to_index: String,
    /// Ids of documents larger than the limit on their own.
    #[serde(default)]
    pub oversize_docs: Vec<String>,
}

impl ShardManifest {
    pub fn load(shards_path: &Path) -> Result<Self> {
        let path = shards_path.join(MANIFEST_FILE);
        let bytes = fs::read(&path).map_err(|e| Error::io_at(&path, e))?;
        let mut manifest: ShardManifest = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Integrity(format!("{}: {e}", path.display())))?;
        manifest.shards_path = shards_path.to_path_buf();
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        let sum: u64 = self.per_shard_docs.iter().sum();
        if sum != self.total_docs {
            return Err(Error::Integrity(format!(
                "per-shard counts sum to {sum}, manifest says {}",
                self.total_docs
            )));
        }
        if self.per_shard_docs.len() != self.shard_files.len() {
            return Err(Error::Integrity("shard count mismatch".to_string()));
        }
        for (i, name) in self.shard_files.iter().enumerate() {
            if *name != shard_file_name(i) {
                return Err(Error::Integrity(format!("unexpected shard file {name:?}")));
            }
            let meta = fs::metadata(self.shards_path.join(name))
                .map_err(|e| Error::io_at(self.shards_path.join(name), e))?;
            if meta.len() == 0 {
                return Err(Error::Integrity(format!("shard {name} is empty")));
            }
        }
        Ok(())
    }

    pub fn shard_path(&self, ordinal: usize) -> PathBuf {
        self.shards_path.join(&self.shard_files[ordinal])
    }

    pub fn metadata_path(&self, ordinal: usize) -> Option<PathBuf> {
        self.metadata_files
            .get(ordinal)
            .map(|name| self.shards_path.join(name))
    }
}

pub fn shard_file_name(ordinal: usize) -> String {
    format!("docs-{ordinal:05}.jsonl")
}

pub fn metadata_file_name(ordinal: usize) -> String {
    format!("meta-{ordinal:05}.jsonl")
}

struct OpenShard {
    docs: BufWriter<File>,
    meta: BufWriter<File>,
    count: u64,
    bytes: u64,
}

impl OpenShard {
    fn create(dir: &Path, ordinal: usize) -> Result<Self> {
        let open = |name: String| -> Result<BufWriter<File>> {
            let path = dir.join(name);
            File::create(&path)
                .map(BufWriter::new)
                .map_err(|e| Error::io_at(path, e))
        };
        Ok(OpenShard {
            docs: open(shard_file_name(ordinal))?,
            meta: open(metadata_file_name(ordinal))?,
            count: 0,
            bytes: 0,
        })
    }

    fn finish(mut self) -> Result<u64> {
        self.docs.flush()?;
        self.meta.flush()?;
        Ok(self.count)
    }
}

/// Split `docs` into shards under `shards_path` of at most `shard_size` bytes
/// of text each (greedy, order preserving) and write `manifest.json`.
///
/// A document whose text alone exceeds the limit gets a shard of its own and
/// is listed in [`ShardManifest::oversize_docs`].
pub fn shard_dataset<I>(
    docs: I,
    shard_size: &str,
    column_to_index: &str,
    shards_path: &Path,
) -> Result<ShardManifest>
where
    I: IntoIterator<Item = Result<Document>>,
{
    let limit = parse_size(shard_size)?;
    if limit == 0 {
        return Err(Error::SizeParse(shard_size.to_string()));
    }
    if shards_path.exists() {
        let mut entries = fs::read_dir(shards_path).map_err(|e| Error::io_at(shards_path, e))?;
        if entries.next().is_some() {
            return Err(Error::Config(format!(
                "shard directory {} is not empty",
                shards_path.display()
            )));
        }
    }
    fs::create_dir_all(shards_path).map_err(|e| Error::io_at(shards_path, e))?;

    let mut per_shard_docs = Vec::new();
    let mut oversize_docs = Vec::new();
    let mut current: Option<OpenShard> = None;
    let mut line = Vec::new();

    for doc in docs {
        let doc = doc?;
        let size = doc.text.len() as u64;
        if size > limit {
            tracing::warn!(id = %doc.id, size, limit, "document exceeds shard size");
            oversize_docs.push(doc.id.clone());
        }
        let start_new = match &current {
            None => true,
            Some(shard) => shard.count > 0 && shard.bytes + size > limit,
        };
        if start_new {
            if let Some(shard) = current.take() {
                per_shard_docs.push(shard.finish()?);
            }
            current = Some(OpenShard::create(shards_path, per_shard_docs.len())?);
        }
        let shard = current.as_mut().expect("a shard is open");

        line.clear();
        serde_json::to_writer(&mut line, &doc_to_index_record(&doc))
            .map_err(|e| Error::Config(e.to_string()))?;
        line.push(b'\n');
        shard.docs.write_all(&line)?;

        line.clear();
        let meta = MetadataRecord {
            id: doc.id,
            metadata: doc.metadata,
        };
        serde_json::to_writer(&mut line, &meta).map_err(|e| Error::Config(e.to_string()))?;
        line.push(b'\n');
        shard.meta.write_all(&line)?;

        shard.count += 1;
        shard.bytes += size;
    }
    if let Some(shard) = current.take() {
        per_shard_docs.push(shard.finish()?);
    }

    let n = per_shard_docs.len();
    let manifest = ShardManifest {
        shards_path: shards_path.to_path_buf(),
        shard_files: (0..n).map(shard_file_name).collect(),
        metadata_files: (0..n).map(metadata_file_name).collect(),
        shard_size_limit: limit,
        total_docs: per_shard_docs.iter().sum(),
        per_shard_docs,
        column_to_index: column_to_index.to_string(),
        oversize_docs,
    };
    let path = shards_path.join(MANIFEST_FILE);
    let body = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&path, body).map_err(|e| Error::io_at(path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(sizes: &[usize]) -> Vec<Result<Document>> {
        sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| Ok(Document::new(format!("d{i}"), "x".repeat(n))))
            .collect()
    }

    #[test]
    fn sizes() {
        assert_eq!(parse_size("1GB").unwrap(), 1_000_000_000);
        assert_eq!(parse_size("300B").unwrap(), 300);
        assert_eq!(parse_size("2KB").unwrap(), 2_000);
        assert_eq!(parse_size("512").unwrap(), 512);
        assert_eq!(parse_size("1.5KB").unwrap(), 1_500);
        assert_eq!(parse_size("2 MiB").unwrap(), 2 << 20);
        assert_eq!(parse_size("1gib").unwrap(), 1 << 30);
        for bad in ["", "GB", "-1GB", "3XB", "1.0001B", "1..2KB", "99999999999999999999GB"] {
            assert!(parse_size(bad).is_err(), "{bad:?} should not parse");
        }
    }

    #[test]
    fn record_shape() {
        let rec = doc_to_index_record(&Document::new("d1", "hello"));
        assert_eq!(
            serde_json::to_string(&rec).unwrap(),
            r#"{"id":"d1","contents":"hello"}"#
        );
        let rec = doc_to_index_record(&Document::new("d2", ""));
        assert_eq!(
            serde_json::to_string(&rec).unwrap(),
            r#"{"id":"d2","contents":""}"#
        );
        let rec = doc_to_index_record(&Document::new("a/b", "x"));
        assert_eq!(
            serde_json::to_string(&rec).unwrap(),
            r#"{"id":"a/b","contents":"x"}"#
        );
    }

    #[test]
    fn greedy_split() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("shards");
        let m = shard_dataset(docs(&[100; 10]), "300B", "text", &out).unwrap();
        assert_eq!(m.per_shard_docs, vec![3, 3, 3, 1]);
        assert_eq!(m.total_docs, 10);
        assert_eq!(
            m.shard_files,
            vec![
                "docs-00000.jsonl",
                "docs-00001.jsonl",
                "docs-00002.jsonl",
                "docs-00003.jsonl"
            ]
        );
        let reloaded = ShardManifest::load(&out).unwrap();
        assert_eq!(reloaded, m);
        let first = fs::read_to_string(out.join("docs-00003.jsonl")).unwrap();
        assert_eq!(first, format!("{{\"id\":\"d9\",\"contents\":\"{}\"}}\n", "x".repeat(100)));
    }

    #[test]
    fn oversize_document_gets_own_shard() {
        let dir = tempfile::tempdir().unwrap();
        let m = shard_dataset(docs(&[500]), "300B", "text", dir.path()).unwrap();
        assert_eq!(m.per_shard_docs, vec![1]);
        assert_eq!(m.oversize_docs, vec!["d0"]);

        let dir = tempfile::tempdir().unwrap();
        let m = shard_dataset(docs(&[100, 500, 100]), "300B", "text", dir.path()).unwrap();
        assert_eq!(m.per_shard_docs, vec![1, 1, 1]);
    }

    #[test]
    fn empty_stream() {
        let dir = tempfile::tempdir().unwrap();
        let m = shard_dataset(docs(&[]), "1GB", "text", dir.path()).unwrap();
        assert_eq!(m.total_docs, 0);
        assert!(m.shard_files.is_empty());
    }

    #[test]
    fn refuses_non_empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("junk"), "x").unwrap();
        assert!(matches!(
            shard_dataset(docs(&[1]), "1KB", "text", dir.path()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn stream_error_propagates() {
        let dir = tempfile::tempdir().unwrap();
        let items = vec![
            Ok(Document::new("a", "x")),
            Err(Error::MalformedRecord {
                line: 2,
                message: "bad".into(),
            }),
        ];
        assert!(shard_dataset(items, "1KB", "text", dir.path()).is_err());
    }
}
