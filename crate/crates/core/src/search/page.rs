use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use memmap2::Mmap;
use serde::{Deserialize, Serialize};

use super::snippet::{make_snippet, DEFAULT_WINDOW};
use super::RankedIds;
use crate::error::{Error, Result};
use crate::index::format::NO_METADATA;
use crate::index::{DocId, Index};
use crate::preprocess::{IndexRecord, MetadataRecord, ShardManifest};

/// A full document as read back from its shard.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredDoc {
    pub id: String,
    pub text: String,
    pub metadata: BTreeMap<String, String>,
}

/// Read-only, shard-backed document storage. Shard files are memory-mapped
/// at open; records are decoded only when requested.
#[derive(Debug)]
pub struct Docstore {
    index: Arc<Index>,
    shards: Vec<Mmap>,
    metadata: Vec<Option<Mmap>>,
    reads: AtomicU64,
}

fn map(path: &Path) -> Result<Mmap> {
    let file = File::open(path).map_err(|e| Error::io_at(path, e))?;
    // SAFETY: shard files are written once by `shard_dataset` and treated as
    // immutable afterwards.
    unsafe { Mmap::map(&file) }.map_err(|e| Error::io_at(path, e))
}

fn line_at(bytes: &[u8], offset: u64) -> Option<&[u8]> {
    let start = usize::try_from(offset).ok()?;
    let rest = bytes.get(start..)?;
    let end = rest.iter().position(|&b| b == b'\n').unwrap_or(rest.len());
    Some(&rest[..end])
}

impl Docstore {
    pub fn open(shards_path: &Path, index: Arc<Index>) -> Result<Self> {
        let manifest = ShardManifest::load(shards_path)?;
        if manifest.total_docs != index.num_docs() as u64 {
            return Err(Error::Integrity(format!(
                "shards hold {} documents, index has {}",
                manifest.total_docs,
                index.num_docs()
            )));
        }
        let mut shards = Vec::with_capacity(manifest.shard_files.len());
        let mut metadata = Vec::with_capacity(manifest.shard_files.len());
        for ordinal in 0..manifest.shard_files.len() {
            shards.push(map(&manifest.shard_path(ordinal))?);
            metadata.push(match manifest.metadata_path(ordinal) {
                Some(path) if path.exists() => Some(map(&path)?),
                _ => None,
            });
        }
        Ok(Docstore {
            index,
            shards,
            metadata,
            reads: AtomicU64::new(0),
        })
    }

    /// Open the shard directory recorded in the index at build time.
    pub fn open_for(index: Arc<Index>) -> Result<Self> {
        let shards = index.source_shards().ok_or_else(|| {
            Error::Config(format!(
                "index {} does not point at an existing shard directory",
                index.path().display()
            ))
        })?;
        Docstore::open(&shards, index)
    }

    pub fn index(&self) -> &Arc<Index> {
        &self.index
    }

    /// Number of records materialized so far.
    pub fn reads(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn fetch(&self, docid: DocId) -> Result<StoredDoc> {
        let entry = self
            .index
            .doc(docid)
            .ok_or_else(|| Error::UnknownDocument(docid.to_string()))?;
        self.reads.fetch_add(1, Ordering::Relaxed);
        let shard = self
            .shards
            .get(entry.shard as usize)
            .ok_or_else(|| Error::Integrity(format!("no shard {}", entry.shard)))?;
        let line = line_at(shard, entry.offset)
            .ok_or_else(|| Error::Integrity(format!("offset {} outside shard", entry.offset)))?;
        let record: IndexRecord = serde_json::from_slice(line)
            .map_err(|e| Error::Integrity(format!("shard record for {docid}: {e}")))?;
        if record.id != entry.external_id {
            return Err(Error::Integrity(format!(
                "docstore holds {:?} where the index expects {:?}",
                record.id, entry.external_id
            )));
        }
        let mut metadata = BTreeMap::new();
        if entry.meta_offset != NO_METADATA {
            if let Some(Some(meta)) = self.metadata.get(entry.shard as usize) {
                if let Some(line) = line_at(meta, entry.meta_offset) {
                    let meta: MetadataRecord = serde_json::from_slice(line)
                        .map_err(|e| Error::Integrity(format!("metadata for {docid}: {e}")))?;
                    metadata = meta.metadata;
                }
            }
        }
        Ok(StoredDoc {
            id: record.id,
            text: record.contents,
            metadata,
        })
    }

    pub fn fetch_external(&self, external_id: &str) -> Result<StoredDoc> {
        let docid = self
            .index
            .docid_of(external_id)
            .ok_or_else(|| Error::UnknownDocument(external_id.to_string()))?;
        self.fetch(docid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub id: String,
    pub score: f64,
    pub text: String,
    pub metadata: BTreeMap<String, String>,
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultPage {
    pub query: String,
    /// Resolved, non-negative page number.
    pub page_number: u64,
    pub results_per_page: u64,
    pub total_results: u64,
    pub num_pages: u64,
    pub rows: Vec<ResultRow>,
}

pub fn num_pages(total: usize, per_page: usize) -> usize {
    total.div_ceil(per_page)
}

/// Map a possibly negative page number onto `0..num_pages`.
pub fn resolve_page(page: i64, total: usize, per_page: usize) -> Result<usize> {
    if per_page == 0 {
        return Err(Error::Parameter("results_per_page must be positive".to_string()));
    }
    let pages = num_pages(total, per_page) as i64;
    if pages == 0 {
        return if page == 0 {
            Ok(0)
        } else {
            Err(Error::PageOutOfRange { page, min: 0, max: 0 })
        };
    }
    let resolved = if page < 0 { pages + page } else { page };
    if !(0..pages).contains(&resolved) {
        return Err(Error::PageOutOfRange {
            page,
            min: -pages,
            max: pages - 1,
        });
    }
    Ok(resolved as usize)
}

/// Materialize one page of `ranked`. Only the documents on that page are
/// read from `docstore`; `-1` is the last page.
pub fn result_page(docstore: &Docstore, ranked: &RankedIds, page: i64, results_per_page: usize) -> Result<ResultPage> {
    let total = ranked.hits.len();
    let resolved = resolve_page(page, total, results_per_page)?;
    let start = (resolved * results_per_page).min(total);
    let end = (start + results_per_page).min(total);
    let terms: HashSet<String> = ranked.terms.iter().cloned().collect();
    let analyzer = docstore.index().analyzer();
    let rows = ranked.hits[start..end]
        .iter()
        .map(|hit| {
            let doc = docstore.fetch(hit.docid)?;
            Ok(ResultRow {
                snippet: make_snippet(analyzer, &doc.text, &terms, DEFAULT_WINDOW),
                id: doc.id,
                score: hit.score,
                text: doc.text,
                metadata: doc.metadata,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResultPage {
        query: ranked.query.clone(),
        page_number: resolved as u64,
        results_per_page: results_per_page as u64,
        total_results: total as u64,
        num_pages: num_pages(total, results_per_page) as u64,
        rows,
    })
}
