//! Immutable on-disk inverted index.
//!
//! An index directory holds five files: `terms.dict`, `postings.bin`,
//! `docs.tbl`, `stats.json` and `analyzer.json` (see [`format`] for the binary
//! layouts). A sixth, `source.json`, points back at the shard directory the
//! index was built from; it is a local convenience and is never packaged.

mod build;
pub mod format;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

pub use build::{build_index, build_index_with, BuildSummary};
pub use format::{DocEntry, PostingsIter, TermEntry};

use crate::analysis::{Analyzer, AnalyzerRecord};
use crate::error::{Error, Result};

pub const TERMS_FILE: &str = "terms.dict";
pub const POSTINGS_FILE: &str = "postings.bin";
pub const DOCS_FILE: &str = "docs.tbl";
pub const STATS_FILE: &str = "stats.json";
pub const ANALYZER_FILE: &str = "analyzer.json";
pub const SOURCE_FILE: &str = "source.json";

/// The files that make up an index, in archive order.
pub const INDEX_FILES: [&str; 5] = [ANALYZER_FILE, DOCS_FILE, POSTINGS_FILE, STATS_FILE, TERMS_FILE];

/// Internal dense document id, assigned in shard order then line order.
pub type DocId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub num_docs: u64,
    pub num_terms: u64,
    pub total_tokens: u64,
    pub avgdl: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourcePointer {
    pub shards_path: PathBuf,
}

/// Materialized postings for one term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PostingsList {
    pub term: String,
    pub df: u32,
    pub entries: Vec<(DocId, u32)>,
}

/// Stats recorded at build time, read without touching postings.
pub fn index_stats(index_path: &Path) -> Result<IndexStats> {
    let path = index_path.join(STATS_FILE);
    let bytes = fs::read(&path)
        .map_err(|e| Error::Integrity(format!("cannot read {}: {e}", path.display())))?;
    let stats: IndexStats = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Integrity(format!("{}: {e}", path.display())))?;
    if stats.num_docs == 0 {
        return Err(Error::Integrity("stats record zero documents".to_string()));
    }
    Ok(stats)
}

/// An opened, read-only index. Safe to share between threads.
#[derive(Debug)]
pub struct Index {
    path: PathBuf,
    terms: Vec<TermEntry>,
    postings: Vec<u8>,
    docs: Vec<DocEntry>,
    doc_lens: Vec<u32>,
    stats: IndexStats,
    analyzer: Analyzer,
    by_external_id: OnceLock<HashMap<String, DocId>>,
}

fn read_index_file(dir: &Path, name: &str) -> Result<Vec<u8>> {
    let path = dir.join(name);
    fs::read(&path).map_err(|e| Error::Integrity(format!("cannot read {}: {e}", path.display())))
}

impl Index {
    pub fn open(path: &Path) -> Result<Self> {
        let stats = index_stats(path)?;
        let terms = format::decode_terms(&read_index_file(path, TERMS_FILE)?)?;
        let postings = read_index_file(path, POSTINGS_FILE)?;
        let docs = format::decode_docs(&read_index_file(path, DOCS_FILE)?)?;
        let record: AnalyzerRecord = serde_json::from_slice(&read_index_file(path, ANALYZER_FILE)?)
            .map_err(|e| Error::Integrity(format!("{ANALYZER_FILE}: {e}")))?;
        let analyzer = Analyzer::from_record(record)?;

        if stats.num_docs != docs.len() as u64 || stats.num_terms != terms.len() as u64 {
            return Err(Error::Integrity(
                "stats disagree with term dictionary or doc table".to_string(),
            ));
        }
        if postings.len() < 8 || &postings[..8] != format::POSTINGS_MAGIC {
            return Err(Error::Integrity(format!("{POSTINGS_FILE}: bad magic")));
        }
        for entry in &terms {
            let end = entry.offset.checked_add(entry.length);
            if entry.offset < 8 || end.is_none_or(|e| e > postings.len() as u64) {
                return Err(Error::Integrity(format!(
                    "postings of {:?} out of bounds",
                    entry.term
                )));
            }
        }
        if terms.windows(2).any(|w| w[0].term >= w[1].term) {
            return Err(Error::Integrity("term dictionary is not sorted".to_string()));
        }
        Ok(Index {
            path: path.to_path_buf(),
            terms,
            postings,
            doc_lens: docs.iter().map(|d| d.doc_len).collect(),
            docs,
            stats,
            analyzer,
            by_external_id: OnceLock::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn stats(&self) -> &IndexStats {
        &self.stats
    }

    pub fn analyzer(&self) -> &Analyzer {
        &self.analyzer
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn terms(&self) -> &[TermEntry] {
        &self.terms
    }

    pub fn term(&self, term: &str) -> Option<&TermEntry> {
        self.terms
            .binary_search_by(|e| e.term.as_str().cmp(term))
            .ok()
            .map(|i| &self.terms[i])
    }

    pub fn postings(&self, entry: &TermEntry) -> PostingsIter<'_> {
        let start = entry.offset as usize;
        PostingsIter::new(&self.postings[start..start + entry.length as usize])
    }

    pub fn postings_list(&self, term: &str) -> Option<PostingsList> {
        let entry = self.term(term)?;
        Some(PostingsList {
            term: entry.term.clone(),
            df: entry.df,
            entries: self.postings(entry).collect(),
        })
    }

    pub fn doc(&self, docid: DocId) -> Option<&DocEntry> {
        self.docs.get(docid as usize)
    }

    pub fn docs(&self) -> &[DocEntry] {
        &self.docs
    }

    pub fn doc_len(&self, docid: DocId) -> u32 {
        self.doc_lens[docid as usize]
    }

    pub fn docid_of(&self, external_id: &str) -> Option<DocId> {
        self.by_external_id
            .get_or_init(|| {
                self.docs
                    .iter()
                    .enumerate()
                    .map(|(i, d)| (d.external_id.clone(), i as DocId))
                    .collect()
            })
            .get(external_id)
            .copied()
    }

    /// The shard directory recorded at build time, if still present.
    pub fn source_shards(&self) -> Option<PathBuf> {
        let bytes = fs::read(self.path.join(SOURCE_FILE)).ok()?;
        let pointer: SourcePointer = serde_json::from_slice(&bytes).ok()?;
        pointer.shards_path.is_dir().then_some(pointer.shards_path)
    }
}
