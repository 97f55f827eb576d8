use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use super::format::{self, DocEntry, TermEntry, NO_METADATA};
use super::{IndexStats, SourcePointer, ANALYZER_FILE, DOCS_FILE, POSTINGS_FILE, SOURCE_FILE, STATS_FILE, TERMS_FILE};
use crate::analysis::{Analyzer, AnalyzerConfig};
use crate::error::{Error, Result};
use crate::preprocess::{IndexRecord, ShardManifest};

#[derive(Debug, Clone, PartialEq)]
pub struct BuildSummary {
    pub stats: IndexStats,
    pub elapsed: Duration,
}

struct ShardInversion {
    docs: Vec<DocEntry>,
    /// term → (shard-local docid, tf), ascending by docid
    postings: HashMap<String, Vec<(u32, u32)>>,
    tokens: u64,
}

fn line_offsets(bytes: &[u8]) -> impl Iterator<Item = (u64, &[u8])> {
    let mut start = 0usize;
    std::iter::from_fn(move || {
        while start < bytes.len() {
            let end = bytes[start..]
                .iter()
                .position(|&b| b == b'\n')
                .map_or(bytes.len(), |p| start + p);
            let line_start = start;
            start = end + 1;
            let line = &bytes[line_start..end];
            if !line.is_empty() {
                return Some((line_start as u64, line));
            }
        }
        None
    })
}

fn invert_shard(manifest: &ShardManifest, ordinal: usize, analyzer: &Analyzer) -> Result<ShardInversion> {
    let name = &manifest.shard_files[ordinal];
    let path = manifest.shard_path(ordinal);
    let bytes = fs::read(&path).map_err(|e| Error::io_at(&path, e))?;
    let meta_offsets: Vec<u64> = match manifest.metadata_path(ordinal) {
        Some(meta) if meta.exists() => {
            let meta_bytes = fs::read(&meta).map_err(|e| Error::io_at(&meta, e))?;
            line_offsets(&meta_bytes).map(|(o, _)| o).collect()
        }
        _ => Vec::new(),
    };

    let mut docs = Vec::new();
    let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();
    let mut tf: HashMap<String, u32> = HashMap::new();
    let mut tokens = 0u64;
    for (line_no, (offset, line)) in line_offsets(&bytes).enumerate() {
        let record: IndexRecord = serde_json::from_slice(line).map_err(|e| Error::Build {
            shard: name.clone(),
            line: line_no as u64 + 1,
            message: e.to_string(),
        })?;
        let local = docs.len() as u32;
        tf.clear();
        let terms = analyzer.terms(&record.contents);
        for term in terms.iter() {
            *tf.entry(term.clone()).or_default() += 1;
        }
        for (term, count) in tf.drain() {
            postings.entry(term).or_default().push((local, count));
        }
        tokens += terms.len() as u64;
        docs.push(DocEntry {
            external_id: record.id,
            doc_len: terms.len() as u32,
            shard: ordinal as u32,
            offset,
            meta_offset: meta_offsets.get(local as usize).copied().unwrap_or(NO_METADATA),
        });
    }
    Ok(ShardInversion {
        docs,
        postings,
        tokens,
    })
}

/// Build an index at `index_path` from the shards under `shards_path`.
///
/// Shards are inverted in parallel on a pool of `threads` workers and merged
/// in shard order, so the output bytes do not depend on `threads`.
pub fn build_index(
    shards_path: &Path,
    index_path: &Path,
    analyzer_config: &AnalyzerConfig,
    threads: usize,
) -> Result<BuildSummary> {
    let analyzer = Analyzer::new(analyzer_config)?;
    build_index_with(shards_path, index_path, &analyzer, threads)
}

pub fn build_index_with(
    shards_path: &Path,
    index_path: &Path,
    analyzer: &Analyzer,
    threads: usize,
) -> Result<BuildSummary> {
    let started = Instant::now();
    if threads == 0 {
        return Err(Error::Parameter("threads must be positive".to_string()));
    }
    let manifest = ShardManifest::load(shards_path)?;
    if manifest.total_docs == 0 {
        return Err(Error::EmptyCorpus);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let shards: Vec<ShardInversion> = pool.install(|| {
        (0..manifest.shard_files.len())
            .into_par_iter()
            .map(|ordinal| invert_shard(&manifest, ordinal, analyzer))
            .collect::<Result<_>>()
    })?;

    let mut docs = Vec::with_capacity(manifest.total_docs as usize);
    let mut merged: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
    let mut seen = HashSet::with_capacity(manifest.total_docs as usize);
    let mut total_tokens = 0u64;
    for shard in shards {
        let base = docs.len() as u32;
        for doc in &shard.docs {
            if !seen.insert(doc.external_id.clone()) {
                return Err(Error::DuplicateId {
                    id: doc.external_id.clone(),
                });
            }
        }
        docs.extend(shard.docs);
        total_tokens += shard.tokens;
        for (term, entries) in shard.postings {
            merged
                .entry(term)
                .or_default()
                .extend(entries.into_iter().map(|(d, tf)| (d + base, tf)));
        }
    }
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let mut postings = Vec::new();
    postings.extend_from_slice(format::POSTINGS_MAGIC);
    let mut terms = Vec::with_capacity(merged.len());
    for (term, entries) in merged {
        let offset = postings.len() as u64;
        format::encode_postings(&mut postings, &entries);
        terms.push(TermEntry {
            term,
            df: entries.len() as u32,
            offset,
            length: postings.len() as u64 - offset,
        });
    }

    let stats = IndexStats {
        num_docs: docs.len() as u64,
        num_terms: terms.len() as u64,
        total_tokens,
        avgdl: total_tokens as f64 / docs.len() as f64,
    };

    fs::create_dir_all(index_path).map_err(|e| Error::io_at(index_path, e))?;
    let write = |name: &str, bytes: &[u8]| -> Result<()> {
        let path = index_path.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io_at(path, e))
    };
    write(TERMS_FILE, &format::encode_terms(&terms))?;
    write(POSTINGS_FILE, &postings)?;
    write(DOCS_FILE, &format::encode_docs(&docs))?;
    write(STATS_FILE, &serde_json::to_vec_pretty(&stats).expect("stats serialize"))?;
    write(ANALYZER_FILE, &analyzer.record().to_canonical_json())?;
    let source = SourcePointer {
        shards_path: fs::canonicalize(shards_path).unwrap_or_else(|_| shards_path.to_path_buf()),
    };
    write(SOURCE_FILE, &serde_json::to_vec_pretty(&source).expect("source serialize"))?;

    let elapsed = started.elapsed();
    tracing::info!(
        num_docs = stats.num_docs,
        num_terms = stats.num_terms,
        elapsed_ms = elapsed.as_millis() as u64,
        "index built"
    );
    Ok(BuildSummary { stats, elapsed })
}
