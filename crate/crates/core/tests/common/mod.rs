#![allow(dead_code)]

use std::path::{Path, PathBuf};

use plugsearch::analysis::AnalyzerConfig;
use plugsearch::index::build_index;
use plugsearch::ingest::Document;
use plugsearch::preprocess::shard_dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn three_docs() -> Vec<Document> {
    vec![
        Document::new("D1", "a b c a"),
        Document::new("D2", "a a a d"),
        Document::new("D3", "b c d e"),
    ]
}

/// Shard `docs` under `dir/shards` and index them into `dir/index`.
pub fn build(dir: &Path, docs: &[Document], shard_size: &str, threads: usize) -> (PathBuf, PathBuf) {
    let shards = dir.join("shards");
    let index = dir.join("index");
    shard_dataset(docs.iter().cloned().map(Ok), shard_size, "text", &shards).unwrap();
    build_index(&shards, &index, &AnalyzerConfig::default(), threads).unwrap();
    (shards, index)
}

/// Word `i` of the synthetic vocabulary.
pub fn word(i: usize) -> String {
    format!("w{i}")
}

/// Zipf-like synthetic documents: word ranks drawn as `vocab^u` so low ranks
/// dominate, lengths uniform in `min_len..=max_len`.
pub fn synthetic(n: usize, vocab: usize, min_len: usize, max_len: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let len = rng.gen_range(min_len..=max_len);
            let words: Vec<String> = (0..len)
                .map(|_| {
                    let u: f64 = rng.gen();
                    word(((vocab as f64).powf(u) as usize).saturating_sub(1).min(vocab - 1))
                })
                .collect();
            let mut doc = Document::new(format!("doc-{i:06}"), words.join(" "));
            doc.metadata.insert("n".to_string(), i.to_string());
            doc
        })
        .collect()
}

/// Queries of 1..=3 words drawn like the documents.
pub fn queries(count: usize, vocab: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let len = rng.gen_range(1..=3);
            (0..len)
                .map(|_| {
                    let u: f64 = rng.gen();
                    word(((vocab as f64).powf(u) as usize).saturating_sub(1).min(vocab - 1))
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}
