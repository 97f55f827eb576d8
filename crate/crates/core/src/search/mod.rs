//! BM25 ranked retrieval and lazy pagination.
//!
//! [`Index::search`] scores documents term-at-a-time (disjunctive semantics,
//! duplicate query terms counted with multiplicity) and keeps the best
//! `num_results` in a bounded heap. Rankings are total: equal scores are
//! ordered by ascending internal docid.

mod bm25;
mod page;
mod snippet;

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use bm25::{idf, score_bm25, Bm25Params};
pub use page::{num_pages, resolve_page, result_page, Docstore, ResultPage, ResultRow, StoredDoc};
pub use snippet::{make_snippet, DEFAULT_WINDOW, MARK_CLOSE, MARK_OPEN};

use crate::analysis::{Analyzer, AnalyzerConfig};
use crate::error::{Error, Result};
use crate::index::{DocId, Index};

/// Per-thread score accumulator, all zeros between searches. `dirty` is left
/// set if a search unwinds before resetting the touched slots.
#[derive(Default)]
struct Scratch {
    scores: Vec<f64>,
    dirty: bool,
}

thread_local! {
    static SCRATCH: RefCell<Scratch> = RefCell::default();
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub docid: DocId,
    pub score: f64,
}

/// Ranked internal ids for one query; documents are not materialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedIds {
    pub query: String,
    /// Analyzed query terms, in query order.
    pub terms: Vec<String>,
    pub hits: Vec<ScoredDoc>,
    pub num_requested: usize,
    pub params: Bm25Params,
}

impl RankedIds {
    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn docids(&self) -> Vec<DocId> {
        self.hits.iter().map(|h| h.docid).collect()
    }
}

/// How the query is analyzed.
#[derive(Debug, Clone, Default)]
pub enum AnalyzerChoice {
    /// The analyzer recorded in the index.
    #[default]
    Recorded,
    /// Caller's config, which must resolve to the recorded analyzer.
    Expect(AnalyzerConfig),
    /// Caller's config, used even if it differs from the recorded one.
    Override(AnalyzerConfig),
}

#[derive(Debug, Clone, Default)]
pub struct SearchOptions {
    pub params: Bm25Params,
    pub analyzer: AnalyzerChoice,
}

/// Heap entry ordered so that the *worst* hit is the heap's maximum.
#[derive(Debug, Clone, Copy)]
struct Candidate(ScoredDoc);

impl Candidate {
    /// `Less` means `self` ranks ahead of `other`.
    fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .score
            .total_cmp(&self.0.score)
            .then(self.0.docid.cmp(&other.0.docid))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.rank_cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank_cmp(other)
    }
}

impl Index {
    fn query_analyzer(&self, choice: &AnalyzerChoice) -> Result<Option<Analyzer>> {
        match choice {
            AnalyzerChoice::Recorded => Ok(None),
            AnalyzerChoice::Expect(config) => {
                let supplied = Analyzer::new(config)?;
                if supplied.fingerprint() != self.analyzer().fingerprint() {
                    return Err(Error::AnalyzerMismatch {
                        recorded: self.analyzer().fingerprint().to_string(),
                        supplied: supplied.fingerprint().to_string(),
                    });
                }
                Ok(None)
            }
            AnalyzerChoice::Override(config) => Ok(Some(Analyzer::new(config)?)),
        }
    }

    /// Top `num_results` documents for `query` under BM25.
    pub fn search(&self, query: &str, num_results: usize, options: &SearchOptions) -> Result<RankedIds> {
        if num_results == 0 {
            return Err(Error::Parameter("num_results must be positive".to_string()));
        }
        options.params.validate()?;
        let override_analyzer = self.query_analyzer(&options.analyzer)?;
        let analyzer = override_analyzer.as_ref().unwrap_or(self.analyzer());
        let terms = analyzer.terms(query);
        if terms.is_empty() {
            return Err(Error::EmptyQuery);
        }

        let stats = self.stats();
        let hits = SCRATCH.with(|scratch| {
            let mut scratch = scratch.borrow_mut();
            let Scratch { scores, dirty } = &mut *scratch;
            if *dirty {
                scores.fill(0.0);
            }
            scores.resize(self.num_docs(), 0.0);
            *dirty = true;
            let mut touched: Vec<DocId> = Vec::new();
            // Accumulate per query-term occurrence, in query order.
            for term in &terms {
                let Some(entry) = self.term(term) else {
                    continue;
                };
                let term_idf = idf(entry.df, stats.num_docs);
                for (docid, tf) in self.postings(entry) {
                    let slot = &mut scores[docid as usize];
                    if *slot == 0.0 {
                        touched.push(docid);
                    }
                    *slot += bm25::term_score(tf, term_idf, self.doc_len(docid), stats.avgdl, options.params);
                }
            }

            let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(num_results.min(touched.len()) + 1);
            for docid in touched {
                let slot = &mut scores[docid as usize];
                let candidate = Candidate(ScoredDoc { docid, score: *slot });
                *slot = 0.0;
                if heap.len() < num_results {
                    heap.push(candidate);
                } else if let Some(worst) = heap.peek() {
                    if candidate < *worst {
                        heap.pop();
                        heap.push(candidate);
                    }
                }
            }
            *dirty = false;
            heap.into_sorted_vec().into_iter().map(|c| c.0).collect()
        });
        Ok(RankedIds {
            query: query.to_string(),
            terms,
            hits,
            num_requested: num_results,
            params: options.params,
        })
    }
}

/// Open the index at `index_path` and rank documents for `query`.
pub fn result_indices(
    query: &str,
    num_results: usize,
    index_path: &Path,
    options: &SearchOptions,
) -> Result<RankedIds> {
    Index::open(index_path)?.search(query, num_results, options)
}
