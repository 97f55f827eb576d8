//! Text analysis: segmentation, case folding, punctuation stripping,
//! stopword removal and optional WordPiece-style subword splitting.
//!
//! The same [`Analyzer`] is used when indexing and when parsing queries. An
//! index records the resolved analyzer ([`AnalyzerRecord`]) so query-time
//! analysis can be rebuilt exactly; [`Analyzer::fingerprint`] identifies it.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_segmentation::UnicodeSegmentation;

use crate::error::{Error, Result};

/// Piece emitted for words the vocabulary cannot cover.
pub const UNKNOWN_PIECE: &str = "[UNK]";
const CONTINUATION_PREFIX: &str = "##";
const MAX_SUBWORD_CHARS: usize = 100;

const SHIPPED_STOPWORDS: &[(&str, &str)] = &[
    ("ar", include_str!("../data/stopwords/ar.txt")),
    ("bn", include_str!("../data/stopwords/bn.txt")),
    ("en", include_str!("../data/stopwords/en.txt")),
    ("fr", include_str!("../data/stopwords/fr.txt")),
    ("sw", include_str!("../data/stopwords/sw.txt")),
];

/// Languages with a built-in stopword list.
pub fn shipped_stopword_languages() -> impl Iterator<Item = &'static str> {
    SHIPPED_STOPWORDS.iter().map(|(lang, _)| *lang)
}

fn shipped_stopwords(tag: &str) -> Option<&'static str> {
    // "en-US" selects the "en" list.
    let primary = tag.split(['-', '_']).next().unwrap_or(tag).to_ascii_lowercase();
    SHIPPED_STOPWORDS
        .iter()
        .find(|(lang, _)| *lang == primary)
        .map(|(_, body)| *body)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TokenizerMode {
    /// UAX #29 word boundaries.
    #[default]
    UnicodeWord,
    Whitespace,
    /// Word segmentation followed by greedy longest-match subword pieces.
    Subword,
}

impl std::str::FromStr for TokenizerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unicode-word" => Ok(TokenizerMode::UnicodeWord),
            "whitespace" => Ok(TokenizerMode::Whitespace),
            "subword" => Ok(TokenizerMode::Subword),
            other => Err(Error::Config(format!("unknown tokenizer mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopwordSource {
    /// One of the shipped lists, by language tag.
    Named(String),
    File(PathBuf),
}

/// Declarative description of an analysis chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyzerConfig {
    pub mode: TokenizerMode,
    pub lowercase: bool,
    pub strip_punctuation: bool,
    #[serde(default)]
    pub stopwords: Option<StopwordSource>,
    #[serde(default)]
    pub subword_vocab: Option<PathBuf>,
    /// Selects a shipped stopword list when `stopwords` is not given.
    #[serde(default)]
    pub language_tag: Option<String>,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        AnalyzerConfig {
            mode: TokenizerMode::UnicodeWord,
            lowercase: true,
            strip_punctuation: true,
            stopwords: None,
            subword_vocab: None,
            language_tag: None,
        }
    }
}

impl AnalyzerConfig {
    pub fn with_stopwords(mut self, language: &str) -> Self {
        self.stopwords = Some(StopwordSource::Named(language.to_string()));
        self
    }
}

/// An analyzer with every external resource inlined. This is what an index
/// stores in `analyzer.json`; its serialized form is canonical.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyzerRecord {
    pub mode: TokenizerMode,
    pub lowercase: bool,
    pub strip_punctuation: bool,
    pub language_tag: Option<String>,
    /// Sorted, normalized, deduplicated.
    pub stopwords: Vec<String>,
    /// Vocabulary pieces in file order; empty unless mode is subword.
    pub vocab: Vec<String>,
}

impl AnalyzerRecord {
    pub fn to_canonical_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("analyzer record serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub term: String,
    pub position: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    pub tokens: Vec<Token>,
}

impl TokenStream {
    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.term.as_str())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone)]
struct Vocabulary {
    pieces: HashSet<String>,
    max_piece_chars: usize,
}

impl Vocabulary {
    fn new(pieces: &[String]) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::Config("subword vocabulary is empty".to_string()));
        }
        let max_piece_chars = pieces
            .iter()
            .map(|p| p.strip_prefix(CONTINUATION_PREFIX).unwrap_or(p).chars().count())
            .max()
            .unwrap_or(1);
        Ok(Vocabulary {
            pieces: pieces.iter().cloned().collect(),
            max_piece_chars,
        })
    }

    /// Greedy longest-match from the left; continuation pieces carry `##`.
    fn split(&self, word: &str, out: &mut Vec<String>) {
        let bounds: Vec<usize> = word
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(word.len()))
            .collect();
        let n_chars = bounds.len() - 1;
        if n_chars > MAX_SUBWORD_CHARS {
            out.push(UNKNOWN_PIECE.to_string());
            return;
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        let mut candidate = String::new();
        while start < n_chars {
            let mut end = n_chars.min(start + self.max_piece_chars);
            let mut found = None;
            while end > start {
                candidate.clear();
                if start > 0 {
                    candidate.push_str(CONTINUATION_PREFIX);
                }
                candidate.push_str(&word[bounds[start]..bounds[end]]);
                if self.pieces.contains(&candidate) {
                    found = Some(candidate.clone());
                    break;
                }
                end -= 1;
            }
            match found {
                Some(piece) => {
                    pieces.push(piece);
                    start = end;
                }
                None => {
                    out.push(UNKNOWN_PIECE.to_string());
                    return;
                }
            }
        }
        out.extend(pieces);
    }
}

/// An immutable text → tokens function.
#[derive(Debug, Clone)]
pub struct Analyzer {
    record: AnalyzerRecord,
    stopwords: HashSet<String>,
    vocab: Option<Vocabulary>,
    fingerprint: String,
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let body = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(parse_lines(&body))
}

fn parse_lines(body: &str) -> Vec<String> {
    body.lines()
        .map(|l| l.trim_end_matches('\r').trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

impl Analyzer {
    pub fn new(config: &AnalyzerConfig) -> Result<Self> {
        let stopwords = match (&config.stopwords, &config.language_tag) {
            (Some(StopwordSource::Named(name)), _) => parse_lines(
                shipped_stopwords(name)
                    .ok_or_else(|| Error::Config(format!("no stopword list named {name:?}")))?,
            ),
            (Some(StopwordSource::File(path)), _) => read_lines(path)?,
            (None, Some(tag)) => match shipped_stopwords(tag) {
                Some(body) => parse_lines(body),
                None => {
                    tracing::warn!(language = %tag, "no stopword list for language");
                    Vec::new()
                }
            },
            (None, None) => Vec::new(),
        };
        let vocab = match (config.mode, &config.subword_vocab) {
            (TokenizerMode::Subword, Some(path)) => read_lines(path)?,
            (TokenizerMode::Subword, None) => {
                return Err(Error::Config(
                    "subword mode requires a vocabulary file".to_string(),
                ))
            }
            _ => Vec::new(),
        };
        let mut normalized: Vec<String> = stopwords
            .iter()
            .map(|w| {
                if config.lowercase {
                    caseless::default_case_fold_str(w)
                } else {
                    w.clone()
                }
            })
            .collect();
        normalized.sort();
        normalized.dedup();
        Self::from_record(AnalyzerRecord {
            mode: config.mode,
            lowercase: config.lowercase,
            strip_punctuation: config.strip_punctuation,
            language_tag: config.language_tag.clone(),
            stopwords: normalized,
            vocab,
        })
    }

    pub fn from_record(record: AnalyzerRecord) -> Result<Self> {
        let vocab = match record.mode {
            TokenizerMode::Subword => Some(Vocabulary::new(&record.vocab)?),
            _ => None,
        };
        let fingerprint = hex::encode(Sha256::digest(record.to_canonical_json()));
        Ok(Analyzer {
            stopwords: record.stopwords.iter().cloned().collect(),
            vocab,
            fingerprint,
            record,
        })
    }

    pub fn record(&self) -> &AnalyzerRecord {
        &self.record
    }

    /// sha-256 of the canonical record; equal fingerprints mean identical
    /// behavior.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Raw segments of `text` with their byte offsets, before normalization.
    pub fn segments<'a>(&self, text: &'a str) -> Vec<(usize, &'a str)> {
        match self.record.mode {
            TokenizerMode::Whitespace => {
                let base = text.as_ptr() as usize;
                text.split_whitespace()
                    .map(|s| (s.as_ptr() as usize - base, s))
                    .collect()
            }
            TokenizerMode::UnicodeWord | TokenizerMode::Subword => text
                .split_word_bound_indices()
                .filter(|(_, s)| !s.chars().all(char::is_whitespace))
                .collect(),
        }
    }

    /// Run one raw segment through the rest of the chain, appending terms.
    pub fn normalize_segment(&self, segment: &str, out: &mut Vec<String>) {
        let mut term = if self.record.lowercase {
            caseless::default_case_fold_str(segment)
        } else {
            segment.to_string()
        };
        if self.record.strip_punctuation {
            term.retain(|c| !is_punctuation(c));
        }
        if term.is_empty() || self.stopwords.contains(&term) {
            return;
        }
        match &self.vocab {
            Some(vocab) => vocab.split(&term, out),
            None => out.push(term),
        }
    }

    /// Analyzed terms in order.
    pub fn terms(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for (_, segment) in self.segments(text) {
            self.normalize_segment(segment, &mut out);
        }
        out
    }

    pub fn analyze(&self, text: &str) -> TokenStream {
        TokenStream {
            tokens: self
                .terms(text)
                .into_iter()
                .enumerate()
                .map(|(i, term)| Token {
                    term,
                    position: i as u32,
                })
                .collect(),
        }
    }
}

pub fn build_analyzer(config: &AnalyzerConfig) -> Result<Analyzer> {
    Analyzer::new(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn terms(config: &AnalyzerConfig, text: &str) -> Vec<String> {
        Analyzer::new(config).unwrap().terms(text)
    }

    #[test]
    fn unicode_word_with_normalization() {
        assert_eq!(
            terms(&AnalyzerConfig::default(), "The Quick-Brown fox!"),
            vec!["the", "quick", "brown", "fox"]
        );
    }

    #[test]
    fn whitespace_without_lowercase() {
        let config = AnalyzerConfig {
            mode: TokenizerMode::Whitespace,
            lowercase: false,
            strip_punctuation: false,
            ..AnalyzerConfig::default()
        };
        assert_eq!(terms(&config, "A  b"), vec!["A", "b"]);
    }

    #[test]
    fn stopwords_removed() {
        let config = AnalyzerConfig::default().with_stopwords("en");
        assert_eq!(terms(&config, "the fox"), vec!["fox"]);
        assert_eq!(terms(&config, "The Of"), Vec::<String>::new());
    }

    #[test]
    fn language_tag_selects_list() {
        let config = AnalyzerConfig {
            language_tag: Some("fr-FR".into()),
            ..AnalyzerConfig::default()
        };
        assert_eq!(terms(&config, "le chat et la souris"), vec!["chat", "souris"]);
        let unknown = AnalyzerConfig {
            language_tag: Some("xx".into()),
            ..AnalyzerConfig::default()
        };
        assert_eq!(terms(&unknown, "the fox"), vec!["the", "fox"]);
    }

    #[test]
    fn empty_and_unicode_case_folding() {
        let a = Analyzer::new(&AnalyzerConfig::default()).unwrap();
        assert!(a.analyze("").is_empty());
        assert_eq!(a.terms("naïve Café"), vec!["naïve", "café"]);
        assert_eq!(a.terms("STRASSE Straße"), vec!["strasse", "strasse"]);
    }

    #[test]
    fn punctuation_kept_when_not_stripping() {
        let config = AnalyzerConfig {
            strip_punctuation: false,
            ..AnalyzerConfig::default()
        };
        assert_eq!(terms(&config, "fox!"), vec!["fox", "!"]);
    }

    #[test]
    fn positions_are_consecutive() {
        let a = Analyzer::new(&AnalyzerConfig::default()).unwrap();
        let ts = a.analyze("one, two; three");
        let positions: Vec<u32> = ts.tokens.iter().map(|t| t.position).collect();
        assert_eq!(positions, vec![0, 1, 2]);
    }

    fn vocab_file(pieces: &[&str]) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), pieces.join("\n")).unwrap();
        f
    }

    #[test]
    fn subword_greedy_longest_match() {
        // Worked by hand: "hello" → "hel" (longest prefix in vocab, "hell"
        // absent), then "##lo" beats "##l"; "help" → "hel" + "##p";
        // "low" → "lo" + "##w"; "xyz" has no prefix piece → [UNK].
        let vocab = vocab_file(&["he", "hel", "lo", "##l", "##lo", "##p", "##w"]);
        let config = AnalyzerConfig {
            mode: TokenizerMode::Subword,
            subword_vocab: Some(vocab.path().to_path_buf()),
            ..AnalyzerConfig::default()
        };
        assert_eq!(terms(&config, "hello"), vec!["hel", "##lo"]);
        assert_eq!(terms(&config, "Help low"), vec!["hel", "##p", "lo", "##w"]);
        assert_eq!(terms(&config, "xyz"), vec![UNKNOWN_PIECE]);
        assert_eq!(terms(&config, "helx"), vec![UNKNOWN_PIECE]);
    }

    #[test]
    fn subword_requires_vocab() {
        let config = AnalyzerConfig {
            mode: TokenizerMode::Subword,
            ..AnalyzerConfig::default()
        };
        assert!(matches!(Analyzer::new(&config), Err(Error::Config(_))));
        let config = AnalyzerConfig {
            mode: TokenizerMode::Subword,
            subword_vocab: Some("/nonexistent/vocab.txt".into()),
            ..AnalyzerConfig::default()
        };
        assert!(matches!(Analyzer::new(&config), Err(Error::Config(_))));
    }

    #[test]
    fn fingerprint_tracks_behavior() {
        let a = Analyzer::new(&AnalyzerConfig::default()).unwrap();
        let b = Analyzer::new(&AnalyzerConfig::default()).unwrap();
        let c = Analyzer::new(&AnalyzerConfig::default().with_stopwords("en")).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
        let restored = Analyzer::from_record(c.record().clone()).unwrap();
        assert_eq!(restored.fingerprint(), c.fingerprint());
    }

    fn multiset(terms: Vec<String>) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for t in terms {
            *m.entry(t).or_default() += 1;
        }
        m
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(text in "[a-zA-Zàéïôç0-9 ,.;:!?'\"()-]{0,60}") {
            let a = Analyzer::new(&AnalyzerConfig::default()).unwrap();
            let once = a.terms(&text);
            let twice = a.terms(&once.join(" "));
            prop_assert_eq!(multiset(once), multiset(twice));
        }

        #[test]
        fn analysis_is_deterministic(text in "\\PC{0,40}") {
            let a = Analyzer::new(&AnalyzerConfig::default()).unwrap();
            let b = Analyzer::new(&AnalyzerConfig::default()).unwrap();
            let ts = a.analyze(&text);
            prop_assert_eq!(&ts, &b.analyze(&text));
            prop_assert!(ts.tokens.iter().all(|t| !t.term.is_empty()));
        }
    }
}
