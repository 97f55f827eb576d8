//! Loading documents from JSON-lines files, delimited tables and plain-text
//! directories, either fully materialized or as a single-pass stream.
//!
//! Every loader yields [`Document`]s in source order. Record-level failures
//! (malformed lines, ragged rows, missing fields, duplicate ids) either abort
//! the stream or are skipped and counted, depending on [`ErrorPolicy`].

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{Error, Result};

/// One searchable record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            metadata: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceFormat {
    Jsonl,
    Csv,
    TextDir,
}

impl std::str::FromStr for SourceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" | "json" | "ndjson" => Ok(SourceFormat::Jsonl),
            "csv" | "tsv" => Ok(SourceFormat::Csv),
            "text-dir" | "text" | "txt" => Ok(SourceFormat::TextDir),
            other => Err(Error::Config(format!("unknown source format {other:?}"))),
        }
    }
}

/// Where documents come from and which fields carry id and text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub format: SourceFormat,
    pub location: String,
    pub text_field: String,
    pub id_field: Option<String>,
}

impl SourceSpec {
    /// Guess the format from the location: directories are text dirs, `.csv`
    /// and `.tsv` are tables, everything else is JSON lines.
    pub fn infer(location: impl Into<String>, text_field: impl Into<String>) -> Self {
        let location = location.into();
        let format = if !is_remote(&location) && Path::new(&location).is_dir() {
            SourceFormat::TextDir
        } else if location.ends_with(".csv") || location.ends_with(".tsv") {
            SourceFormat::Csv
        } else {
            SourceFormat::Jsonl
        };
        SourceSpec {
            format,
            location,
            text_field: text_field.into(),
            id_field: None,
        }
    }

    pub fn with_id_field(mut self, id_field: impl Into<String>) -> Self {
        self.id_field = Some(id_field.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Materialized,
    Streaming,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorPolicy {
    /// The first bad record ends the stream with an error.
    #[default]
    Abort,
    /// Bad records are dropped and counted in [`LoadReport::rejected`].
    Skip,
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Reject invalid UTF-8 instead of replacing it with U+FFFD.
    pub strict_utf8: bool,
    pub on_error: ErrorPolicy,
    pub delimiter: u8,
    /// File extensions (without the dot) picked up by the text-directory loader.
    pub extensions: Vec<String>,
    pub recursive: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            strict_utf8: false,
            on_error: ErrorPolicy::Abort,
            delimiter: b',',
            extensions: vec!["txt".to_string()],
            recursive: true,
        }
    }
}

/// Counters accumulated while a stream is consumed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub yielded: u64,
    pub rejected: u64,
    pub utf8_replacements: u64,
}

#[derive(Debug, Default)]
struct Counters {
    yielded: AtomicU64,
    rejected: AtomicU64,
    utf8_replacements: AtomicU64,
}

type BoxedRecords = Box<dyn Iterator<Item = Result<Document>> + Send>;

/// A uniform sequence of documents over some source.
///
/// Streaming streams are single-pass; iterate again by re-opening the source.
pub struct DocumentStream {
    source: String,
    mode: Mode,
    count_hint: Option<u64>,
    inner: BoxedRecords,
    counters: Arc<Counters>,
    finished: bool,
}

impl DocumentStream {
    fn new(source: String, mode: Mode, records: BoxedRecords, counters: Arc<Counters>) -> Self {
        match mode {
            Mode::Streaming => DocumentStream {
                source,
                mode,
                count_hint: None,
                inner: records,
                counters,
                finished: false,
            },
            Mode::Materialized => {
                // Drain eagerly; an error is kept as the final item so both
                // modes yield the same sequence.
                let mut buffered = VecDeque::new();
                let mut ok = 0u64;
                for item in records {
                    let failed = item.is_err();
                    if !failed {
                        ok += 1;
                    }
                    buffered.push_back(item);
                    if failed {
                        break;
                    }
                }
                DocumentStream {
                    source,
                    mode,
                    count_hint: Some(ok),
                    inner: Box::new(buffered.into_iter()),
                    counters,
                    finished: false,
                }
            }
        }
    }

    /// Wrap an in-memory list of documents.
    pub fn from_documents(docs: Vec<Document>) -> Self {
        let counters = Arc::new(Counters::default());
        counters.yielded.store(docs.len() as u64, Ordering::Relaxed);
        DocumentStream {
            source: "<memory>".to_string(),
            mode: Mode::Materialized,
            count_hint: Some(docs.len() as u64),
            inner: Box::new(docs.into_iter().map(Ok)),
            counters,
            finished: false,
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn count_hint(&self) -> Option<u64> {
        self.count_hint
    }

    pub fn report(&self) -> LoadReport {
        LoadReport {
            yielded: self.counters.yielded.load(Ordering::Relaxed),
            rejected: self.counters.rejected.load(Ordering::Relaxed),
            utf8_replacements: self.counters.utf8_replacements.load(Ordering::Relaxed),
        }
    }

    /// Collect every document, stopping at the first error.
    pub fn collect_documents(self) -> Result<Vec<Document>> {
        self.collect()
    }
}

impl Iterator for DocumentStream {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        let item = self.inner.next();
        match &item {
            None | Some(Err(_)) => self.finished = true,
            Some(Ok(_)) => {}
        }
        item
    }
}

impl std::fmt::Debug for DocumentStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DocumentStream")
            .field("source", &self.source)
            .field("mode", &self.mode)
            .field("count_hint", &self.count_hint)
            .finish()
    }
}

/// Open any supported source.
pub fn load(spec: &SourceSpec, options: &LoadOptions, mode: Mode) -> Result<DocumentStream> {
    match spec.format {
        SourceFormat::Jsonl => load_jsonl(
            &spec.location,
            &spec.text_field,
            spec.id_field.as_deref(),
            mode,
            options,
        ),
        SourceFormat::Csv => load_csv(
            &spec.location,
            &spec.text_field,
            spec.id_field.as_deref(),
            mode,
            options,
        ),
        SourceFormat::TextDir => {
            if is_remote(&spec.location) {
                return Err(Error::Config(
                    "text directories must be local paths".to_string(),
                ));
            }
            load_text_dir(Path::new(&spec.location), mode, options)
        }
    }
}

pub(crate) fn is_remote(location: &str) -> bool {
    location.starts_with("http://") || location.starts_with("https://")
}

fn open_location(location: &str) -> Result<Box<dyn Read + Send>> {
    if is_remote(location) {
        let response = reqwest::blocking::get(location)
            .map_err(|e| Error::Transport(e.to_string()))?;
        let status = response.status();
        if status == reqwest::StatusCode::NOT_FOUND {
            return Err(Error::NotFound(location.to_string()));
        }
        if !status.is_success() {
            return Err(Error::Transport(format!("GET {location}: {status}")));
        }
        return Ok(Box::new(response));
    }
    let path = location.strip_prefix("file://").unwrap_or(location);
    let file = File::open(path).map_err(|e| Error::io_at(path, e))?;
    Ok(Box::new(file))
}

fn decode_utf8(bytes: Vec<u8>, strict: bool, line: u64, counters: &Counters) -> Result<String> {
    match String::from_utf8(bytes) {
        Ok(s) => Ok(s),
        Err(_) if strict => Err(Error::InvalidUtf8 { line }),
        Err(e) => {
            counters.utf8_replacements.fetch_add(1, Ordering::Relaxed);
            Ok(String::from_utf8_lossy(e.as_bytes()).into_owned())
        }
    }
}

/// Applies the policy-independent rules shared by record formats: id
/// assignment, duplicate detection and counting.
struct Assembler {
    seen: HashSet<String>,
    policy: ErrorPolicy,
    counters: Arc<Counters>,
    failed: bool,
}

impl Assembler {
    fn new(policy: ErrorPolicy, counters: Arc<Counters>) -> Self {
        Assembler {
            seen: HashSet::new(),
            policy,
            counters,
            failed: false,
        }
    }

    /// Returns `None` when the record was skipped.
    fn admit(&mut self, record: Result<Document>) -> Option<Result<Document>> {
        let record = record.and_then(|doc| {
            if doc.id.is_empty() {
                return Err(Error::Schema("document id is empty".to_string()));
            }
            if !self.seen.insert(doc.id.clone()) {
                return Err(Error::DuplicateId { id: doc.id });
            }
            Ok(doc)
        });
        match record {
            Ok(doc) => {
                self.counters.yielded.fetch_add(1, Ordering::Relaxed);
                Some(Ok(doc))
            }
            Err(e) => match self.policy {
                ErrorPolicy::Skip => {
                    tracing::warn!(error = %e, "skipping record");
                    self.counters.rejected.fetch_add(1, Ordering::Relaxed);
                    None
                }
                ErrorPolicy::Abort => {
                    self.failed = true;
                    Some(Err(e))
                }
            },
        }
    }
}

fn synthetic_id(position: u64) -> String {
    format!("doc-{position}")
}

fn raw_to_string(raw: &RawValue) -> String {
    let text = raw.get();
    if text.starts_with('"') {
        serde_json::from_str::<String>(text).unwrap_or_else(|_| text.to_string())
    } else {
        text.to_string()
    }
}

struct JsonlRecords {
    reader: Box<dyn BufRead + Send>,
    text_field: String,
    id_field: Option<String>,
    strict_utf8: bool,
    line_index: u64,
    assembler: Assembler,
}

impl JsonlRecords {
    fn parse_line(&self, line: &str, position: u64) -> Result<Document> {
        let lineno = position + 1;
        let fields: BTreeMap<String, &RawValue> =
            serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
                line: lineno,
                message: e.to_string(),
            })?;
        let text = match fields.get(&self.text_field) {
            Some(raw) if raw.get() != "null" => raw_to_string(raw),
            _ => {
                return Err(Error::FieldMissing {
                    field: self.text_field.clone(),
                    record: position,
                })
            }
        };
        let id = match &self.id_field {
            Some(name) => match fields.get(name) {
                Some(raw) if raw.get() != "null" => raw_to_string(raw),
                _ => {
                    return Err(Error::FieldMissing {
                        field: name.clone(),
                        record: position,
                    })
                }
            },
            None => synthetic_id(position),
        };
        let metadata = fields
            .iter()
            .filter(|(k, _)| **k != self.text_field && Some(*k) != self.id_field.as_ref())
            .map(|(k, v)| (k.clone(), raw_to_string(v)))
            .collect();
        Ok(Document { id, text, metadata })
    }
}

impl Iterator for JsonlRecords {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if self.assembler.failed {
                return None;
            }
            let mut buf = Vec::new();
            let position = self.line_index;
            match self.reader.read_until(b'\n', &mut buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    self.assembler.failed = true;
                    return Some(Err(Error::Io(e)));
                }
            }
            self.line_index += 1;
            if buf.last() == Some(&b'\n') {
                buf.pop();
            }
            if buf.last() == Some(&b'\r') {
                buf.pop();
            }
            if buf.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let record = decode_utf8(
                buf,
                self.strict_utf8,
                position + 1,
                &self.assembler.counters,
            )
            .and_then(|line| self.parse_line(&line, position));
            if let Some(item) = self.assembler.admit(record) {
                return Some(item);
            }
        }
    }
}

/// Load one document per line of a JSON-lines file or URL.
///
/// Without `id_field`, ids are `doc-{line}` with 0-based line positions.
pub fn load_jsonl(
    location: &str,
    text_field: &str,
    id_field: Option<&str>,
    mode: Mode,
    options: &LoadOptions,
) -> Result<DocumentStream> {
    let reader = BufReader::new(open_location(location)?);
    let counters = Arc::new(Counters::default());
    let records = JsonlRecords {
        reader: Box::new(reader),
        text_field: text_field.to_string(),
        id_field: id_field.map(str::to_string),
        strict_utf8: options.strict_utf8,
        line_index: 0,
        assembler: Assembler::new(options.on_error, counters.clone()),
    };
    Ok(DocumentStream::new(
        location.to_string(),
        mode,
        Box::new(records),
        counters,
    ))
}

struct CsvRecords {
    reader: csv::Reader<Box<dyn Read + Send>>,
    headers: Vec<String>,
    text_col: usize,
    id_col: Option<usize>,
    strict_utf8: bool,
    row_index: u64,
    assembler: Assembler,
}

impl CsvRecords {
    fn convert(&self, record: &csv::ByteRecord, position: u64) -> Result<Document> {
        let line = record.position().map_or(position + 2, |p| p.line());
        if record.len() != self.headers.len() {
            return Err(Error::RaggedRow {
                line,
                expected: self.headers.len(),
                found: record.len(),
            });
        }
        let mut cells = Vec::with_capacity(record.len());
        for cell in record.iter() {
            cells.push(decode_utf8(
                cell.to_vec(),
                self.strict_utf8,
                line,
                &self.assembler.counters,
            )?);
        }
        let id = match self.id_col {
            Some(col) => cells[col].clone(),
            None => synthetic_id(position),
        };
        let text = cells[self.text_col].clone();
        let metadata = self
            .headers
            .iter()
            .zip(cells)
            .enumerate()
            .filter(|(i, _)| *i != self.text_col && Some(*i) != self.id_col)
            .map(|(_, (k, v))| (k.clone(), v))
            .collect();
        Ok(Document { id, text, metadata })
    }
}

impl Iterator for CsvRecords {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if self.assembler.failed {
                return None;
            }
            let mut record = csv::ByteRecord::new();
            let position = self.row_index;
            let record = match self.reader.read_byte_record(&mut record) {
                Ok(false) => return None,
                Ok(true) => self.convert(&record, position),
                Err(e) => Err(Error::MalformedRecord {
                    line: e.position().map_or(0, |p| p.line()),
                    message: e.to_string(),
                }),
            };
            self.row_index += 1;
            if let Some(item) = self.assembler.admit(record) {
                return Some(item);
            }
        }
    }
}

/// Load one document per data row of a delimited file with a header row.
///
/// Columns other than the text and id columns become metadata.
pub fn load_csv(
    location: &str,
    text_field: &str,
    id_field: Option<&str>,
    mode: Mode,
    options: &LoadOptions,
) -> Result<DocumentStream> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(open_location(location)?);
    let headers: Vec<String> = reader
        .byte_headers()
        .map_err(|e| Error::Schema(e.to_string()))?
        .iter()
        .map(|h| String::from_utf8_lossy(h).into_owned())
        .collect();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let text_col = column(text_field)
        .ok_or_else(|| Error::Schema(format!("header has no column {text_field:?}")))?;
    let id_col = match id_field {
        Some(name) => Some(
            column(name).ok_or_else(|| Error::Schema(format!("header has no column {name:?}")))?,
        ),
        None => None,
    };
    let counters = Arc::new(Counters::default());
    let records = CsvRecords {
        reader,
        headers,
        text_col,
        id_col,
        strict_utf8: options.strict_utf8,
        row_index: 0,
        assembler: Assembler::new(options.on_error, counters.clone()),
    };
    Ok(DocumentStream::new(
        location.to_string(),
        mode,
        Box::new(records),
        counters,
    ))
}

struct TextDirRecords {
    files: std::vec::IntoIter<(String, PathBuf)>,
    strict_utf8: bool,
    assembler: Assembler,
}

impl Iterator for TextDirRecords {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if self.assembler.failed {
                return None;
            }
            let (id, path) = self.files.next()?;
            let record = std::fs::read(&path)
                .map_err(|e| Error::io_at(&path, e))
                .and_then(|bytes| decode_utf8(bytes, self.strict_utf8, 1, &self.assembler.counters))
                .map(|text| Document::new(id, text));
            if let Some(item) = self.assembler.admit(record) {
                return Some(item);
            }
        }
    }
}

/// Load one document per file whose extension is in the allow-list.
///
/// Ids are paths relative to `dir` with `/` separators, visited in
/// lexicographic order.
pub fn load_text_dir(dir: &Path, mode: Mode, options: &LoadOptions) -> Result<DocumentStream> {
    if !dir.is_dir() {
        return Err(Error::io_at(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        ));
    }
    let mut walker = walkdir::WalkDir::new(dir).min_depth(1);
    if !options.recursive {
        walker = walker.max_depth(1);
    }
    let mut files = Vec::new();
    for entry in walker {
        let entry = entry.map_err(|e| Error::Io(e.into()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let allowed = entry
            .path()
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|ext| options.extensions.iter().any(|a| a == ext));
        if !allowed {
            continue;
        }
        let relative = entry
            .path()
            .strip_prefix(dir)
            .expect("walkdir yields children of its root");
        let id = relative
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        files.push((id, entry.into_path()));
    }
    files.sort_by(|a, b| a.0.cmp(&b.0));
    let counters = Arc::new(Counters::default());
    let records = TextDirRecords {
        files: files.into_iter(),
        strict_utf8: options.strict_utf8,
        assembler: Assembler::new(options.on_error, counters.clone()),
    };
    Ok(DocumentStream::new(
        dir.display().to_string(),
        mode,
        Box::new(records),
        counters,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, content: &[u8]) -> PathBuf {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).unwrap();
        }
        let mut f = File::create(&path).unwrap();
        f.write_all(content).unwrap();
        path
    }

    fn jsonl(path: &Path, id_field: Option<&str>, mode: Mode) -> Vec<Result<Document>> {
        load_jsonl(
            path.to_str().unwrap(),
            "text",
            id_field,
            mode,
            &LoadOptions::default(),
        )
        .unwrap()
        .collect()
    }

    #[test]
    fn jsonl_maps_fields() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.jsonl", b"{\"id\":\"a1\",\"text\":\"hello\"}\n");
        let docs: Vec<_> = jsonl(&p, Some("id"), Mode::Materialized)
            .into_iter()
            .map(Result::unwrap)
            .collect();
        assert_eq!(docs, vec![Document::new("a1", "hello")]);
    }

    #[test]
    fn jsonl_synthetic_ids_and_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "a.jsonl",
            b"{\"text\":\"x\",\"n\":3,\"tags\":[1, 2]}\r\n{\"text\":\"y\",\"lang\":\"en\"}\n",
        );
        let docs: Vec<_> = jsonl(&p, None, Mode::Streaming)
            .into_iter()
            .map(Result::unwrap)
            .collect();
        assert_eq!(docs[0].id, "doc-0");
        assert_eq!(docs[1].id, "doc-1");
        assert_eq!(docs[0].metadata["n"], "3");
        assert_eq!(docs[0].metadata["tags"], "[1, 2]");
        assert_eq!(docs[1].metadata["lang"], "en");
    }

    #[test]
    fn jsonl_malformed_line_stops_stream() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "a.jsonl",
            b"{\"text\":\"one\"}\nnot json\n{\"text\":\"three\"}\n",
        );
        for mode in [Mode::Materialized, Mode::Streaming] {
            let items = jsonl(&p, None, mode);
            assert_eq!(items.len(), 2);
            assert!(items[0].is_ok());
            assert!(matches!(items[1], Err(Error::MalformedRecord { line: 2, .. })));
        }
    }

    #[test]
    fn jsonl_duplicate_and_missing_field() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "dup.jsonl",
            b"{\"id\":\"x\",\"text\":\"a\"}\n{\"id\":\"x\",\"text\":\"b\"}\n",
        );
        let items = jsonl(&p, Some("id"), Mode::Materialized);
        assert!(matches!(&items[1], Err(Error::DuplicateId { id }) if id == "x"));

        let p = write(dir.path(), "miss.jsonl", b"{\"text\":\"a\"}\n{\"body\":\"b\"}\n");
        let items = jsonl(&p, None, Mode::Materialized);
        assert!(matches!(&items[1], Err(Error::FieldMissing { record: 1, .. })));
    }

    #[test]
    fn skip_policy_counts_rejections() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "a.jsonl",
            b"{\"text\":\"one\"}\nnot json\n{\"text\":\"three\"}\n",
        );
        let options = LoadOptions {
            on_error: ErrorPolicy::Skip,
            ..LoadOptions::default()
        };
        let mut stream =
            load_jsonl(p.to_str().unwrap(), "text", None, Mode::Streaming, &options).unwrap();
        let ids: Vec<_> = stream.by_ref().map(|d| d.unwrap().id).collect();
        assert_eq!(ids, vec!["doc-0", "doc-2"]);
        assert_eq!(stream.report().rejected, 1);
        assert_eq!(stream.report().yielded, 2);
    }

    #[test]
    fn invalid_utf8_replaced_or_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.jsonl", b"{\"text\":\"caf\xe9\"}\n");
        let mut stream = load_jsonl(
            p.to_str().unwrap(),
            "text",
            None,
            Mode::Materialized,
            &LoadOptions::default(),
        )
        .unwrap();
        let doc = stream.next().unwrap().unwrap();
        assert_eq!(doc.text, "caf\u{FFFD}");
        assert_eq!(stream.report().utf8_replacements, 1);

        let strict = LoadOptions {
            strict_utf8: true,
            ..LoadOptions::default()
        };
        let mut stream =
            load_jsonl(p.to_str().unwrap(), "text", None, Mode::Materialized, &strict).unwrap();
        assert!(matches!(stream.next(), Some(Err(Error::InvalidUtf8 { line: 1 }))));
    }

    #[test]
    fn csv_rows_become_documents() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", b"id,text,lang\nd1,bonjour,fr\n");
        let docs = load_csv(
            p.to_str().unwrap(),
            "text",
            Some("id"),
            Mode::Materialized,
            &LoadOptions::default(),
        )
        .unwrap()
        .collect_documents()
        .unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].id, "d1");
        assert_eq!(docs[0].text, "bonjour");
        assert_eq!(docs[0].metadata, BTreeMap::from([("lang".into(), "fr".into())]));

        let p = write(dir.path(), "b.csv", b"text,lang\nx,en\ny,fr\n");
        let ids: Vec<_> = load_csv(
            p.to_str().unwrap(),
            "text",
            None,
            Mode::Streaming,
            &LoadOptions::default(),
        )
        .unwrap()
        .map(|d| d.unwrap().id)
        .collect();
        assert_eq!(ids, vec!["doc-0", "doc-1"]);
    }

    #[test]
    fn csv_schema_and_ragged_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", b"id,body\n1,x\n");
        let err = load_csv(
            p.to_str().unwrap(),
            "text",
            None,
            Mode::Materialized,
            &LoadOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));

        let p = write(dir.path(), "b.csv", b"id,text,lang\nd1,ok,fr\nd2,short\n");
        let items: Vec<_> = load_csv(
            p.to_str().unwrap(),
            "text",
            Some("id"),
            Mode::Materialized,
            &LoadOptions::default(),
        )
        .unwrap()
        .collect();
        assert!(items[0].is_ok());
        assert!(matches!(
            items[1],
            Err(Error::RaggedRow {
                line: 3,
                expected: 3,
                found: 2
            })
        ));
    }

    #[test]
    fn text_dir_ordering_and_nesting() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "b.txt", b"y");
        write(dir.path(), "a.txt", b"x");
        write(dir.path(), "sub/c.txt", b"z");
        write(dir.path(), "skip.md", b"ignored");
        let docs = load_text_dir(dir.path(), Mode::Materialized, &LoadOptions::default())
            .unwrap()
            .collect_documents()
            .unwrap();
        let ids: Vec<_> = docs.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, vec!["a.txt", "b.txt", "sub/c.txt"]);
        assert_eq!(docs[0].text, "x");

        let flat = LoadOptions {
            recursive: false,
            ..LoadOptions::default()
        };
        let n = load_text_dir(dir.path(), Mode::Streaming, &flat).unwrap().count();
        assert_eq!(n, 2);
    }

    #[test]
    fn empty_text_dir_is_empty_stream() {
        let dir = tempfile::tempdir().unwrap();
        let stream = load_text_dir(dir.path(), Mode::Materialized, &LoadOptions::default()).unwrap();
        assert_eq!(stream.count_hint(), Some(0));
        assert_eq!(stream.count(), 0);
    }

    #[test]
    fn modes_agree_and_reload_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = Vec::new();
        for i in 0..50 {
            writeln!(body, "{{\"id\":\"k{i}\",\"text\":\"t {i}\",\"m\":{i}}}").unwrap();
        }
        let p = write(dir.path(), "a.jsonl", &body);
        let a: Vec<_> = jsonl(&p, Some("id"), Mode::Materialized)
            .into_iter()
            .map(Result::unwrap)
            .collect();
        let b: Vec<_> = jsonl(&p, Some("id"), Mode::Materialized)
            .into_iter()
            .map(Result::unwrap)
            .collect();
        let c: Vec<_> = jsonl(&p, Some("id"), Mode::Streaming)
            .into_iter()
            .map(Result::unwrap)
            .collect();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a.len(), 50);
    }
}
