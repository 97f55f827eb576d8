//! C ABI over the plugsearch toolkit.
//!
//! Fallible functions return a [`PsStatus`]; on failure a message for the
//! calling thread is available from [`ps_last_error`]. Handles are opaque and
//! must be released with their `_free` function. Strings returned as
//! `char *` are owned by the caller and released with [`ps_string_free`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::{Arc, Mutex};

use plugsearch::analysis::AnalyzerConfig;
use plugsearch::index::{build_index, Index};
use plugsearch::ingest::{load, LoadOptions, Mode, SourceSpec};
use plugsearch::preprocess::shard_dataset;
use plugsearch::registry::{pack_index, PackOptions};
use plugsearch::search::{result_page, Docstore, RankedIds, SearchOptions};
use plugsearch::Error;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    InvalidInput = 4,
    Integrity = 5,
    EmptyQuery = 6,
    PageOutOfRange = 7,
    NotFound = 8,
    Corruption = 9,
    Registry = 10,
    OutOfBounds = 11,
    Panic = 99,
}

/// An open index plus its lazily opened document store.
pub struct PsIndex {
    index: Arc<Index>,
    docstore: Mutex<Option<Arc<Docstore>>>,
}

/// Ranked hits of one query.
pub struct PsResults {
    ranked: RankedIds,
    ids: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let message = CString::new(message.replace('\0', "\\0")).expect("nul bytes replaced");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn status_of(error: &Error) -> PsStatus {
    match error {
        Error::Io(_) | Error::IoAt { .. } => PsStatus::Io,
        Error::Integrity(_) | Error::AnalyzerMismatch { .. } => PsStatus::Integrity,
        Error::EmptyQuery => PsStatus::EmptyQuery,
        Error::PageOutOfRange { .. } => PsStatus::PageOutOfRange,
        Error::UnknownDocument(_) | Error::NotFound(_) | Error::TemplateNotFound(_) => PsStatus::NotFound,
        Error::Corruption(_) => PsStatus::Corruption,
        Error::Auth(_) | Error::PublishRejected(_) | Error::Transport(_) | Error::Location(_) => {
            PsStatus::Registry
        }
        _ => PsStatus::InvalidInput,
    }
}

struct Failure(PsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Run `body`, translating errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> PsStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => PsStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_last_error(format!("internal panic: {message}"));
            PsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(Failure(PsStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Failure(PsStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn opt_str_arg<'a>(ptr: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if ptr.is_null() {
        Ok(None)
    } else {
        str_arg(ptr, name).map(Some)
    }
}

fn out_arg<T>(ptr: *mut T, name: &str) -> Result<(), Failure> {
    if ptr.is_null() {
        Err(Failure(PsStatus::NullArgument, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn handle<'a, T>(ptr: *const T, name: &str) -> Result<&'a T, Failure> {
    ptr.as_ref()
        .ok_or_else(|| Failure(PsStatus::NullArgument, format!("{name} is null")))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', "\\u0000"))
        .expect("nul bytes replaced")
        .into_raw()
}

/// Message for the last failed call on this thread, or NULL. Every function
/// returning a status clears it first; the pointer is valid until then.
#[no_mangle]
pub extern "C" fn ps_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ps_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Release a string returned by this library. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn ps_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Load a JSON-lines file and split it into shards under `out_dir`.
/// `id_field` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn ps_shard_jsonl(
    source: *const c_char,
    text_field: *const c_char,
    id_field: *const c_char,
    shard_size: *const c_char,
    out_dir: *const c_char,
) -> PsStatus {
    guard(|| {
        let source = str_arg(source, "source")?;
        let text_field = str_arg(text_field, "text_field")?;
        let id_field = opt_str_arg(id_field, "id_field")?;
        let shard_size = str_arg(shard_size, "shard_size")?;
        let out_dir = PathBuf::from(str_arg(out_dir, "out_dir")?);
        let mut spec = SourceSpec::infer(source, text_field);
        spec.format = plugsearch::ingest::SourceFormat::Jsonl;
        spec.id_field = id_field.map(str::to_string);
        let stream = load(&spec, &LoadOptions::default(), Mode::Streaming)?;
        shard_dataset(stream, shard_size, text_field, &out_dir)?;
        Ok(())
    })
}

/// Build an index with the default analyzer. `threads` must be positive.
#[no_mangle]
pub unsafe extern "C" fn ps_build_index(
    shards_dir: *const c_char,
    index_dir: *const c_char,
    threads: usize,
) -> PsStatus {
    guard(|| {
        let shards = PathBuf::from(str_arg(shards_dir, "shards_dir")?);
        let index = PathBuf::from(str_arg(index_dir, "index_dir")?);
        build_index(&shards, &index, &AnalyzerConfig::default(), threads)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ps_index_open(index_dir: *const c_char, out: *mut *mut PsIndex) -> PsStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = PathBuf::from(str_arg(index_dir, "index_dir")?);
        let index = Arc::new(Index::open(&path)?);
        *out = Box::into_raw(Box::new(PsIndex {
            index,
            docstore: Mutex::new(None),
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ps_index_free(index: *mut PsIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Number of documents, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn ps_index_num_docs(index: *const PsIndex) -> u64 {
    index.as_ref().map_or(0, |i| i.index.num_docs() as u64)
}

/// Rank the top `k` documents for `query` with default BM25 parameters.
#[no_mangle]
pub unsafe extern "C" fn ps_search(
    index: *const PsIndex,
    query: *const c_char,
    k: usize,
    out: *mut *mut PsResults,
) -> PsStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = ptr::null_mut();
        let index = handle(index, "index")?;
        let query = str_arg(query, "query")?;
        let ranked = index.index.search(query, k, &SearchOptions::default())?;
        let ids = ranked
            .hits
            .iter()
            .map(|hit| {
                let id = &index.index.doc(hit.docid).expect("hit refers to a document").external_id;
                CString::new(id.as_str()).map_err(|_| Failure(PsStatus::InvalidInput, format!("id {id:?} has a NUL byte")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        *out = Box::into_raw(Box::new(PsResults { ranked, ids }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ps_results_free(results: *mut PsResults) {
    if !results.is_null() {
        drop(Box::from_raw(results));
    }
}

/// Number of hits, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn ps_results_len(results: *const PsResults) -> usize {
    results.as_ref().map_or(0, |r| r.ranked.hits.len())
}

/// External id and score of hit `rank` (0-based). The id pointer stays valid
/// until the results are freed.
#[no_mangle]
pub unsafe extern "C" fn ps_results_get(
    results: *const PsResults,
    rank: usize,
    id: *mut *const c_char,
    score: *mut f64,
) -> PsStatus {
    guard(|| {
        let results = handle(results, "results")?;
        out_arg(id, "id")?;
        out_arg(score, "score")?;
        let hit = results.ranked.hits.get(rank).ok_or_else(|| {
            Failure(
                PsStatus::OutOfBounds,
                format!("rank {rank} beyond {} hits", results.ranked.hits.len()),
            )
        })?;
        *id = results.ids[rank].as_ptr();
        *score = hit.score;
        Ok(())
    })
}

/// One page of `results` as JSON (negative pages count from the end). The
/// document store is located from the index's recorded shard directory.
#[no_mangle]
pub unsafe extern "C" fn ps_result_page_json(
    index: *const PsIndex,
    results: *const PsResults,
    page: i64,
    per_page: usize,
    out: *mut *mut c_char,
) -> PsStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = ptr::null_mut();
        let index = handle(index, "index")?;
        let results = handle(results, "results")?;
        let docstore = {
            let mut slot = index.docstore.lock().unwrap_or_else(|p| p.into_inner());
            match slot.as_ref() {
                Some(store) => store.clone(),
                None => {
                    let store = Arc::new(Docstore::open_for(index.index.clone())?);
                    *slot = Some(store.clone());
                    store
                }
            }
        };
        let page = result_page(&docstore, &results.ranked, page, per_page)?;
        *out = into_c_string(serde_json::to_string(&page).expect("page serializes"));
        Ok(())
    })
}

/// Write a reproducible archive of `index_dir` to `out_path`. When the index
/// exceeds `quota_bytes` the call still succeeds and `*over_quota` is set.
#[no_mangle]
pub unsafe extern "C" fn ps_pack_index(
    index_dir: *const c_char,
    out_path: *const c_char,
    slug: *const c_char,
    quota_bytes: u64,
    over_quota: *mut bool,
) -> PsStatus {
    guard(|| {
        let index = PathBuf::from(str_arg(index_dir, "index_dir")?);
        let out_path = PathBuf::from(str_arg(out_path, "out_path")?);
        let slug = str_arg(slug, "slug")?;
        let outcome = pack_index(
            &index,
            &out_path,
            &PackOptions {
                slug: slug.to_string(),
                quota_bytes,
                ..PackOptions::default()
            },
        )?;
        if let Some(flag) = over_quota.as_mut() {
            *flag = !outcome.warnings.is_empty();
        }
        Ok(())
    })
}
