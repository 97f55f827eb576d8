use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use plugsearch_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn path_c(p: &Path) -> CString {
    c(p.to_str().unwrap())
}

fn last_error() -> String {
    let p = ps_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn corpus(dir: &Path) -> (PathBuf, PathBuf) {
    let source = dir.join("corpus.jsonl");
    std::fs::write(
        &source,
        "{\"id\":\"D1\",\"text\":\"a b c a\"}\n{\"id\":\"D2\",\"text\":\"a a a d\"}\n{\"id\":\"D3\",\"text\":\"b c d e\"}\n",
    )
    .unwrap();
    let shards = dir.join("shards");
    let index = dir.join("index");
    unsafe {
        assert_eq!(
            ps_shard_jsonl(
                path_c(&source).as_ptr(),
                c("text").as_ptr(),
                c("id").as_ptr(),
                c("300B").as_ptr(),
                path_c(&shards).as_ptr()
            ),
            PsStatus::Ok
        );
        assert_eq!(
            ps_build_index(path_c(&shards).as_ptr(), path_c(&index).as_ptr(), 2),
            PsStatus::Ok
        );
    }
    (shards, index)
}

#[test]
fn search_through_the_abi() {
    let dir = tempfile::tempdir().unwrap();
    let (_, index_dir) = corpus(dir.path());
    unsafe {
        let mut index: *mut PsIndex = ptr::null_mut();
        assert_eq!(ps_index_open(path_c(&index_dir).as_ptr(), &mut index), PsStatus::Ok);
        assert_eq!(ps_index_num_docs(index), 3);

        let mut results: *mut PsResults = ptr::null_mut();
        assert_eq!(ps_search(index, c("zzz").as_ptr(), 10, &mut results), PsStatus::Ok);
        assert_eq!(ps_results_len(results), 0);
        ps_results_free(results);
        assert_eq!(ps_search(index, c("").as_ptr(), 10, &mut results), PsStatus::EmptyQuery);
        assert!(results.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(ps_search(index, c("a").as_ptr(), 10, &mut results), PsStatus::Ok);
        assert!(ps_last_error().is_null());
        assert_eq!(ps_results_len(results), 2);
        let mut ids = Vec::new();
        for rank in 0..2 {
            let mut id: *const c_char = ptr::null();
            let mut score = 0.0;
            assert_eq!(ps_results_get(results, rank, &mut id, &mut score), PsStatus::Ok);
            ids.push(CStr::from_ptr(id).to_str().unwrap().to_string());
            assert!(score > 0.0);
        }
        assert_eq!(ids, ["D2", "D1"]);

        let mut json: *mut c_char = ptr::null_mut();
        assert_eq!(ps_result_page_json(index, results, -1, 1, &mut json), PsStatus::Ok);
        let page: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        assert_eq!(page["page_number"], 1);
        assert_eq!(page["rows"][0]["id"], "D1");
        ps_string_free(json);

        assert_eq!(
            ps_result_page_json(index, results, 5, 1, &mut json),
            PsStatus::PageOutOfRange
        );
        assert!(json.is_null());
        assert!(last_error().contains("out of range"));

        ps_results_free(results);
        ps_index_free(index);
    }
}

#[test]
fn errors_map_to_codes() {
    unsafe {
        let mut index: *mut PsIndex = ptr::null_mut();
        assert_eq!(ps_index_open(ptr::null(), &mut index), PsStatus::NullArgument);
        assert_eq!(ps_index_open(c("/nonexistent/index").as_ptr(), ptr::null_mut()), PsStatus::NullArgument);
        let status = ps_index_open(c("/nonexistent/index").as_ptr(), &mut index);
        assert!(matches!(status, PsStatus::Integrity | PsStatus::Io), "{status:?}");
        assert!(index.is_null());
        assert!(!last_error().is_empty());

        let bad = [0xffu8, 0];
        assert_eq!(ps_index_open(bad.as_ptr().cast(), &mut index), PsStatus::InvalidUtf8);

        assert_eq!(ps_index_num_docs(ptr::null()), 0);
        assert_eq!(ps_results_len(ptr::null()), 0);
        ps_index_free(ptr::null_mut());
        ps_results_free(ptr::null_mut());
        ps_string_free(ptr::null_mut());
    }
    let version = unsafe { CStr::from_ptr(ps_version()) };
    assert_eq!(version.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn pack_reports_quota() {
    let dir = tempfile::tempdir().unwrap();
    let (_, index_dir) = corpus(dir.path());
    let archive = dir.path().join("index.tar.gz");
    unsafe {
        let mut over = false;
        assert_eq!(
            ps_pack_index(
                path_c(&index_dir).as_ptr(),
                path_c(&archive).as_ptr(),
                c("demo").as_ptr(),
                1000,
                &mut over
            ),
            PsStatus::Ok
        );
        assert!(archive.is_file());
        // The 3-document index is a few hundred bytes.
        assert!(!over);
        assert_eq!(
            ps_pack_index(
                path_c(&index_dir).as_ptr(),
                path_c(&archive).as_ptr(),
                c("demo").as_ptr(),
                10,
                &mut over
            ),
            PsStatus::Ok
        );
        assert!(over);
        assert_eq!(
            ps_pack_index(
                path_c(&index_dir).as_ptr(),
                path_c(&archive).as_ptr(),
                c("Bad Slug").as_ptr(),
                10,
                &mut over
            ),
            PsStatus::InvalidInput
        );
    }
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("plugsearch.h")
}

#[test]
fn header_declares_every_export() {
    let text = std::fs::read_to_string(header()).unwrap();
    for symbol in [
        "ps_last_error",
        "ps_version",
        "ps_string_free",
        "ps_shard_jsonl",
        "ps_build_index",
        "ps_index_open",
        "ps_index_free",
        "ps_index_num_docs",
        "ps_search",
        "ps_results_free",
        "ps_results_len",
        "ps_results_get",
        "ps_result_page_json",
        "ps_pack_index",
        "typedef struct PsIndex PsIndex;",
        "PS_STATUS_OK = 0",
    ] {
        assert!(text.contains(symbol), "header lacks {symbol}");
    }
}

#[test]
fn c_program_links_and_runs() {
    let include = header().parent().unwrap().to_path_buf();
    let exe = std::env::current_exe().unwrap();
    let target_dir = exe.parent().unwrap().parent().unwrap();
    let staticlib = target_dir.join("libplugsearch_ffi.a");
    assert!(staticlib.is_file(), "{} not built", staticlib.display());
    let work = tempfile::tempdir().unwrap();
    let program = work.path().join("smoke");
    let source = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/c/smoke.c");

    let compile = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(&include)
        .arg(&source)
        .arg(&staticlib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&program)
        .output()
        .expect("cc runs");
    assert!(
        compile.status.success(),
        "cc failed:\n{}",
        String::from_utf8_lossy(&compile.stderr)
    );
    let run = Command::new(&program).arg(work.path()).output().unwrap();
    assert!(
        run.status.success(),
        "smoke failed:\n{}{}",
        String::from_utf8_lossy(&run.stdout),
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));

    let cxx = Command::new("c++")
        .args(["-fsyntax-only", "-x", "c++", "-I"])
        .arg(&include)
        .arg(header())
        .output();
    if let Ok(out) = cxx {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
