mod common;

use std::sync::Arc;

use plugsearch::index::Index;
use plugsearch::ingest::Document;
use plugsearch::search::{result_page, Docstore, SearchOptions};
use plugsearch::service::{serve, ServiceConfig};
use serde_json::Value;

fn start(index: &std::path::Path, cors: &[&str]) -> plugsearch::http::ServerHandle {
    let config = ServiceConfig {
        bind: "127.0.0.1:0".into(),
        cors_origins: cors.iter().map(|s| s.to_string()).collect(),
        worker_threads: 2,
        ..ServiceConfig::new(index)
    };
    serve(&config).unwrap()
}

fn get(url: &str) -> (u16, Value) {
    let response = reqwest::blocking::get(url).unwrap();
    let status = response.status().as_u16();
    (status, serde_json::from_slice(&response.bytes().unwrap()).unwrap())
}

#[test]
fn three_doc_search_and_errors() {
    let work = tempfile::tempdir().unwrap();
    let (_, index) = common::build(work.path(), &common::three_docs(), "1KB", 1);
    let server = start(&index, &[]);
    let base = server.url();

    let (status, body) = get(&format!("{base}/search?q=a&page=0&per_page=20"));
    assert_eq!(status, 200);
    let ids: Vec<&str> = body["rows"].as_array().unwrap().iter().map(|r| r["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["D2", "D1"]);
    assert_eq!(body["total_results"], 2);
    assert_eq!(body["page"], 0);
    assert_eq!(body["per_page"], 20);

    for (query, error) in [
        ("q=", "empty_query"),
        ("q=%20", "empty_query"),
        ("q=a&page=-1", "invalid_parameter"),
        ("q=a&per_page=101", "invalid_parameter"),
        ("q=a&per_page=0", "invalid_parameter"),
        ("q=a&k=1001", "invalid_parameter"),
        ("q=a&k=x", "invalid_parameter"),
        ("q=a&page=1", "page_out_of_range"),
    ] {
        let (status, body) = get(&format!("{base}/search?{query}"));
        assert_eq!(status, 400, "{query}");
        assert_eq!(body["error"], error, "{query}");
        assert!(body["detail"].as_str().is_some_and(|d| !d.is_empty()));
    }

    let (status, body) = get(&format!("{base}/healthz"));
    assert_eq!((status, body), (200, serde_json::json!({"status": "ok", "num_docs": 3})));

    let (status, body) = get(&format!("{base}/document/D3"));
    assert_eq!(status, 200);
    assert_eq!(body["text"], "b c d e");
    let (status, body) = get(&format!("{base}/document/nope"));
    assert_eq!((status, body["error"].as_str()), (404, Some("not_found")));
    let (status, _) = get(&format!("{base}/elsewhere"));
    assert_eq!(status, 404);

    let (_, stats) = get(&format!("{base}/stats"));
    assert_eq!(stats["num_docs"], 3);
    assert_eq!(stats["avgdl"], 4.0);
    assert_eq!(stats["hits"], 9);
    assert!(stats["uptime_secs"].as_f64().unwrap() >= 0.0);
}

#[test]
fn rows_match_library_pages() {
    let work = tempfile::tempdir().unwrap();
    let docs = common::synthetic(300, 40, 3, 15, 7);
    let (_, index_path) = common::build(work.path(), &docs, "4KB", 2);
    let server = start(&index_path, &[]);
    let index = Arc::new(Index::open(&index_path).unwrap());
    let docstore = Docstore::open_for(index.clone()).unwrap();

    let queries = common::queries(30, 40, 11);
    for (i, query) in queries.iter().enumerate() {
        let k = [1, 7, 50, 100, 1000][i % 5];
        let per_page = [1, 5, 20, 100][i % 4];
        let ranked = index.search(query, k, &SearchOptions::default()).unwrap();
        let pages = ranked.len().div_ceil(per_page).max(1);
        let page = i % pages;
        let expected = result_page(&docstore, &ranked, page as i64, per_page).unwrap();
        let url = format!(
            "{}/search?q={}&k={k}&page={page}&per_page={per_page}",
            server.url(),
            query.replace(' ', "+")
        );
        let (status, body) = get(&url);
        assert_eq!(status, 200, "{url}");
        assert_eq!(body["rows"], serde_json::to_value(&expected.rows).unwrap(), "{url}");
        assert_eq!(body["total_results"], expected.total_results);
    }
}

#[test]
fn slash_ids_and_cors() {
    let work = tempfile::tempdir().unwrap();
    let docs = vec![Document::new("dir/a.txt", "hello world"), Document::new("b", "other")];
    let (_, index) = common::build(work.path(), &docs, "1KB", 1);
    let server = start(&index, &["https://ui.example"]);

    let (status, body) = get(&format!("{}/document/dir/a.txt", server.url()));
    assert_eq!((status, body["id"].as_str()), (200, Some("dir/a.txt")));

    let http = reqwest::blocking::Client::new();
    let allowed = http
        .get(format!("{}/search?q=hello", server.url()))
        .header("origin", "https://ui.example")
        .send()
        .unwrap();
    assert_eq!(
        allowed.headers().get("access-control-allow-origin").unwrap(),
        "https://ui.example"
    );
    let denied = http
        .get(format!("{}/search?q=hello", server.url()))
        .header("origin", "https://evil.example")
        .send()
        .unwrap();
    assert!(denied.headers().get("access-control-allow-origin").is_none());
}

#[test]
fn startup_failures_are_reported() {
    let work = tempfile::tempdir().unwrap();
    assert!(serve(&ServiceConfig {
        bind: "127.0.0.1:0".into(),
        ..ServiceConfig::new(work.path().join("missing"))
    })
    .is_err());

    let (_, index) = common::build(work.path(), &common::three_docs(), "1KB", 1);
    let first = start(&index, &[]);
    let clash = ServiceConfig {
        bind: first.addr().to_string(),
        ..ServiceConfig::new(&index)
    };
    assert!(matches!(serve(&clash), Err(plugsearch::Error::Startup(_))));
    let zero_cap = ServiceConfig {
        bind: "127.0.0.1:0".into(),
        page_size_cap: 0,
        ..ServiceConfig::new(&index)
    };
    assert!(matches!(serve(&zero_cap), Err(plugsearch::Error::Config(_))));
}
