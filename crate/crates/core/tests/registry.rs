mod common;

use std::fs;
use std::path::Path;

use plugsearch::index::{Index, INDEX_FILES};
use plugsearch::registry::archive::{read_archive, sha256_hex, write_archive};
use plugsearch::registry::{
    load_index_from_hub, push_index_to_hub, serve_registry, PackOptions, RegistryClient, RegistryLocation, Token,
    DIGEST_HEADER,
};
use plugsearch::search::SearchOptions;
use plugsearch::Error;

fn file_location(root: &Path, org: &str) -> RegistryLocation {
    RegistryLocation::new(format!("file://{}", root.display()), org)
        .unwrap()
        .with_token(None)
}

fn same_files(a: &Path, b: &Path) {
    for name in INDEX_FILES {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn file_registry_round_trip() {
    let work = tempfile::tempdir().unwrap();
    let (_, index) = common::build(work.path(), &common::three_docs(), "1KB", 1);
    let registry = work.path().join("registry");
    let location = file_location(&registry, "spacerini");

    let url = push_index_to_hub("demo", &index, &location).unwrap();
    assert!(url.ends_with("/indexes/spacerini/demo/0"), "{url}");
    let url = push_index_to_hub("demo", &index, &location).unwrap();
    assert!(url.ends_with("/indexes/spacerini/demo/1"), "{url}");

    let cache = work.path().join("cache");
    let loaded = load_index_from_hub("demo", &location, &cache, None).unwrap();
    assert_eq!(loaded, cache.join("spacerini/demo/1"));
    same_files(&index, &loaded);
    let ranked = Index::open(&loaded).unwrap().search("a", 10, &SearchOptions::default()).unwrap();
    let original = Index::open(&index).unwrap().search("a", 10, &SearchOptions::default()).unwrap();
    assert_eq!(ranked.hits, original.hits);
}

#[test]
fn pinned_cache_hit_makes_no_requests() {
    let work = tempfile::tempdir().unwrap();
    let (_, index) = common::build(work.path(), &common::three_docs(), "1KB", 1);
    let location = file_location(&work.path().join("registry"), "org");
    RegistryClient::new(location.clone())
        .unwrap()
        .push_index("demo", &index, &PackOptions::default())
        .unwrap();

    let cache = work.path().join("cache");
    let client = RegistryClient::new(location).unwrap();
    client.load_index("demo", &cache, Some(0)).unwrap();
    let after_first = client.requests();
    assert!(after_first > 0);
    client.load_index("demo", &cache, Some(0)).unwrap();
    assert_eq!(client.requests(), after_first);
}

#[test]
fn unknown_slug_and_version_are_not_found() {
    let work = tempfile::tempdir().unwrap();
    let location = file_location(&work.path().join("registry"), "org");
    let cache = work.path().join("cache");
    assert!(matches!(load_index_from_hub("nope", &location, &cache, None), Err(Error::NotFound(_))));
    assert!(matches!(load_index_from_hub("nope", &location, &cache, Some(3)), Err(Error::NotFound(_))));
    assert!(matches!(load_index_from_hub("Bad", &location, &cache, None), Err(Error::Naming(_))));
}

#[test]
fn stored_byte_flip_is_corruption_and_purges_cache() {
    let work = tempfile::tempdir().unwrap();
    let (_, index) = common::build(work.path(), &common::three_docs(), "1KB", 1);
    let registry = work.path().join("registry");
    let location = file_location(&registry, "org");
    push_index_to_hub("demo", &index, &location).unwrap();
    let stored = registry.join("indexes/org/demo/0/index.tar.gz");
    let mut bytes = fs::read(&stored).unwrap();
    let middle = bytes.len() / 2;
    bytes[middle] ^= 0x01;
    fs::write(&stored, &bytes).unwrap();

    let cache = work.path().join("cache");
    let err = load_index_from_hub("demo", &location, &cache, Some(0)).unwrap_err();
    assert!(matches!(err, Error::Corruption(_)), "{err:?}");
    assert!(!cache.join("org/demo/0").exists());
}

#[test]
fn tampered_member_with_recomputed_sidecar_is_corruption() {
    let work = tempfile::tempdir().unwrap();
    let (_, index) = common::build(work.path(), &common::three_docs(), "1KB", 1);
    let registry = work.path().join("registry");
    let location = file_location(&registry, "org");
    push_index_to_hub("demo", &index, &location).unwrap();
    let dir = registry.join("indexes/org/demo/0");
    let mut files = read_archive(&fs::read(dir.join("index.tar.gz")).unwrap()).unwrap();
    files.get_mut("postings.bin").unwrap()[9] ^= 0x40;
    let forged = write_archive(&files).unwrap();
    fs::write(dir.join("index.tar.gz"), &forged).unwrap();
    fs::write(dir.join("index.tar.gz.sha256"), sha256_hex(&forged)).unwrap();

    let err = load_index_from_hub("demo", &location, &work.path().join("cache"), Some(0)).unwrap_err();
    assert!(matches!(err, Error::Corruption(ref m) if m.contains("postings.bin")), "{err:?}");
}

#[test]
fn http_registry_round_trip_with_auth() {
    let work = tempfile::tempdir().unwrap();
    let (_, index) = common::build(work.path(), &common::three_docs(), "1KB", 1);
    let server = serve_registry(&work.path().join("served"), "127.0.0.1:0", Some(Token::new("s3cret"))).unwrap();
    let base = server.url();

    let anonymous = RegistryLocation::new(&base, "acme").unwrap().with_token(None);
    assert!(matches!(push_index_to_hub("demo", &index, &anonymous), Err(Error::Auth(_))));
    let wrong = anonymous.clone().with_token(Some(Token::new("nope")));
    assert!(matches!(push_index_to_hub("demo", &index, &wrong), Err(Error::Auth(_))));

    let authed = anonymous.clone().with_token(Some(Token::new("s3cret")));
    assert_eq!(push_index_to_hub("demo", &index, &authed).unwrap(), format!("{base}/indexes/acme/demo/0"));
    assert_eq!(push_index_to_hub("demo", &index, &authed).unwrap(), format!("{base}/indexes/acme/demo/1"));

    // Downloads need no token.
    let cache = work.path().join("cache");
    let loaded = load_index_from_hub("demo", &anonymous, &cache, None).unwrap();
    assert_eq!(loaded, cache.join("acme/demo/1"));
    same_files(&index, &loaded);

    let manifest = RegistryClient::new(anonymous.clone())
        .unwrap()
        .fetch_index_manifest("demo", 0)
        .unwrap();
    assert_eq!((manifest.slug.as_str(), manifest.version), ("demo", 0));
    assert!(matches!(
        load_index_from_hub("demo", &anonymous, &cache, Some(7)),
        Err(Error::NotFound(_))
    ));
}

#[test]
fn http_registry_rejects_bad_uploads() {
    let work = tempfile::tempdir().unwrap();
    let (_, index) = common::build(work.path(), &common::three_docs(), "1KB", 1);
    let server = serve_registry(&work.path().join("served"), "127.0.0.1:0", None).unwrap();
    let packed = plugsearch::registry::pack_index_bytes(
        &index,
        &PackOptions {
            slug: "demo".into(),
            ..PackOptions::default()
        },
    )
    .unwrap();
    let url = format!("{}/indexes/acme/demo", server.url());
    let http = reqwest::blocking::Client::new();

    let status = |digest: &str, body: Vec<u8>| {
        http.put(&url)
            .header(DIGEST_HEADER, digest)
            .body(body)
            .send()
            .unwrap()
            .status()
            .as_u16()
    };
    assert_eq!(status(&"0".repeat(64), packed.bytes.clone()), 422);
    assert_eq!(status(&sha256_hex(b"junk"), b"junk".to_vec()), 422);
    let wrong_version = plugsearch::registry::pack_index_bytes(
        &index,
        &PackOptions {
            slug: "demo".into(),
            version: 4,
            ..PackOptions::default()
        },
    )
    .unwrap();
    assert_eq!(status(&sha256_hex(&wrong_version.bytes), wrong_version.bytes), 409);
    let other_slug = plugsearch::registry::pack_index_bytes(
        &index,
        &PackOptions {
            slug: "other".into(),
            ..PackOptions::default()
        },
    )
    .unwrap();
    assert_eq!(status(&sha256_hex(&other_slug.bytes), other_slug.bytes), 422);
    assert_eq!(status(&sha256_hex(&packed.bytes), packed.bytes), 201);
}

#[test]
fn concurrent_http_pushes_get_consecutive_versions() {
    let work = tempfile::tempdir().unwrap();
    let (_, index) = common::build(work.path(), &common::three_docs(), "1KB", 1);
    let server = serve_registry(&work.path().join("served"), "127.0.0.1:0", None).unwrap();
    let location = RegistryLocation::new(server.url(), "acme").unwrap().with_token(None);

    let mut versions: Vec<u64> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let location = location.clone();
                let index = index.clone();
                scope.spawn(move || {
                    RegistryClient::new(location)
                        .unwrap()
                        .push_index("demo", &index, &PackOptions::default())
                        .unwrap()
                        .version
                        .unwrap()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    versions.sort_unstable();
    assert_eq!(versions, [0, 1, 2, 3]);
}

#[test]
fn unreachable_registry_is_transport_error() {
    let work = tempfile::tempdir().unwrap();
    let location = RegistryLocation::new("http://127.0.0.1:9", "acme").unwrap();
    let err = load_index_from_hub("demo", &location, work.path(), None).unwrap_err();
    assert!(matches!(err, Error::Transport(_)), "{err:?}");
    assert!(err.is_retriable());
}

#[test]
fn concurrent_file_pushes_get_consecutive_versions() {
    let work = tempfile::tempdir().unwrap();
    let (_, index) = common::build(work.path(), &common::three_docs(), "1KB", 1);
    let location = file_location(&work.path().join("registry"), "acme");
    let mut versions: Vec<u64> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..6)
            .map(|_| {
                let location = location.clone();
                let index = index.clone();
                scope.spawn(move || {
                    RegistryClient::new(location)
                        .unwrap()
                        .push_index("demo", &index, &PackOptions::default())
                        .unwrap()
                        .version
                        .unwrap()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    versions.sort_unstable();
    assert_eq!(versions, [0, 1, 2, 3, 4, 5]);
}
