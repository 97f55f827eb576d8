//! Reproducible gzip-compressed tar archives.
//!
//! Entries are written in sorted order with zeroed timestamps, uid/gid 0 and
//! mode 0644, so equal inputs give equal bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Component, Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::{Compression, GzBuilder};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const GZIP_LEVEL: u32 = 6;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_archive(files: &BTreeMap<String, Vec<u8>>) -> Result<Vec<u8>> {
    let gz = GzBuilder::new()
        .mtime(0)
        .write(Vec::new(), Compression::new(GZIP_LEVEL));
    let mut builder = tar::Builder::new(gz);
    for (name, bytes) in files {
        let mut header = tar::Header::new_ustar();
        header.set_path(name)?;
        header.set_size(bytes.len() as u64);
        header.set_mode(0o644);
        header.set_uid(0);
        header.set_gid(0);
        header.set_mtime(0);
        header.set_entry_type(tar::EntryType::Regular);
        header.set_cksum();
        builder.append(&header, bytes.as_slice())?;
    }
    let gz = builder.into_inner()?;
    let mut out = gz.finish()?;
    out.flush()?;
    Ok(out)
}

fn corrupt(e: impl std::fmt::Display) -> Error {
    Error::Corruption(e.to_string())
}

fn safe_relative(path: &Path) -> Result<String> {
    let mut parts = Vec::new();
    for component in path.components() {
        match component {
            Component::Normal(p) => parts.push(
                p.to_str()
                    .ok_or_else(|| corrupt("non UTF-8 entry name"))?
                    .to_string(),
            ),
            Component::CurDir => {}
            _ => return Err(corrupt(format!("unsafe entry path {}", path.display()))),
        }
    }
    if parts.is_empty() {
        return Err(corrupt("empty entry path"));
    }
    Ok(parts.join("/"))
}

/// Decode an archive into `name → bytes`. Any decoding failure is a
/// corruption error.
pub fn read_archive(bytes: &[u8]) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut tar_bytes = Vec::new();
    GzDecoder::new(bytes)
        .read_to_end(&mut tar_bytes)
        .map_err(corrupt)?;
    let mut archive = tar::Archive::new(tar_bytes.as_slice());
    let mut files = BTreeMap::new();
    for entry in archive.entries().map_err(corrupt)? {
        let mut entry = entry.map_err(corrupt)?;
        match entry.header().entry_type() {
            tar::EntryType::Regular => {}
            tar::EntryType::Directory => continue,
            other => return Err(corrupt(format!("unexpected entry type {other:?}"))),
        }
        let name = safe_relative(&entry.path().map_err(corrupt)?)?;
        let mut content = Vec::with_capacity(entry.size() as usize);
        entry.read_to_end(&mut content).map_err(corrupt)?;
        if files.insert(name.clone(), content).is_some() {
            return Err(corrupt(format!("duplicate entry {name}")));
        }
    }
    Ok(files)
}

/// Every regular file under `dir`, keyed by `/`-separated relative path.
pub fn collect_tree(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut files = BTreeMap::new();
    for entry in walkdir::WalkDir::new(dir).min_depth(1) {
        let entry = entry.map_err(|e| Error::Io(e.into()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let relative = entry.path().strip_prefix(dir).expect("child of root");
        let name = safe_relative(relative).map_err(|_| {
            Error::Config(format!("cannot archive {}", entry.path().display()))
        })?;
        let bytes = fs::read(entry.path()).map_err(|e| Error::io_at(entry.path(), e))?;
        files.insert(name, bytes);
    }
    Ok(files)
}

pub fn write_tree(dir: &Path, files: &BTreeMap<String, Vec<u8>>) -> Result<()> {
    for (name, bytes) in files {
        let path: PathBuf = dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io_at(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io_at(&path, e))?;
    }
    Ok(())
}
