//! Binary layouts of `terms.dict`, `postings.bin` and `docs.tbl`.
//!
//! All fixed-width integers are little-endian. Each file starts with an
//! 8-byte magic.
//!
//! ```text
//! terms.dict  = "PSTERMS1" u64:count { u32:len bytes u32:df u64:offset u64:length }*
//! postings.bin= "PSPOSTS1" { varint:docid_delta varint:tf }*
//! docs.tbl    = "PSDOCTB1" u64:count { u32:doc_len u32:shard u64:offset u64:meta_offset u32:len bytes }*
//! ```
//!
//! Postings lists are addressed by (offset, length) in bytes; the first delta
//! of each list is relative to docid 0.

use crate::error::{Error, Result};

pub const TERMS_MAGIC: &[u8; 8] = b"PSTERMS1";
pub const POSTINGS_MAGIC: &[u8; 8] = b"PSPOSTS1";
pub const DOCS_MAGIC: &[u8; 8] = b"PSDOCTB1";

/// Sentinel for documents without a metadata sidecar line.
pub const NO_METADATA: u64 = u64::MAX;

pub fn write_varint(out: &mut Vec<u8>, mut value: u64) {
    while value >= 0x80 {
        out.push((value as u8 & 0x7f) | 0x80);
        value >>= 7;
    }
    out.push(value as u8);
}

/// Decode one varint at `*pos`, advancing it.
pub fn read_varint(buf: &[u8], pos: &mut usize) -> Option<u64> {
    let mut value = 0u64;
    let mut shift = 0u32;
    loop {
        let byte = *buf.get(*pos)?;
        *pos += 1;
        if shift == 63 && byte > 1 {
            return None;
        }
        value |= u64::from(byte & 0x7f) << shift;
        if byte & 0x80 == 0 {
            return Some(value);
        }
        shift += 7;
        if shift > 63 {
            return None;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermEntry {
    pub term: String,
    pub df: u32,
    pub offset: u64,
    pub length: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocEntry {
    pub external_id: String,
    pub doc_len: u32,
    pub shard: u32,
    pub offset: u64,
    pub meta_offset: u64,
}

pub fn encode_postings(out: &mut Vec<u8>, entries: &[(u32, u32)]) {
    let mut prev = 0u32;
    for &(docid, tf) in entries {
        write_varint(out, u64::from(docid - prev));
        write_varint(out, u64::from(tf));
        prev = docid;
    }
}

pub fn encode_terms(entries: &[TermEntry]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + entries.len() * 32);
    out.extend_from_slice(TERMS_MAGIC);
    out.extend_from_slice(&(entries.len() as u64).to_le_bytes());
    for e in entries {
        out.extend_from_slice(&(e.term.len() as u32).to_le_bytes());
        out.extend_from_slice(e.term.as_bytes());
        out.extend_from_slice(&e.df.to_le_bytes());
        out.extend_from_slice(&e.offset.to_le_bytes());
        out.extend_from_slice(&e.length.to_le_bytes());
    }
    out
}

pub fn encode_docs(entries: &[DocEntry]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + entries.len() * 40);
    out.extend_from_slice(DOCS_MAGIC);
    out.extend_from_slice(&(entries.len() as u64).to_le_bytes());
    for e in entries {
        out.extend_from_slice(&e.doc_len.to_le_bytes());
        out.extend_from_slice(&e.shard.to_le_bytes());
        out.extend_from_slice(&e.offset.to_le_bytes());
        out.extend_from_slice(&e.meta_offset.to_le_bytes());
        out.extend_from_slice(&(e.external_id.len() as u32).to_le_bytes());
        out.extend_from_slice(e.external_id.as_bytes());
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    file: &'static str,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8], magic: &[u8; 8], file: &'static str) -> Result<Self> {
        if buf.len() < 8 || &buf[..8] != magic {
            return Err(Error::Integrity(format!("{file}: bad magic")));
        }
        Ok(Cursor { buf, pos: 8, file })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.buf.len())
            .ok_or_else(|| Error::Integrity(format!("{}: truncated", self.file)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::Integrity(format!("{}: invalid UTF-8", self.file)))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Integrity(format!("{}: trailing bytes", self.file)));
        }
        Ok(())
    }
}

pub fn decode_terms(buf: &[u8]) -> Result<Vec<TermEntry>> {
    let mut cur = Cursor::new(buf, TERMS_MAGIC, "terms.dict")?;
    let count = cur.u64()?;
    let mut out = Vec::with_capacity(count.min(1 << 24) as usize);
    for _ in 0..count {
        let term = cur.string()?;
        let df = cur.u32()?;
        let offset = cur.u64()?;
        let length = cur.u64()?;
        out.push(TermEntry {
            term,
            df,
            offset,
            length,
        });
    }
    cur.finish()?;
    Ok(out)
}

pub fn decode_docs(buf: &[u8]) -> Result<Vec<DocEntry>> {
    let mut cur = Cursor::new(buf, DOCS_MAGIC, "docs.tbl")?;
    let count = cur.u64()?;
    let mut out = Vec::with_capacity(count.min(1 << 24) as usize);
    for _ in 0..count {
        let doc_len = cur.u32()?;
        let shard = cur.u32()?;
        let offset = cur.u64()?;
        let meta_offset = cur.u64()?;
        let external_id = cur.string()?;
        out.push(DocEntry {
            external_id,
            doc_len,
            shard,
            offset,
            meta_offset,
        });
    }
    cur.finish()?;
    Ok(out)
}

/// Iterator over one encoded postings list.
#[derive(Debug, Clone)]
pub struct PostingsIter<'a> {
    buf: &'a [u8],
    pos: usize,
    prev: u32,
}

impl<'a> PostingsIter<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        PostingsIter {
            buf,
            pos: 0,
            prev: 0,
        }
    }
}

impl Iterator for PostingsIter<'_> {
    /// (docid, tf)
    type Item = (u32, u32);

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.buf.len() {
            return None;
        }
        let delta = read_varint(self.buf, &mut self.pos)?;
        let tf = read_varint(self.buf, &mut self.pos)?;
        self.prev += delta as u32;
        Some((self.prev, tf as u32))
    }
}
