//! Binary embedding cache.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    4 bytes  "DKVC"
//! version  u32      1
//! dim      u32
//! count    u64
//! values   count * dim f32 (IEEE-754), row-major
//! ids      count * (u32 byte length + UTF-8 bytes)
//! checksum u64      first 8 bytes of SHA-256 over everything above
//! ```

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use sha2::{Digest, Sha256};

use super::Embedder;
use crate::error::{Error, Result};
use crate::math::Embedding;

pub const CACHE_MAGIC: [u8; 4] = *b"DKVC";
pub const CACHE_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8;

fn checksum(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(word)
}

pub fn write_cache_bytes(ids: &[String], embeddings: &[Embedding]) -> Result<Vec<u8>> {
    if ids.len() != embeddings.len() {
        return Err(Error::input(format!("{} ids for {} embeddings", ids.len(), embeddings.len())));
    }
    let mut seen = HashSet::with_capacity(ids.len());
    if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(Error::input(format!("duplicate id `{dup}`")));
    }
    let dim = embeddings.first().map_or(0, Embedding::dim);
    let dim32 = u32::try_from(dim).map_err(|_| Error::input("dim exceeds u32"))?;

    let mut out = Vec::with_capacity(HEADER_LEN + embeddings.len() * dim * 4 + 8);
    out.extend_from_slice(&CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&dim32.to_le_bytes());
    out.extend_from_slice(&(embeddings.len() as u64).to_le_bytes());
    for (row, e) in embeddings.iter().enumerate() {
        if e.dim() != dim {
            return Err(Error::input(format!("row {row} has dim {}, expected {dim}", e.dim())));
        }
        for &v in e.values() {
            let narrow = v as f32;
            if f64::from(narrow) != v {
                return Err(Error::input(format!("row {row} holds a value not representable as f32")));
            }
            out.extend_from_slice(&narrow.to_le_bytes());
        }
    }
    for id in ids {
        let len = u32::try_from(id.len()).map_err(|_| Error::input("id too long"))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    let sum = checksum(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Integrity(format!("truncated payload at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn read_cache_bytes(bytes: &[u8]) -> Result<(Vec<String>, Vec<Embedding>)> {
    if bytes.len() < HEADER_LEN + 8 || bytes[..4] != CACHE_MAGIC {
        return Err(Error::Integrity("missing or corrupt header".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    if checksum(body) != stored {
        return Err(Error::Integrity("checksum mismatch".into()));
    }
    let mut cur = Cursor { bytes: body, pos: 4 };
    let version = cur.u32()?;
    if version != CACHE_VERSION {
        return Err(Error::Integrity(format!("unsupported cache version {version}")));
    }
    let dim = cur.u32()? as usize;
    let count = usize::try_from(cur.u64()?).map_err(|_| Error::Integrity("count overflow".into()))?;
    if count > 0 && dim == 0 {
        return Err(Error::Integrity("zero dim with non-empty payload".into()));
    }
    let value_bytes = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Integrity("payload size overflow".into()))?;
    let values = cur.take(value_bytes)?;
    let mut embeddings = Vec::with_capacity(count);
    for row in values.chunks_exact(dim.max(1) * 4).take(count) {
        let v: Vec<f64> =
            row.chunks_exact(4).map(|b| f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes")))).collect();
        embeddings.push(Embedding::new(v).map_err(|e| Error::Integrity(e.to_string()))?);
    }
    let mut ids = Vec::with_capacity(count);
    let mut seen = HashSet::with_capacity(count);
    for _ in 0..count {
        let len = cur.u32()? as usize;
        let id =
            std::str::from_utf8(cur.take(len)?).map_err(|_| Error::Integrity("id is not UTF-8".into()))?.to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::Integrity(format!("duplicate id `{id}`")));
        }
        ids.push(id);
    }
    if cur.pos != body.len() {
        return Err(Error::Integrity("trailing bytes after id table".into()));
    }
    Ok((ids, embeddings))
}

/// Writes `ids`/`embeddings` atomically (temp file then rename).
pub fn write_cache(path: &Path, ids: &[String], embeddings: &[Embedding]) -> Result<()> {
    let bytes = write_cache_bytes(ids, embeddings)?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_cache(path: &Path) -> Result<(Vec<String>, Vec<Embedding>)> {
    read_cache_bytes(&std::fs::read(path)?)
}

fn text_key(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Text-keyed cache in front of another embedder.
///
/// Entries are keyed by the SHA-256 of the text. Misses go to `inner`; with
/// no inner embedder a miss is an error. Call [`CachedEmbedder::flush`] to
/// persist new entries.
pub struct CachedEmbedder {
    path: PathBuf,
    inner: Option<Box<dyn Embedder>>,
    dim: usize,
    entries: RwLock<(Vec<String>, HashMap<String, Embedding>)>,
}

impl CachedEmbedder {
    pub fn open(path: PathBuf, inner: Option<Box<dyn Embedder>>) -> Result<Self> {
        let (ids, embs) = if path.exists() { read_cache(&path)? } else { (Vec::new(), Vec::new()) };
        let dim = match (embs.first(), &inner) {
            (Some(e), Some(i)) if e.dim() != i.dim() => {
                return Err(Error::config(format!("cache dim {} does not match embedder dim {}", e.dim(), i.dim())))
            }
            (Some(e), _) => e.dim(),
            (None, Some(i)) => i.dim(),
            (None, None) => return Err(Error::config("empty cache with no embedder behind it")),
        };
        let map = ids.iter().cloned().zip(embs).collect();
        Ok(Self { path, inner, dim, entries: RwLock::new((ids, map)) })
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flush(&self) -> Result<()> {
        let guard = self.entries.read().expect("cache lock");
        let (order, map) = &*guard;
        let embs: Vec<Embedding> = order.iter().map(|k| map[k].clone()).collect();
        write_cache(&self.path, order, &embs)
    }
}

impl Embedder for CachedEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        let keys: Vec<String> = texts.iter().map(|t| text_key(t)).collect();
        let missing: Vec<usize> = {
            let guard = self.entries.read().expect("cache lock");
            let mut seen = HashSet::new();
            (0..texts.len()).filter(|&i| !guard.1.contains_key(&keys[i]) && seen.insert(&keys[i])).collect()
        };
        if !missing.is_empty() {
            let inner =
                self.inner.as_ref().ok_or_else(|| Error::input(format!("{} text(s) not in cache", missing.len())))?;
            let batch: Vec<String> = missing.iter().map(|&i| texts[i].clone()).collect();
            let fresh = inner.embed_batch(&batch)?;
            let mut guard = self.entries.write().expect("cache lock");
            for (&i, e) in missing.iter().zip(fresh) {
                if guard.1.insert(keys[i].clone(), e).is_none() {
                    guard.0.push(keys[i].clone());
                }
            }
        }
        let guard = self.entries.read().expect("cache lock");
        Ok(keys.iter().map(|k| guard.1[k].clone()).collect())
    }
}
