//! Documents, queries, tokenization and sliding-window chunking.
//!
//! Corpus files are UTF-8 JSON lines, one `{"id": ..., "text": ...}` record
//! per line. Query files use `{"id", "text", "task_definition"?}`. Blank
//! lines are ignored; line numbers in errors are 1-based.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CHUNK_SIZE: usize = 512;
pub const DEFAULT_CHUNK_OVERLAP: usize = 100;
pub const DEFAULT_QUERY_MAX_TOKENS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_definition: Option<String>,
}

impl Query {
    /// Query text with the instruction prefix applied when a task is set.
    pub fn model_text(&self) -> String {
        match &self.task_definition {
            Some(task) => instruct_query(task, &self.text),
            None => self.text.clone(),
        }
    }
}

fn read_jsonl<T, R>(reader: R, id_of: impl Fn(&T) -> &str) -> Result<Vec<T>>
where
    T: for<'de> Deserialize<'de>,
    R: Read,
{
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: T = serde_json::from_str(&line).map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        let id = id_of(&rec);
        if id.is_empty() {
            return Err(Error::Parse { line: line_no, message: "empty id".into() });
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::DuplicateId { line: line_no, id: id.to_string() });
        }
        out.push(rec);
    }
    Ok(out)
}

/// Reads a corpus, preserving file order and rejecting duplicate ids.
pub fn ingest(path: &Path) -> Result<Vec<Document>> {
    ingest_reader(std::fs::File::open(path)?)
}

pub fn ingest_reader(reader: impl Read) -> Result<Vec<Document>> {
    read_jsonl(reader, |d: &Document| &d.id)
}

pub fn read_queries(path: &Path) -> Result<Vec<Query>> {
    read_jsonl(std::fs::File::open(path)?, |q: &Query| &q.id)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Splits text into tokens. Implementations must be deterministic.
pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, text: &str) -> Vec<String>;
}

/// Whitespace splitting; words longer than `max_token_bytes` are cut into
/// pieces of at most that many bytes on character boundaries.
#[derive(Debug, Clone, Copy)]
pub struct WhitespaceTokenizer {
    pub max_token_bytes: usize,
}

impl Default for WhitespaceTokenizer {
    fn default() -> Self {
        Self { max_token_bytes: 32 }
    }
}

impl Tokenizer for WhitespaceTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let max = self.max_token_bytes.max(4);
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            if word.len() <= max {
                out.push(word.to_string());
                continue;
            }
            let mut start = 0;
            while start < word.len() {
                let mut end = (start + max).min(word.len());
                while !word.is_char_boundary(end) {
                    end -= 1;
                }
                out.push(word[start..end].to_string());
                start = end;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkConfig {
    pub chunk_size: usize,
    pub overlap: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        Self { chunk_size: DEFAULT_CHUNK_SIZE, overlap: DEFAULT_CHUNK_OVERLAP }
    }
}

impl ChunkConfig {
    pub fn new(chunk_size: usize, overlap: usize) -> Result<Self> {
        if chunk_size == 0 || overlap >= chunk_size {
            return Err(Error::config(format!(
                "need 0 <= overlap < chunk_size, got overlap {overlap}, chunk_size {chunk_size}"
            )));
        }
        Ok(Self { chunk_size, overlap })
    }

    pub fn stride(&self) -> usize {
        self.chunk_size - self.overlap
    }
}

/// Half-open token span `[token_start, token_end)` of one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub chunk_index: usize,
    pub token_start: usize,
    pub token_end: usize,
}

impl Chunk {
    pub fn len(&self) -> usize {
        self.token_end - self.token_start
    }

    pub fn is_empty(&self) -> bool {
        self.token_end == self.token_start
    }
}

/// Sliding-window spans over `n_tokens` tokens: chunk `k` covers
/// `[k * stride, min(k * stride + chunk_size, n))`, stopping at the first
/// chunk that reaches the end.
pub fn chunk_spans(n_tokens: usize, cfg: &ChunkConfig) -> Vec<(usize, usize)> {
    let stride = cfg.stride();
    let mut spans = Vec::with_capacity(n_tokens / stride.max(1) + 1);
    let mut start = 0;
    while start < n_tokens {
        let end = (start + cfg.chunk_size).min(n_tokens);
        spans.push((start, end));
        if end == n_tokens {
            break;
        }
        start += stride;
    }
    spans
}

pub fn chunk(doc_id: &str, tokens: &[String], cfg: &ChunkConfig) -> Vec<Chunk> {
    chunk_spans(tokens.len(), cfg)
        .into_iter()
        .enumerate()
        .map(|(chunk_index, (token_start, token_end))| Chunk {
            doc_id: doc_id.to_string(),
            chunk_index,
            token_start,
            token_end,
        })
        .collect()
}

pub fn instruct_query(task_definition: &str, query: &str) -> String {
    format!("Instruct: {task_definition} Query: {query}")
}

pub fn truncate_query(tokens: &[String], max_len: usize) -> &[String] {
    &tokens[..tokens.len().min(max_len.max(1))]
}
