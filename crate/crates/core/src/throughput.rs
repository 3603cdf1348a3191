//! Ingestion throughput: chunk, embed in fixed-size batches, report docs/s.
//!
//! The timed window covers tokenization, chunking and embedding for the
//! whole corpus. Counts are exact; only wall time varies between repeats.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{chunk_spans, ChunkConfig, Document, Tokenizer};
use crate::embedder::Embedder;
use crate::error::{Error, Result};

pub const DEFAULT_BATCH_SIZE: usize = 128;
pub const DEFAULT_REPEATS: usize = 3;
/// Width of the chunk-length histogram buckets, in tokens.
pub const HISTOGRAM_BUCKET: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatFailure {
    pub repeat: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub embedder: String,
    pub total_docs: usize,
    pub total_chunks: usize,
    pub total_tokens: usize,
    pub chunk_size: usize,
    pub overlap: usize,
    pub batch_size: usize,
    pub repeats: usize,
    /// Seconds per successful repeat, in run order.
    pub wall_times_s: Vec<f64>,
    pub failures: Vec<RepeatFailure>,
    /// `total_docs / median(wall_times_s)`; absent when every repeat failed.
    pub docs_per_sec: Option<f64>,
    /// Chunk count per length bucket, keyed by the bucket's lower bound.
    pub chunk_size_histogram: BTreeMap<usize, usize>,
    pub includes_tokenization: bool,
}

impl ThroughputReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })
    }
}

pub fn docs_per_second(docs: usize, seconds: f64) -> f64 {
    docs as f64 / seconds
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { (v[mid - 1] + v[mid]) / 2.0 })
}

/// `other / ours - 1`: how much slower (negative) or faster another system is.
pub fn relative_speed(other: f64, ours: f64) -> f64 {
    other / ours - 1.0
}

/// Percentage with one decimal, e.g. `-20.1%`.
pub fn format_relative(rel: f64) -> String {
    format!("{:.1}%", rel * 100.0)
}

struct Counts {
    chunks: usize,
    tokens: usize,
    histogram: BTreeMap<usize, usize>,
}

fn run_once(
    corpus: &[Document],
    embedder: &dyn Embedder,
    tokenizer: &dyn Tokenizer,
    cfg: &ChunkConfig,
    batch_size: usize,
) -> Result<Counts> {
    let mut counts = Counts { chunks: 0, tokens: 0, histogram: BTreeMap::new() };
    let mut batch: Vec<String> = Vec::with_capacity(batch_size);
    for doc in corpus {
        let tokens = tokenizer.tokenize(&doc.text);
        counts.tokens += tokens.len();
        for (start, end) in chunk_spans(tokens.len(), cfg) {
            counts.chunks += 1;
            *counts.histogram.entry((end - start) / HISTOGRAM_BUCKET * HISTOGRAM_BUCKET).or_default() += 1;
            batch.push(tokens[start..end].join(" "));
            if batch.len() == batch_size {
                embedder.embed_batch(&batch)?;
                batch.clear();
            }
        }
    }
    if !batch.is_empty() {
        embedder.embed_batch(&batch)?;
    }
    Ok(counts)
}

pub fn measure_throughput(
    name: &str,
    corpus: &[Document],
    embedder: &dyn Embedder,
    tokenizer: &dyn Tokenizer,
    chunk_cfg: &ChunkConfig,
    batch_size: usize,
    repeats: usize,
) -> Result<ThroughputReport> {
    if corpus.is_empty() {
        return Err(Error::input("empty corpus"));
    }
    if batch_size == 0 || repeats == 0 {
        return Err(Error::config("batch_size and repeats must be >= 1"));
    }
    let mut wall_times_s = Vec::with_capacity(repeats);
    let mut failures = Vec::new();
    let mut counts = None;
    for repeat in 0..repeats {
        let start = Instant::now();
        match run_once(corpus, embedder, tokenizer, chunk_cfg, batch_size) {
            Ok(c) => {
                wall_times_s.push(start.elapsed().as_secs_f64());
                counts = Some(c);
            }
            Err(e) => failures.push(RepeatFailure { repeat, error: e.to_string() }),
        }
    }
    let counts = match counts {
        Some(c) => c,
        None => {
            // still report exact counts even though nothing was embedded
            let mut c = Counts { chunks: 0, tokens: 0, histogram: BTreeMap::new() };
            for doc in corpus {
                let n = tokenizer.tokenize(&doc.text).len();
                c.tokens += n;
                for (s, e) in chunk_spans(n, chunk_cfg) {
                    c.chunks += 1;
                    *c.histogram.entry((e - s) / HISTOGRAM_BUCKET * HISTOGRAM_BUCKET).or_default() += 1;
                }
            }
            c
        }
    };
    let docs_per_sec = median(&wall_times_s).map(|t| docs_per_second(corpus.len(), t));
    Ok(ThroughputReport {
        embedder: name.to_string(),
        total_docs: corpus.len(),
        total_chunks: counts.chunks,
        total_tokens: counts.tokens,
        chunk_size: chunk_cfg.chunk_size,
        overlap: chunk_cfg.overlap,
        batch_size,
        repeats,
        wall_times_s,
        failures,
        docs_per_sec,
        chunk_size_histogram: counts.histogram,
        includes_tokenization: true,
    })
}

/// Plain-text comparison table; relative speeds are against `ours`.
pub fn comparison_table(ours: &ThroughputReport, others: &[ThroughputReport]) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(s, "{:<32} {:>12} {:>10}", "embedder", "docs/s", "rel");
    let ours_rate = ours.docs_per_sec;
    for r in std::iter::once(ours).chain(others) {
        let rate = r.docs_per_sec.map_or("failed".to_string(), |d| format!("{d:.1}"));
        let rel = match (r.docs_per_sec, ours_rate) {
            (Some(o), Some(b)) => format_relative(relative_speed(o, b)),
            _ => "n/a".to_string(),
        };
        let _ = writeln!(s, "{:<32} {:>12} {:>10}", r.embedder, rate, rel);
    }
    s
}
