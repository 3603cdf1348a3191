//! Sequence construction and masking for table-aware masked-autoencoder
//! pretraining, plus the summary-reconstruction decoder loss.
//!
//! A table is linearised as `[CLS] headers [SEP] cells [SEP]` and paired with
//! a summary stream `[CLS] summary metadata`. The decoder is scored only on
//! masked summary positions.

use std::io::BufRead;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Tokenizer;
use crate::error::{Error, Result};

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

/// Default encoder-side mask ratio.
pub const ENCODER_MASK_RATIO: f64 = 0.2;
/// Default decoder-side mask ratio.
pub const DECODER_MASK_RATIO: f64 = 0.6;
/// Default share of positions each decoder row may attend to.
pub const DEFAULT_KEEP_RATIO: f64 = 1.0 - DECODER_MASK_RATIO;

/// A table with its header tokens, row-major cell tokens and summary.
///
/// Every header and cell is one token unit. The summary may only be empty
/// when the table is still waiting for a generated summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDoc {
    headers: Vec<String>,
    rows: usize,
    cols: usize,
    cells: Vec<String>,
    summary: Vec<String>,
    metadata: Vec<String>,
    synthetic_pending: bool,
}

impl TableDoc {
    pub fn new(
        headers: Vec<String>,
        rows: usize,
        cols: usize,
        cells: Vec<String>,
        summary: Vec<String>,
    ) -> Result<Self> {
        Self::with_metadata(headers, rows, cols, cells, summary, Vec::new(), false)
    }

    pub fn with_metadata(
        headers: Vec<String>,
        rows: usize,
        cols: usize,
        cells: Vec<String>,
        summary: Vec<String>,
        metadata: Vec<String>,
        synthetic_pending: bool,
    ) -> Result<Self> {
        if cells.len() != rows * cols {
            return Err(Error::input(format!("{} cells for a {rows}x{cols} table", cells.len())));
        }
        if summary.is_empty() && !synthetic_pending {
            return Err(Error::input("table summary is empty and not flagged synthetic-pending"));
        }
        Ok(Self { headers, rows, cols, cells, summary, metadata, synthetic_pending })
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn cells(&self) -> &[String] {
        &self.cells
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn summary(&self) -> &[String] {
        &self.summary
    }

    pub fn metadata(&self) -> &[String] {
        &self.metadata
    }

    pub fn synthetic_pending(&self) -> bool {
        self.synthetic_pending
    }
}

/// Encoder input `T` and decoder target stream `S`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableSequence {
    pub table: Vec<String>,
    pub summary: Vec<String>,
}

pub fn build_table_sequence(table: &TableDoc) -> TableSequence {
    let mut t = Vec::with_capacity(table.headers.len() + table.cells.len() + 3);
    t.push(CLS.to_string());
    t.extend(table.headers.iter().cloned());
    t.push(SEP.to_string());
    t.extend(table.cells.iter().cloned());
    t.push(SEP.to_string());

    let mut s = Vec::with_capacity(table.summary.len() + table.metadata.len() + 1);
    s.push(CLS.to_string());
    s.extend(table.summary.iter().cloned());
    s.extend(table.metadata.iter().cloned());
    TableSequence { table: t, summary: s }
}

/// Recovers `(headers, cells)` from a sequence built by [`build_table_sequence`].
pub fn split_table_sequence(table: &[String]) -> Option<(Vec<String>, Vec<String>)> {
    let body = table.strip_prefix(&[CLS.to_string()])?;
    let body = body.strip_suffix(&[SEP.to_string()])?;
    let sep = body.iter().position(|t| t == SEP)?;
    Some((body[..sep].to_vec(), body[sep + 1..].to_vec()))
}

/// Seeded set of masked positions over the maskable (non-marker) tokens.
///
/// Positions index the maskable tokens, so marker slots are never included;
/// use [`MaskPlan::sequence_positions`] to map into a sequence with leading
/// markers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPlan {
    pub masked_positions: Vec<usize>,
    pub maskable_length: usize,
    pub ratio: f64,
    pub seed: u64,
}

impl MaskPlan {
    pub fn contains(&self, pos: usize) -> bool {
        self.masked_positions.binary_search(&pos).is_ok()
    }

    pub fn sequence_positions(&self, offset: usize) -> Vec<usize> {
        self.masked_positions.iter().map(|p| p + offset).collect()
    }

    /// Replaces masked tokens of `tokens[offset..]` with `[MASK]`.
    pub fn apply(&self, tokens: &[String], offset: usize) -> Vec<String> {
        let mut out = tokens.to_vec();
        for p in self.sequence_positions(offset) {
            if let Some(t) = out.get_mut(p) {
                *t = MASK.to_string();
            }
        }
        out
    }
}

/// Number of positions masked for a given length and ratio (half rounds away
/// from zero).
pub fn mask_count(maskable_length: usize, ratio: f64) -> usize {
    (ratio * maskable_length as f64).round() as usize
}

pub fn sample_masks(maskable_length: usize, ratio: f64, seed: u64) -> Result<MaskPlan> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::config(format!("mask ratio must lie in (0, 1), got {ratio}")));
    }
    let count = mask_count(maskable_length, ratio);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masked_positions = sample(&mut rng, maskable_length, count).into_vec();
    masked_positions.sort_unstable();
    Ok(MaskPlan { masked_positions, maskable_length, ratio, seed })
}

/// Square boolean matrix; `allows(i, j)` means row `i` attends to column `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMatrix {
    len: usize,
    allow: Vec<bool>,
}

impl AttentionMatrix {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn allows(&self, row: usize, col: usize) -> bool {
        self.allow[row * self.len + col]
    }

    pub fn row(&self, row: usize) -> &[bool] {
        &self.allow[row * self.len..(row + 1) * self.len]
    }
}

/// Enhanced-decoding attention mask.
///
/// Row 0 sees every position. Each later row sees position 0 plus a seeded
/// uniform sample of the other positions, never itself, for a total of
/// `round(keep_ratio * (length - 1))` visible positions (at least one).
pub fn m1_attention_mask(length: usize, keep_ratio: f64, seed: u64) -> Result<AttentionMatrix> {
    if length < 2 {
        return Err(Error::input("attention mask needs length >= 2"));
    }
    if !(keep_ratio > 0.0 && keep_ratio <= 1.0) {
        return Err(Error::config(format!("keep ratio must lie in (0, 1], got {keep_ratio}")));
    }
    let visible = mask_count(length - 1, keep_ratio).clamp(1, length - 1);
    let mut allow = vec![false; length * length];
    allow[..length].fill(true);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for row in 1..length {
        let base = row * length;
        allow[base] = true;
        // candidates: every position except 0 and `row`
        let pool = length - 2;
        let picks = sample(&mut rng, pool, visible - 1);
        for p in picks {
            let col = if p + 1 >= row { p + 2 } else { p + 1 };
            allow[base + col] = true;
        }
    }
    Ok(AttentionMatrix { len: length, allow })
}

/// Summed negative log-likelihood of the true summary tokens at masked
/// positions.
///
/// `predicted_logprobs[i]` is the decoder's log-probability distribution over
/// the vocabulary for summary token `i`; only masked positions are read and
/// each of those must be normalised to within 1e-6.
pub fn table_retromae_decoder_loss(
    predicted_logprobs: &[Vec<f64>],
    mask: &MaskPlan,
    true_tokens: &[usize],
) -> Result<f64> {
    let mut loss = 0.0;
    for &pos in &mask.masked_positions {
        let dist = predicted_logprobs
            .get(pos)
            .filter(|d| !d.is_empty())
            .ok_or_else(|| Error::input(format!("no prediction for masked position {pos}")))?;
        let token =
            *true_tokens.get(pos).ok_or_else(|| Error::input(format!("no true token for masked position {pos}")))?;
        let total: f64 = dist.iter().map(|lp| lp.exp()).sum();
        if !total.is_finite() || (total - 1.0).abs() > 1e-6 {
            return Err(Error::input(format!("prediction at position {pos} sums to {total}, not 1")));
        }
        let lp = *dist
            .get(token)
            .ok_or_else(|| Error::input(format!("token id {token} outside vocabulary of {}", dist.len())))?;
        loss -= lp;
    }
    Ok(loss)
}

#[derive(Debug, Deserialize)]
struct TableRecord {
    id: String,
    #[serde(default)]
    headers: Vec<String>,
    #[serde(default)]
    cells: Vec<Vec<String>>,
    #[serde(default)]
    summary: String,
    #[serde(default)]
    metadata: String,
    #[serde(default)]
    synthetic_pending: bool,
}

/// Reads a line-delimited table corpus. Blank lines are skipped.
///
/// Each record is `{"id", "headers": [..], "cells": [[..], ..], "summary",
/// "metadata"?, "synthetic_pending"?}`. Headers and cells become one token
/// each; summary and metadata go through `tokenizer`.
pub fn read_table_corpus(path: &Path, tokenizer: &dyn Tokenizer) -> Result<Vec<(String, TableDoc)>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in file.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TableRecord =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId { line: line_no, id: rec.id });
        }
        let rows = rec.cells.len();
        let cols = rec.cells.first().map_or(rec.headers.len(), Vec::len);
        if rec.cells.iter().any(|r| r.len() != cols) {
            return Err(Error::Parse { line: line_no, message: "ragged table rows".into() });
        }
        let doc = TableDoc::with_metadata(
            rec.headers,
            rows,
            cols,
            rec.cells.into_iter().flatten().collect(),
            tokenizer.tokenize(&rec.summary),
            tokenizer.tokenize(&rec.metadata),
            rec.synthetic_pending,
        )
        .map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        out.push((rec.id, doc));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn one_by_one_table() {
        let t = TableDoc::new(toks("price"), 1, 1, toks("5"), toks("cost table")).unwrap();
        let seq = build_table_sequence(&t);
        assert_eq!(seq.table, toks("[CLS] price [SEP] 5 [SEP]"));
        assert_eq!(seq.summary, toks("[CLS] cost table"));
    }

    #[test]
    fn empty_table() {
        let t = TableDoc::new(vec![], 0, 0, vec![], toks("nothing")).unwrap();
        assert_eq!(build_table_sequence(&t).table, toks("[CLS] [SEP] [SEP]"));
    }

    #[test]
    fn two_by_two_row_major() {
        let t = TableDoc::new(toks("a b"), 2, 2, toks("r0c0 r0c1 r1c0 r1c1"), toks("s")).unwrap();
        assert_eq!(build_table_sequence(&t).table, toks("[CLS] a b [SEP] r0c0 r0c1 r1c0 r1c1 [SEP]"));
    }

    #[test]
    fn metadata_follows_summary() {
        let t = TableDoc::with_metadata(vec![], 0, 0, vec![], toks("s1 s2"), toks("m1"), false).unwrap();
        assert_eq!(build_table_sequence(&t).summary, toks("[CLS] s1 s2 m1"));
    }

    #[test]
    fn table_invariants() {
        assert!(TableDoc::new(vec![], 2, 2, toks("a b c"), toks("s")).is_err());
        assert!(TableDoc::new(vec![], 0, 0, vec![], vec![]).is_err());
        assert!(TableDoc::with_metadata(vec![], 0, 0, vec![], vec![], vec![], true).is_ok());
    }

    #[test]
    fn split_round_trip() {
        let t = TableDoc::new(toks("h1 h2"), 1, 2, toks("x y"), toks("s")).unwrap();
        let (h, c) = split_table_sequence(&build_table_sequence(&t).table).unwrap();
        assert_eq!(h, t.headers());
        assert_eq!(c, t.cells());
    }

    #[test]
    fn mask_counts_follow_ratio() {
        assert_eq!(sample_masks(10, 0.2, 1).unwrap().masked_positions.len(), 2);
        assert_eq!(sample_masks(10, 0.6, 1).unwrap().masked_positions.len(), 6);
        assert_eq!(mask_count(5, 0.5), 3);
        assert_eq!(sample_masks(7, 0.3, 9).unwrap(), sample_masks(7, 0.3, 9).unwrap());
        assert!(sample_masks(10, 0.0, 1).is_err());
        assert!(sample_masks(10, 1.0, 1).is_err());
    }

    #[test]
    fn mask_apply_skips_markers() {
        let plan = MaskPlan { masked_positions: vec![0, 2], maskable_length: 3, ratio: 0.6, seed: 0 };
        let masked = plan.apply(&toks("[CLS] a b c"), 1);
        assert_eq!(masked, toks("[CLS] [MASK] b [MASK]"));
    }

    #[test]
    fn m1_full_keep_excludes_only_self() {
        let m = m1_attention_mask(4, 1.0, 3).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = i == 0 || i != j;
                assert_eq!(m.allows(i, j), expected, "({i},{j})");
            }
        }
    }

    #[test]
    fn m1_rows_are_sized() {
        let m = m1_attention_mask(11, 0.4, 5).unwrap();
        for i in 1..11 {
            assert!(m.allows(i, 0));
            assert!(!m.allows(i, i));
            assert_eq!(m.row(i).iter().filter(|&&b| b).count(), 4);
        }
        assert!(m.row(0).iter().all(|&b| b));
        assert_eq!(m, m1_attention_mask(11, 0.4, 5).unwrap());
    }

    #[test]
    fn decoder_loss_cases() {
        let plan = MaskPlan { masked_positions: vec![0, 1], maskable_length: 2, ratio: 0.6, seed: 0 };
        let point = vec![vec![0.0, f64::NEG_INFINITY], vec![f64::NEG_INFINITY, 0.0]];
        assert_eq!(table_retromae_decoder_loss(&point, &plan, &[0, 1]).unwrap(), 0.0);

        let v = 5usize;
        let uniform = vec![vec![-(v as f64).ln(); v]];
        let one = MaskPlan { masked_positions: vec![0], maskable_length: 1, ratio: 0.5, seed: 0 };
        assert_abs_diff_eq!(
            table_retromae_decoder_loss(&uniform, &one, &[3]).unwrap(),
            (v as f64).ln(),
            epsilon = 1e-12
        );

        let probs = vec![vec![0.5f64.ln(), 0.5f64.ln()], vec![0.25f64.ln(), 0.25f64.ln(), 0.5f64.ln()]];
        assert_abs_diff_eq!(table_retromae_decoder_loss(&probs, &plan, &[1, 0]).unwrap(), 2.079_44, epsilon = 1e-5);

        let bad = vec![vec![0.9f64.ln(), 0.9f64.ln()], vec![0.0]];
        assert!(matches!(table_retromae_decoder_loss(&bad, &plan, &[0, 0]), Err(Error::InvalidInput(_))));
    }
}
