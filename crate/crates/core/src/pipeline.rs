//! Retrieve-and-rerank and hard-negative mining.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{truncate_query, DEFAULT_QUERY_MAX_TOKENS};
use crate::error::{Error, Result};
use crate::index::{hit_order, ScoredHit, VectorIndex};
use crate::math::Embedding;
use crate::metrics::Qrels;

pub const DEFAULT_RETRIEVE_K: usize = 20;
pub const DEFAULT_MARGIN: f64 = 0.95;
pub const DEFAULT_KEEP_N: usize = 8;

pub struct QueryView<'a> {
    pub id: &'a str,
    pub tokens: &'a [String],
}

pub struct Candidate<'a> {
    pub id: &'a str,
    pub tokens: &'a [String],
    pub retrieval_score: f64,
}

/// Scores a (query, document) pair. Must be deterministic and callable from
/// several threads at once.
pub trait Reranker: Send + Sync {
    fn score(&self, query: &QueryView<'_>, doc: &Candidate<'_>) -> Result<f64>;
}

/// Passes the first-stage score through unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct RetrievalScoreReranker;

impl Reranker for RetrievalScoreReranker {
    fn score(&self, _query: &QueryView<'_>, doc: &Candidate<'_>) -> Result<f64> {
        Ok(doc.retrieval_score)
    }
}

/// Number of query token occurrences that also appear in the document.
#[derive(Debug, Clone, Copy, Default)]
pub struct OverlapReranker;

impl Reranker for OverlapReranker {
    fn score(&self, query: &QueryView<'_>, doc: &Candidate<'_>) -> Result<f64> {
        let vocab: std::collections::HashSet<&str> = doc.tokens.iter().map(String::as_str).collect();
        Ok(query.tokens.iter().filter(|t| vocab.contains(t.as_str())).count() as f64)
    }
}

/// Scores each document by its judged relevance grade for the query.
#[derive(Debug, Clone)]
pub struct OracleReranker {
    qrels: Qrels,
}

impl OracleReranker {
    pub fn new(qrels: Qrels) -> Self {
        Self { qrels }
    }
}

impl Reranker for OracleReranker {
    fn score(&self, query: &QueryView<'_>, doc: &Candidate<'_>) -> Result<f64> {
        Ok(f64::from(self.qrels.grade(query.id, doc.id)))
    }
}

/// Token lookup for candidate documents.
pub trait DocumentStore: Sync {
    fn tokens(&self, id: &str) -> Option<&[String]>;
}

impl DocumentStore for HashMap<String, Vec<String>> {
    fn tokens(&self, id: &str) -> Option<&[String]> {
        self.get(id).map(Vec::as_slice)
    }
}

pub struct PipelineQuery<'a> {
    pub id: &'a str,
    pub embedding: &'a Embedding,
    pub tokens: &'a [String],
}

/// Rescores `hits` with `reranker` and sorts by the new score (descending,
/// ties by doc id). The query is cut to 64 tokens first.
pub fn rerank_hits(
    query_id: &str,
    query_tokens: &[String],
    hits: &[ScoredHit],
    docs: &dyn DocumentStore,
    reranker: &dyn Reranker,
) -> Result<Vec<ScoredHit>> {
    let view = QueryView { id: query_id, tokens: truncate_query(query_tokens, DEFAULT_QUERY_MAX_TOKENS) };
    let mut out = hits
        .iter()
        .map(|h| {
            let tokens =
                docs.tokens(&h.doc_id).ok_or_else(|| Error::input(format!("document `{}` not in store", h.doc_id)))?;
            let cand = Candidate { id: &h.doc_id, tokens, retrieval_score: h.score };
            let score = reranker.score(&view, &cand)?;
            if !score.is_finite() {
                return Err(Error::input(format!("reranker gave non-finite score for `{}`", h.doc_id)));
            }
            Ok(ScoredHit { doc_id: h.doc_id.clone(), score })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(hit_order);
    Ok(out)
}

/// Top `retrieve_k` by the index, rescored and reordered by `reranker`.
pub fn retrieve_rerank(
    query: &PipelineQuery<'_>,
    index: &VectorIndex,
    docs: &dyn DocumentStore,
    reranker: &dyn Reranker,
    retrieve_k: usize,
) -> Result<Vec<ScoredHit>> {
    let hits = index.top_k(query.embedding, retrieve_k)?;
    rerank_hits(query.id, query.tokens, &hits, docs, reranker)
}

/// Which side of `margin * cos(q, positive)` is discarded during mining.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginSense {
    /// Drop candidates scoring above the threshold as probable false negatives.
    #[default]
    ExcludeAbove,
    /// Keep only candidates at or above the threshold.
    ExcludeBelow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub margin: f64,
    pub retrieve_k: usize,
    pub keep_n: usize,
    #[serde(default)]
    pub sense: MarginSense,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            retrieve_k: DEFAULT_RETRIEVE_K,
            keep_n: DEFAULT_KEEP_N,
            sense: MarginSense::ExcludeAbove,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.margin <= 1.0) {
            return Err(Error::config(format!("margin must lie in (0, 1], got {}", self.margin)));
        }
        if self.retrieve_k == 0 || self.keep_n > self.retrieve_k {
            return Err(Error::config(format!(
                "need 1 <= retrieve_k and keep_n <= retrieve_k, got {} / {}",
                self.retrieve_k, self.keep_n
            )));
        }
        Ok(())
    }
}

/// Hard negatives for one (query, positive) pair.
///
/// Retrieves `retrieve_k` candidates, drops the positive, filters against
/// `margin * cos(q, positive)` using retriever cosine, reranks the
/// survivors and keeps the best `keep_n`.
pub fn mine_hard_negatives(
    query: &PipelineQuery<'_>,
    positive_id: &str,
    index: &VectorIndex,
    docs: &dyn DocumentStore,
    reranker: &dyn Reranker,
    cfg: &MiningConfig,
) -> Result<Vec<String>> {
    cfg.validate()?;
    if index.get(positive_id).is_none() {
        return Err(Error::input(format!("positive `{positive_id}` is not in the index")));
    }
    let threshold = cfg.margin * index.score(query.embedding, positive_id)?;
    let survivors: Vec<ScoredHit> = index
        .top_k(query.embedding, cfg.retrieve_k)?
        .into_iter()
        .filter(|h| h.doc_id != positive_id)
        .filter(|h| match cfg.sense {
            MarginSense::ExcludeAbove => h.score <= threshold,
            MarginSense::ExcludeBelow => h.score >= threshold,
        })
        .collect();
    let mut ranked = rerank_hits(query.id, query.tokens, &survivors, docs, reranker)?;
    ranked.truncate(cfg.keep_n);
    Ok(ranked.into_iter().map(|h| h.doc_id).collect())
}

/// One line of a mined-negatives file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativesRecord {
    pub query_id: String,
    pub positive_id: String,
    pub negatives: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(angle_deg: f64) -> Embedding {
        let a = angle_deg.to_radians();
        Embedding::new(vec![a.cos(), a.sin()]).unwrap()
    }

    fn store(ids: &[&str]) -> HashMap<String, Vec<String>> {
        ids.iter().map(|id| (id.to_string(), vec![id.to_string()])).collect()
    }

    /// Index whose cosines to the query (at angle 0) are the given values.
    fn index_with_sims(sims: &[(&str, f64)]) -> VectorIndex {
        let mut idx = VectorIndex::new(2);
        for (id, s) in sims {
            idx.add(*id, unit(s.acos().to_degrees())).unwrap();
        }
        idx
    }

    #[test]
    fn margin_filter_hand_case() {
        let idx = index_with_sims(&[("pos", 0.80), ("a", 0.79), ("b", 0.77), ("c", 0.75), ("d", 0.50)]);
        let docs = store(&["pos", "a", "b", "c", "d"]);
        let q = unit(0.0);
        let pq = PipelineQuery { id: "q", embedding: &q, tokens: &[] };
        let got =
            mine_hard_negatives(&pq, "pos", &idx, &docs, &RetrievalScoreReranker, &MiningConfig::default()).unwrap();
        assert_eq!(got, ["c", "d"]);
    }

    #[test]
    fn margin_one_keeps_everything_below_positive() {
        let idx = index_with_sims(&[("pos", 0.9), ("a", 0.8), ("b", 0.1)]);
        let docs = store(&["pos", "a", "b"]);
        let q = unit(0.0);
        let pq = PipelineQuery { id: "q", embedding: &q, tokens: &[] };
        let cfg = MiningConfig { margin: 1.0, keep_n: 1, ..MiningConfig::default() };
        assert_eq!(mine_hard_negatives(&pq, "pos", &idx, &docs, &RetrievalScoreReranker, &cfg).unwrap(), ["a"]);
        let cfg = MiningConfig { margin: 1.0, ..MiningConfig::default() };
        assert_eq!(mine_hard_negatives(&pq, "pos", &idx, &docs, &RetrievalScoreReranker, &cfg).unwrap(), ["a", "b"]);
    }

    #[test]
    fn missing_positive_is_an_error() {
        let idx = index_with_sims(&[("a", 0.5)]);
        let q = unit(0.0);
        let pq = PipelineQuery { id: "q", embedding: &q, tokens: &[] };
        let r =
            mine_hard_negatives(&pq, "nope", &idx, &store(&["a"]), &RetrievalScoreReranker, &MiningConfig::default());
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn identity_rerank_keeps_order() {
        let idx = index_with_sims(&[("a", 0.9), ("b", 0.3), ("c", 0.6)]);
        let docs = store(&["a", "b", "c"]);
        let q = unit(0.0);
        let pq = PipelineQuery { id: "q", embedding: &q, tokens: &[] };
        let retrieved = idx.top_k(&q, 20).unwrap();
        let reranked = retrieve_rerank(&pq, &idx, &docs, &RetrievalScoreReranker, 20).unwrap();
        assert_eq!(retrieved, reranked);
    }

    #[test]
    fn oracle_lifts_planted_gold() {
        // retrieval order: d1 d2 gold d4 d5
        let idx = index_with_sims(&[("d1", 0.9), ("d2", 0.8), ("gold", 0.7), ("d4", 0.6), ("d5", 0.5)]);
        let docs = store(&["d1", "d2", "gold", "d4", "d5"]);
        let q = unit(0.0);
        let retrieved = idx.top_k(&q, 5).unwrap();
        assert_eq!(retrieved[2].doc_id, "gold");
        let qrels = Qrels::from_triples([("q", "gold", 1)]);
        let pq = PipelineQuery { id: "q", embedding: &q, tokens: &[] };
        let out = retrieve_rerank(&pq, &idx, &docs, &OracleReranker::new(qrels), 20).unwrap();
        assert_eq!(out[0].doc_id, "gold");
    }

    #[test]
    fn overlap_reranker_counts_occurrences() {
        let q: Vec<String> = ["a", "b", "a", "z"].iter().map(|s| s.to_string()).collect();
        let d: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let s = OverlapReranker
            .score(&QueryView { id: "q", tokens: &q }, &Candidate { id: "d", tokens: &d, retrieval_score: 0.0 })
            .unwrap();
        assert_eq!(s, 3.0);
    }

    #[test]
    fn rerank_truncates_query_to_64_tokens() {
        let q: Vec<String> = (0..100).map(|i| format!("t{i}")).collect();
        let docs: HashMap<String, Vec<String>> = [("d".to_string(), q.clone())].into_iter().collect();
        let hits = vec![ScoredHit { doc_id: "d".into(), score: 0.1 }];
        let out = rerank_hits("q", &q, &hits, &docs, &OverlapReranker).unwrap();
        assert_eq!(out[0].score, 64.0);
    }
}
