//! Retrieval metrics over run files and graded relevance judgments.
//!
//! File formats (whitespace separated, one record per line, blank lines
//! ignored):
//!
//! ```text
//! qrels: query_id iteration doc_id grade
//! run:   query_id doc_id rank score tag
//! ```
//!
//! A document is relevant when its grade is > 0. Queries without any
//! relevant document are left out of every mean, as are run queries that
//! have no judgments; both counts are reported. A judged query missing from
//! the run scores 0.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::ScoredHit;

pub const DEFAULT_NDCG_K: usize = 10;
pub const DEFAULT_RECALL_K: usize = 5;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_triples<'a>(triples: impl IntoIterator<Item = (&'a str, &'a str, u32)>) -> Self {
        let mut q = Self::new();
        for (qid, did, g) in triples {
            q.insert(qid, did, g);
        }
        q
    }

    pub fn insert(&mut self, query_id: &str, doc_id: &str, grade: u32) {
        self.judgments.entry(query_id.to_string()).or_default().insert(doc_id.to_string(), grade);
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.judgments.get(query_id).and_then(|m| m.get(doc_id)).copied().unwrap_or(0)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn judged(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query_id)
    }

    /// Doc ids with grade > 0 for a query, in id order.
    pub fn relevant(&self, query_id: &str) -> Vec<&str> {
        self.judgments
            .get(query_id)
            .map(|m| m.iter().filter(|(_, &g)| g > 0).map(|(d, _)| d.as_str()).collect())
            .unwrap_or_default()
    }

    pub fn parse(reader: impl Read) -> Result<Self> {
        let mut q = Self::new();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let [qid, _iter, did, grade] = fields[..] else {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 4 fields, got {}", fields.len()),
                });
            };
            let grade: u32 =
                grade.parse().map_err(|_| Error::Parse { line: line_no, message: format!("bad grade `{grade}`") })?;
            if q.judged(qid).is_some_and(|m| m.contains_key(did)) {
                return Err(Error::Parse { line: line_no, message: format!("duplicate judgment {qid}/{did}") });
            }
            q.insert(qid, did, grade);
        }
        Ok(q)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(std::fs::File::open(path)?)
    }

    pub fn to_trec_string(&self) -> String {
        let mut s = String::new();
        for (qid, docs) in &self.judgments {
            for (did, g) in docs {
                let _ = writeln!(s, "{qid} 0 {did} {g}");
            }
        }
        s
    }
}

/// Ranked results per query; each list is in rank order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunFile {
    rankings: BTreeMap<String, Vec<ScoredHit>>,
}

impl RunFile {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a ranking; doc ids must be unique and scores non-increasing.
    pub fn insert(&mut self, query_id: &str, hits: Vec<ScoredHit>) -> Result<()> {
        check_ranking(query_id, &hits)?;
        self.rankings.insert(query_id.to_string(), hits);
        Ok(())
    }

    pub fn get(&self, query_id: &str) -> Option<&[ScoredHit]> {
        self.rankings.get(query_id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[ScoredHit])> {
        self.rankings.iter().map(|(q, h)| (q.as_str(), h.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.rankings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rankings.is_empty()
    }

    pub fn parse(reader: impl Read) -> Result<Self> {
        let mut rows: BTreeMap<String, Vec<(usize, usize, ScoredHit)>> = BTreeMap::new();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let [qid, did, rank, score, _tag] = fields[..] else {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 5 fields, got {}", fields.len()),
                });
            };
            let rank: usize =
                rank.parse().map_err(|_| Error::Parse { line: line_no, message: format!("bad rank `{rank}`") })?;
            let score: f64 = score
                .parse()
                .ok()
                .filter(|s: &f64| s.is_finite())
                .ok_or_else(|| Error::Parse { line: line_no, message: format!("bad score `{score}`") })?;
            rows.entry(qid.to_string()).or_default().push((
                rank,
                line_no,
                ScoredHit { doc_id: did.to_string(), score },
            ));
        }
        let mut run = Self::new();
        for (qid, mut hits) in rows {
            hits.sort_by_key(|(rank, _, _)| *rank);
            for pair in hits.windows(2) {
                if pair[0].0 == pair[1].0 {
                    return Err(Error::Parse {
                        line: pair[1].1,
                        message: format!("repeated rank {} for {qid}", pair[1].0),
                    });
                }
            }
            let line_of_first = hits.first().map_or(0, |h| h.1);
            let ranking = hits.into_iter().map(|(_, _, h)| h).collect();
            run.insert(&qid, ranking).map_err(|e| Error::Parse { line: line_of_first, message: e.to_string() })?;
        }
        Ok(run)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(std::fs::File::open(path)?)
    }

    /// Serialises in query-id order with 1-based ranks. Scores use the
    /// shortest representation that parses back to the same `f64`.
    pub fn to_trec_string(&self, tag: &str) -> String {
        let mut s = String::new();
        for (qid, hits) in &self.rankings {
            for (i, h) in hits.iter().enumerate() {
                let _ = writeln!(s, "{qid} {} {} {} {tag}", h.doc_id, i + 1, h.score);
            }
        }
        s
    }
}

fn check_ranking(query_id: &str, hits: &[ScoredHit]) -> Result<()> {
    let mut seen = HashSet::with_capacity(hits.len());
    for h in hits {
        if !seen.insert(h.doc_id.as_str()) {
            return Err(Error::input(format!("query {query_id}: doc `{}` ranked twice", h.doc_id)));
        }
    }
    if hits.windows(2).any(|w| w[1].score > w[0].score) {
        return Err(Error::input(format!("query {query_id}: scores increase down the ranking")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub k: usize,
    pub mean: f64,
    pub per_query: BTreeMap<String, f64>,
    /// Judged queries with no relevant documents.
    pub skipped_no_relevant: usize,
    /// Run queries that have no judgments at all.
    pub skipped_unjudged: usize,
}

fn evaluate(
    name: &str,
    k: usize,
    run: &RunFile,
    qrels: &Qrels,
    per_query: impl Fn(&[ScoredHit], &BTreeMap<String, u32>) -> f64,
) -> Result<MetricReport> {
    if k == 0 {
        return Err(Error::input("cutoff k must be >= 1"));
    }
    let mut scores = BTreeMap::new();
    let mut skipped_no_relevant = 0;
    for (qid, judged) in &qrels.judgments {
        if !judged.values().any(|&g| g > 0) {
            skipped_no_relevant += 1;
            continue;
        }
        let ranking = run.get(qid).unwrap_or(&[]);
        let top = &ranking[..ranking.len().min(k)];
        scores.insert(qid.clone(), per_query(top, judged));
    }
    let skipped_unjudged = run.rankings.keys().filter(|q| !qrels.judgments.contains_key(*q)).count();
    let mean = if scores.is_empty() { 0.0 } else { scores.values().sum::<f64>() / scores.len() as f64 };
    Ok(MetricReport { metric: name.to_string(), k, mean, per_query: scores, skipped_no_relevant, skipped_unjudged })
}

pub fn gain(grade: u32) -> f64 {
    2f64.powi(grade as i32) - 1.0
}

/// `sum_r gain(rel_r) / log2(r + 1)` over the given ranked grades (r is 1-based).
pub fn dcg(grades: impl IntoIterator<Item = u32>) -> f64 {
    grades.into_iter().enumerate().map(|(i, g)| gain(g) / ((i + 2) as f64).log2()).sum()
}

pub fn ndcg_at_k(run: &RunFile, qrels: &Qrels, k: usize) -> Result<MetricReport> {
    evaluate(&format!("ndcg@{k}"), k, run, qrels, |top, judged| {
        let actual = dcg(top.iter().map(|h| judged.get(&h.doc_id).copied().unwrap_or(0)));
        let mut ideal: Vec<u32> = judged.values().copied().collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        ideal.truncate(k);
        actual / dcg(ideal)
    })
}

pub fn recall_at_k(run: &RunFile, qrels: &Qrels, k: usize) -> Result<MetricReport> {
    evaluate(&format!("recall@{k}"), k, run, qrels, |top, judged| {
        let relevant = judged.values().filter(|&&g| g > 0).count();
        let hit = top.iter().filter(|h| judged.get(&h.doc_id).is_some_and(|&g| g > 0)).count();
        hit as f64 / relevant as f64
    })
}

pub fn match_at_k(run: &RunFile, qrels: &Qrels, k: usize) -> Result<MetricReport> {
    evaluate(&format!("match@{k}"), k, run, qrels, |top, judged| {
        let any = top.iter().any(|h| judged.get(&h.doc_id).is_some_and(|&g| g > 0));
        if any {
            1.0
        } else {
            0.0
        }
    })
}

pub fn accuracy_at_1(run: &RunFile, qrels: &Qrels) -> Result<MetricReport> {
    let mut r = match_at_k(run, qrels, 1)?;
    r.metric = "accuracy@1".to_string();
    Ok(r)
}

/// The standard metric bundle printed by `densekit eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub queries_evaluated: usize,
    pub metrics: Vec<MetricReport>,
}

pub fn evaluate_all(run: &RunFile, qrels: &Qrels, ndcg_k: usize, recall_k: usize) -> Result<EvalReport> {
    let metrics = vec![
        ndcg_at_k(run, qrels, ndcg_k)?,
        recall_at_k(run, qrels, recall_k)?,
        match_at_k(run, qrels, recall_k)?,
        accuracy_at_1(run, qrels)?,
    ];
    Ok(EvalReport { queries_evaluated: metrics[0].per_query.len(), metrics })
}
