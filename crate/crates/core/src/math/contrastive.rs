use serde::{Deserialize, Serialize};

use super::{
    accumulate_cosine_grad, check_temperature, cosine_similarity, weighted_log_sum_exp, Embedding, LossResult,
};
use crate::error::{Error, Result};

/// Temperature and partition-term weights of the contrastive objective.
///
/// `alpha` weights query/negative terms, `beta` query/other-query terms and
/// `gamma` positive/negative terms in each query's partition function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    pub tau: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self { tau: 0.05, alpha: 1.0, beta: 1.0, gamma: 1.0 }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        check_temperature(self.tau, "tau")?;
        for (name, w) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::config(format!("{name} must be finite and >= 0, got {w}")));
            }
        }
        Ok(())
    }
}

/// Queries and their candidate passages. `passages[i][0]` is the positive
/// for `queries[i]`; the rest are negatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingBatch {
    queries: Vec<Embedding>,
    passages: Vec<Vec<Embedding>>,
}

impl TrainingBatch {
    pub fn new(queries: Vec<Embedding>, passages: Vec<Vec<Embedding>>) -> Result<Self> {
        if queries.is_empty() {
            return Err(Error::input("empty batch"));
        }
        if queries.len() != passages.len() {
            return Err(Error::input(format!("{} queries but {} passage lists", queries.len(), passages.len())));
        }
        let dim = queries[0].dim();
        for (i, list) in passages.iter().enumerate() {
            if list.is_empty() {
                return Err(Error::input(format!("query {i} has no passages")));
            }
        }
        let all = queries.iter().chain(passages.iter().flatten());
        if let Some(bad) = all.map(Embedding::dim).find(|&d| d != dim) {
            return Err(Error::input(format!("mixed embedding dims {dim} and {bad}")));
        }
        Ok(Self { queries, passages })
    }

    pub fn queries(&self) -> &[Embedding] {
        &self.queries
    }

    pub fn passages(&self) -> &[Vec<Embedding>] {
        &self.passages
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

/// Gradient of the contrastive loss, shaped like the batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveGrad {
    pub queries: Vec<Vec<f64>>,
    pub passages: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Copy)]
enum Slot {
    Query(usize),
    Passage(usize, usize),
}

struct Term {
    weight: f64,
    score: f64,
    a: Slot,
    b: Slot,
}

fn embedding_at(batch: &TrainingBatch, slot: Slot) -> &Embedding {
    match slot {
        Slot::Query(i) => &batch.queries[i],
        Slot::Passage(i, j) => &batch.passages[i][j],
    }
}

/// Partition terms for query `i`; the first term is always the positive.
fn partition_terms(batch: &TrainingBatch, cfg: &ContrastiveConfig, i: usize) -> Result<Vec<Term>> {
    let mut terms = Vec::new();
    let mut push = |weight: f64, a: Slot, b: Slot| -> Result<()> {
        if weight > 0.0 {
            let score = cosine_similarity(embedding_at(batch, a), embedding_at(batch, b))? / cfg.tau;
            terms.push(Term { weight, score, a, b });
        }
        Ok(())
    };
    push(1.0, Slot::Query(i), Slot::Passage(i, 0))?;
    let negatives = batch.passages[i].len();
    for j in 1..negatives {
        push(cfg.alpha, Slot::Query(i), Slot::Passage(i, j))?;
    }
    for other in (0..batch.len()).filter(|&o| o != i) {
        push(cfg.beta, Slot::Query(i), Slot::Query(other))?;
    }
    for j in 1..negatives {
        push(cfg.gamma, Slot::Passage(i, 0), Slot::Passage(i, j))?;
    }
    Ok(terms)
}

fn query_loss(terms: &[Term]) -> (f64, f64) {
    let pairs: Vec<(f64, f64)> = terms.iter().map(|t| (t.weight, t.score)).collect();
    let log_z = weighted_log_sum_exp(&pairs);
    (log_z - terms[0].score, log_z)
}

/// Per-query contrastive losses `-log(exp(s(q_i, p_i0)) / Z_i)`.
pub fn contrastive_per_query(batch: &TrainingBatch, cfg: &ContrastiveConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    (0..batch.len()).map(|i| partition_terms(batch, cfg, i).map(|t| query_loss(&t).0)).collect()
}

/// Mean contrastive loss over the batch, with gradients for every query and
/// passage embedding.
///
/// `Z_i` sums the positive term, `alpha`-weighted query/negative terms,
/// `beta`-weighted terms against every other query in the batch and
/// `gamma`-weighted positive/negative terms, all on `cos / tau`.
pub fn contrastive_loss(batch: &TrainingBatch, cfg: &ContrastiveConfig) -> Result<LossResult<ContrastiveGrad>> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::input("empty batch"));
    }
    let n = batch.len() as f64;
    let mut grad = ContrastiveGrad {
        queries: batch.queries.iter().map(|q| vec![0.0; q.dim()]).collect(),
        passages: batch.passages.iter().map(|list| list.iter().map(|p| vec![0.0; p.dim()]).collect()).collect(),
    };
    let mut total = 0.0;
    for i in 0..batch.len() {
        let terms = partition_terms(batch, cfg, i)?;
        let (loss, log_z) = query_loss(&terms);
        total += loss;
        for (t, term) in terms.iter().enumerate() {
            let mut d_score = term.weight * (term.score - log_z).exp();
            if t == 0 {
                d_score -= 1.0;
            }
            let d_cos = d_score / (n * cfg.tau);
            if d_cos == 0.0 {
                continue;
            }
            let a = embedding_at(batch, term.a).values();
            let b = embedding_at(batch, term.b).values();
            accumulate_cosine_grad(a, b, d_cos, grad_slot(&mut grad, term.a));
            accumulate_cosine_grad(b, a, d_cos, grad_slot(&mut grad, term.b));
        }
    }
    Ok(LossResult { value: total / n, grad })
}

fn grad_slot(grad: &mut ContrastiveGrad, slot: Slot) -> &mut [f64] {
    match slot {
        Slot::Query(i) => &mut grad.queries[i],
        Slot::Passage(i, j) => &mut grad.passages[i][j],
    }
}
