//! Exact in-memory vector store with full-scan top-k cosine retrieval.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedder::{finish_vector, read_cache, write_cache};
use crate::error::{Error, Result};
use crate::math::{cosine_from_parts, dot, Embedding};

const SHARD_ROWS: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub doc_id: String,
    pub score: f64,
}

/// Descending score, then ascending doc id.
pub fn hit_order(a: &ScoredHit, b: &ScoredHit) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id))
}

/// Heap entry where "greater" means "ranks earlier".
struct Ranked<'a> {
    score: f64,
    id: &'a str,
}

impl Ord for Ranked<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score.total_cmp(&other.score).then_with(|| other.id.cmp(self.id))
    }
}

impl PartialOrd for Ranked<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Ranked<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked<'_> {}

/// Cache id of chunk `chunk_index` of `doc_id`.
pub fn chunk_key(doc_id: &str, chunk_index: usize) -> String {
    format!("{doc_id}#{chunk_index}")
}

/// Groups chunk vectors (ids from [`chunk_key`]) by document and mean-pools
/// each group into one unit vector. Documents keep first-appearance order.
pub fn pool_chunks(ids: &[String], vectors: &[Embedding]) -> Result<(Vec<String>, Vec<Embedding>)> {
    if ids.len() != vectors.len() {
        return Err(Error::input(format!("{} ids vs {} vectors", ids.len(), vectors.len())));
    }
    let mut order: Vec<String> = Vec::new();
    let mut sums: HashMap<String, Vec<f64>> = HashMap::new();
    for (id, v) in ids.iter().zip(vectors) {
        let doc = match id.rsplit_once('#') {
            Some((doc, idx)) if !doc.is_empty() && idx.parse::<usize>().is_ok() => doc,
            _ => return Err(Error::input(format!("`{id}` is not a chunk id (expected doc#index)"))),
        };
        let sum = sums.entry(doc.to_string()).or_insert_with(|| {
            order.push(doc.to_string());
            vec![0.0; v.dim()]
        });
        if sum.len() != v.dim() {
            return Err(Error::input(format!("`{id}` has dim {}, expected {}", v.dim(), sum.len())));
        }
        for (s, x) in sum.iter_mut().zip(v.values()) {
            *s += x;
        }
    }
    let pooled =
        order.iter().map(|doc| finish_vector(sums.remove(doc).unwrap_or_default())).collect::<Result<Vec<_>>>()?;
    Ok((order, pooled))
}

#[derive(Debug, Clone, Default)]
pub struct VectorIndex {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<Embedding>,
    sq_norms: Vec<f64>,
    positions: HashMap<String, usize>,
}

impl VectorIndex {
    pub fn new(dim: usize) -> Self {
        Self { dim, ..Self::default() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, id: &str) -> Option<&Embedding> {
        self.positions.get(id).map(|&i| &self.vectors[i])
    }

    pub fn add(&mut self, id: impl Into<String>, embedding: Embedding) -> Result<()> {
        let id = id.into();
        if embedding.dim() != self.dim {
            return Err(Error::input(format!(
                "embedding dim {} does not match index dim {}",
                embedding.dim(),
                self.dim
            )));
        }
        if self.positions.contains_key(&id) {
            return Err(Error::input(format!("duplicate id `{id}`")));
        }
        let sq = dot(embedding.values(), embedding.values());
        if sq == 0.0 {
            return Err(Error::input(format!("zero vector for `{id}`")));
        }
        self.positions.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.vectors.push(embedding);
        self.sq_norms.push(sq);
        Ok(())
    }

    /// Cosine between `query` and the stored vector for `id`.
    pub fn score(&self, query: &Embedding, id: &str) -> Result<f64> {
        let &i = self.positions.get(id).ok_or_else(|| Error::input(format!("unknown id `{id}`")))?;
        let qq = self.check_query(query)?;
        Ok(cosine_from_parts(dot(query.values(), self.vectors[i].values()), qq, self.sq_norms[i]))
    }

    fn check_query(&self, query: &Embedding) -> Result<f64> {
        if query.dim() != self.dim {
            return Err(Error::input(format!("query dim {} does not match index dim {}", query.dim(), self.dim)));
        }
        let qq = dot(query.values(), query.values());
        if qq == 0.0 {
            return Err(Error::input("zero-norm query"));
        }
        Ok(qq)
    }

    fn scan(&self, range: std::ops::Range<usize>, q: &[f64], qq: f64, k: usize) -> Vec<Ranked<'_>> {
        let mut heap: BinaryHeap<Reverse<Ranked<'_>>> = BinaryHeap::with_capacity(k + 1);
        for i in range {
            let score = cosine_from_parts(dot(q, self.vectors[i].values()), qq, self.sq_norms[i]);
            let cand = Ranked { score, id: &self.ids[i] };
            if heap.len() < k {
                heap.push(Reverse(cand));
            } else if let Some(Reverse(worst)) = heap.peek() {
                if cand > *worst {
                    heap.pop();
                    heap.push(Reverse(cand));
                }
            }
        }
        heap.into_iter().map(|Reverse(r)| r).collect()
    }

    /// Exact top-`k` by cosine, ties broken by ascending id.
    pub fn top_k(&self, query: &Embedding, k: usize) -> Result<Vec<ScoredHit>> {
        if k == 0 {
            return Err(Error::input("k must be >= 1"));
        }
        if self.is_empty() {
            return Ok(Vec::new());
        }
        let qq = self.check_query(query)?;
        let q = query.values();
        let k = k.min(self.len());
        let shards: Vec<std::ops::Range<usize>> =
            (0..self.len()).step_by(SHARD_ROWS).map(|s| s..(s + SHARD_ROWS).min(self.len())).collect();
        let mut cands: Vec<Ranked<'_>> = if shards.len() > 1 {
            shards.into_par_iter().flat_map_iter(|r| self.scan(r, q, qq, k)).collect()
        } else {
            self.scan(0..self.len(), q, qq, k)
        };
        cands.sort_unstable_by(|a, b| b.cmp(a));
        cands.truncate(k);
        Ok(cands.into_iter().map(|r| ScoredHit { doc_id: r.id.to_string(), score: r.score }).collect())
    }

    /// Runs [`VectorIndex::top_k`] for each query on `workers` threads.
    pub fn top_k_batch(&self, queries: &[Embedding], k: usize, workers: usize) -> Result<Vec<Vec<ScoredHit>>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?;
        pool.install(|| queries.par_iter().map(|q| self.top_k(q, k)).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_cache(path, &self.ids, &self.vectors)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (ids, vectors) = read_cache(path)?;
        Self::from_parts(ids, vectors)
    }

    pub fn from_parts(ids: Vec<String>, vectors: Vec<Embedding>) -> Result<Self> {
        let dim = vectors.first().map_or(0, Embedding::dim);
        let mut index = Self::new(dim);
        for (id, v) in ids.into_iter().zip(vectors) {
            index.add(id, v)?;
        }
        Ok(index)
    }
}
