//! Independent oracles shared by the integration and acceptance suites.
//! Nothing here calls into the code paths it is used to check.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-2 {
            return v;
        }
    }
}

/// Central-difference gradient of `f` at `x`.
pub fn central_diff(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `max|a - b| / max(max|a|, max|b|)`, with a floor on the denominator.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = analytic.iter().chain(numeric).map(|v| v.abs()).fold(0.0, f64::max);
    diff / scale.max(1e-8)
}

/// Plain cosine, written out directly.
pub fn cos(a: &[f64], b: &[f64]) -> f64 {
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    ab / (aa.sqrt() * bb.sqrt())
}

/// Contrastive loss evaluated term by term from the definition.
pub fn contrastive_reference(
    queries: &[Vec<f64>],
    passages: &[Vec<Vec<f64>>],
    tau: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
) -> f64 {
    let n = queries.len();
    let s = |a: &[f64], b: &[f64]| cos(a, b) / tau;
    let mut total = 0.0;
    for i in 0..n {
        let q = &queries[i];
        let p = &passages[i];
        let pos = s(q, &p[0]).exp();
        let mut z = pos;
        for neg in &p[1..] {
            z += alpha * s(q, neg).exp();
        }
        for (j, other) in queries.iter().enumerate() {
            if j != i {
                z += beta * s(q, other).exp();
            }
        }
        for neg in &p[1..] {
            z += gamma * s(&p[0], neg).exp();
        }
        total += -(pos / z).ln();
    }
    total / n as f64
}

/// All permutations of `0..n` (Heap's algorithm).
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn heap(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        heap(k - 1, a, out);
        for i in 0..k - 1 {
            if k.is_multiple_of(2) {
                a.swap(i, k - 1)
            } else {
                a.swap(0, k - 1)
            }
            heap(k - 1, a, out);
        }
    }
    let mut a: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    heap(n, &mut a, &mut out);
    out
}

/// Literal step-wise listwise loss with weights 2^(n-i) - 1.
pub fn plistmle_reference(z: &[f64], y: &[usize]) -> f64 {
    let n = z.len();
    (0..n)
        .map(|i| {
            let w = 2f64.powi((n - 1 - i) as i32) - 1.0;
            let denom: f64 = y[i..].iter().map(|&k| z[k].exp()).sum();
            w * (-z[y[i]] + denom.ln())
        })
        .sum()
}

/// NDCG@k for one ranked list of grades, normalised by the best DCG over
/// every ordering of the judged grades (exhaustive, so keep n small).
pub fn ndcg_exhaustive(ranked_grades: &[u32], judged_grades: &[u32], k: usize) -> f64 {
    let dcg = |g: &[u32]| -> f64 {
        g.iter().take(k).enumerate().map(|(r, &rel)| (2f64.powi(rel as i32) - 1.0) / ((r + 2) as f64).log2()).sum()
    };
    let best = permutations(judged_grades.len())
        .into_iter()
        .map(|p| dcg(&p.iter().map(|&i| judged_grades[i]).collect::<Vec<_>>()))
        .fold(0.0, f64::max);
    dcg(ranked_grades) / best
}

/// Naive top-k: score everything, sort everything.
pub fn naive_top_k(corpus: &[(String, Vec<f64>)], q: &[f64], k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = corpus.iter().map(|(id, v)| (id.clone(), cos(q, v))).collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Sliding-window spans computed by walking token by token.
pub fn chunk_oracle(n: usize, size: usize, overlap: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let stride = size - overlap;
    let mut start = 0usize;
    loop {
        let mut end = start;
        while end < n && end - start < size {
            end += 1;
        }
        out.push((start, end));
        if end >= n {
            return out;
        }
        start += stride;
    }
}
