//! Seeded synthetic corpora: length-matched documents for throughput runs
//! and a planted-relevance corpus for end-to-end retrieval checks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Query};
use crate::error::{Error, Result};
use crate::metrics::Qrels;

/// Character statistics of a technical-documentation corpus.
pub const DOC_MEAN_CHARS: f64 = 6393.0;
pub const DOC_MIN_CHARS: usize = 10;
pub const DOC_MAX_CHARS: usize = 475_001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LengthDistribution {
    Fixed {
        chars: usize,
    },
    Uniform {
        min: usize,
        max: usize,
    },
    /// Log-normal lengths rescaled so the sample mean matches `mean`.
    LogNormal {
        mean: f64,
        sigma: f64,
        min: usize,
        max: usize,
    },
}

impl Default for LengthDistribution {
    fn default() -> Self {
        LengthDistribution::LogNormal { mean: DOC_MEAN_CHARS, sigma: 1.0, min: DOC_MIN_CHARS, max: DOC_MAX_CHARS }
    }
}

fn sample_lengths(n: usize, dist: &LengthDistribution, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    Ok(match *dist {
        LengthDistribution::Fixed { chars } => vec![chars; n],
        LengthDistribution::Uniform { min, max } => {
            if min > max {
                return Err(Error::config("uniform length range is empty"));
            }
            (0..n).map(|_| rng.random_range(min..=max)).collect()
        }
        LengthDistribution::LogNormal { mean, sigma, min, max } => {
            if !(mean > 0.0 && sigma > 0.0 && min <= max && (min as f64) <= mean && mean <= max as f64) {
                return Err(Error::config("log-normal length parameters are inconsistent"));
            }
            let mu = mean.ln() - sigma * sigma / 2.0;
            let ln = LogNormal::new(mu, sigma).map_err(|e| Error::config(e.to_string()))?;
            let raw: Vec<f64> = (0..n).map(|_| ln.sample(rng)).collect();
            let clamp = |x: f64| (x.round() as usize).clamp(min, max);
            // clamping shifts the mean; a few multiplicative corrections bring it back
            let mut scale = 1.0;
            let mut lengths: Vec<usize> = raw.iter().map(|&x| clamp(x)).collect();
            for _ in 0..32 {
                let m = lengths.iter().sum::<usize>() as f64 / n as f64;
                if (m / mean - 1.0).abs() < 1e-3 {
                    break;
                }
                scale *= mean / m;
                lengths = raw.iter().map(|&x| clamp(x * scale)).collect();
            }
            lengths
        }
    })
}

fn random_word(rng: &mut ChaCha8Rng) -> String {
    const LETTERS: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
    let len = rng.random_range(2..=9);
    (0..len).map(|_| LETTERS[rng.random_range(0..LETTERS.len())] as char).collect()
}

/// `n_docs` documents of random lowercase words with exact character lengths.
pub fn synth_corpus(n_docs: usize, lengths: &LengthDistribution, seed: u64) -> Result<Vec<Document>> {
    if n_docs == 0 {
        return Err(Error::input("n_docs must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lens = sample_lengths(n_docs, lengths, &mut rng)?;
    let vocab: Vec<String> = (0..4096).map(|_| random_word(&mut rng)).collect();
    let width = n_docs.to_string().len();
    Ok(lens
        .into_iter()
        .enumerate()
        .map(|(i, len)| {
            let mut text = String::with_capacity(len + 10);
            while text.len() < len {
                if !text.is_empty() {
                    text.push(' ');
                }
                // skewed word choice so frequent words dominate, as in real text
                let r: f64 = rng.random();
                text.push_str(&vocab[((r * r) * vocab.len() as f64) as usize]);
            }
            text.truncate(len);
            Document { id: format!("doc-{i:0width$}"), text }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCorpus {
    pub documents: Vec<Document>,
    pub queries: Vec<Query>,
    pub qrels: Qrels,
}

/// Corpus with known relevance.
///
/// Every query is three topic words. Each query gets a grade-2 document
/// holding all three among filler, a grade-1 document holding two, and two
/// unjudged lures that repeat a single topic word. The lures beat the gold
/// documents under bag-of-words cosine, so first-stage retrieval is
/// imperfect while the judgments stay unambiguous.
pub fn planted_relevance(n_docs: usize, n_queries: usize, seed: u64) -> Result<PlantedCorpus> {
    if n_queries == 0 || n_docs < 4 * n_queries {
        return Err(Error::input(format!("need n_queries >= 1 and n_docs >= 4 * n_queries, got {n_docs}/{n_queries}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<String> = (0..2000).map(|i| format!("n{i}")).collect();
    let filler = |rng: &mut ChaCha8Rng, k: usize| -> Vec<String> {
        (0..k).map(|_| noise[rng.random_range(0..noise.len())].clone()).collect()
    };

    // (text, query index, grade)
    let mut bodies: Vec<(String, Option<(usize, u32)>)> = Vec::with_capacity(n_docs);
    let mut queries = Vec::with_capacity(n_queries);
    for q in 0..n_queries {
        let topic: Vec<String> = (0..3).map(|j| format!("t{q}x{j}")).collect();
        queries.push(Query { id: format!("q{q:03}"), text: topic.join(" "), task_definition: None });

        let mut strong = filler(&mut rng, 25);
        strong.extend(topic.iter().cloned());
        strong.shuffle(&mut rng);
        bodies.push((strong.join(" "), Some((q, 2))));

        let mut weak = filler(&mut rng, 25);
        weak.extend(topic[..2].iter().cloned());
        weak.shuffle(&mut rng);
        bodies.push((weak.join(" "), Some((q, 1))));

        for word in &topic[..2] {
            let mut words = filler(&mut rng, 4);
            words.extend(std::iter::repeat_n(word.clone(), 6));
            words.shuffle(&mut rng);
            bodies.push((words.join(" "), None));
        }
    }
    while bodies.len() < n_docs {
        let words = filler(&mut rng, 28);
        bodies.push((words.join(" "), None));
    }
    bodies.shuffle(&mut rng);

    let mut qrels = Qrels::new();
    let documents = bodies
        .into_iter()
        .enumerate()
        .map(|(i, (text, judged))| {
            let id = format!("d{i:04}");
            if let Some((q, grade)) = judged {
                qrels.insert(&queries[q].id, &id, grade);
            }
            Document { id, text }
        })
        .collect();
    Ok(PlantedCorpus { documents, queries, qrels })
}
