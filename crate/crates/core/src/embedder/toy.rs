use sha2::{Digest, Sha256};

use super::{finish_vector, Embedder};
use crate::corpus::{Tokenizer, WhitespaceTokenizer};
use crate::error::{Error, Result};
use crate::math::Embedding;

/// Deterministic bag-of-tokens embedder.
///
/// Each token is hashed with the seed into a bucket and a sign; the signed
/// counts are L2-normalised. Fully determined by `(dim, seed)`.
#[derive(Debug, Clone)]
pub struct ToyEmbedder {
    dim: usize,
    seed: u64,
    tokenizer: WhitespaceTokenizer,
}

impl ToyEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("embedding dim must be > 0"));
        }
        Ok(Self { dim, seed, tokenizer: WhitespaceTokenizer::default() })
    }

    /// Bucket index and sign for one token.
    pub fn slot(&self, token: &str) -> (usize, f64) {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(token.as_bytes());
        let digest = h.finalize();
        let mut word = [0u8; 8];
        word.copy_from_slice(&digest[..8]);
        let x = u64::from_le_bytes(word);
        let bucket = (x % self.dim as u64) as usize;
        let sign = if x >> 63 == 0 { 1.0 } else { -1.0 };
        (bucket, sign)
    }

    pub fn embed_text(&self, text: &str) -> Result<Embedding> {
        let mut v = vec![0.0; self.dim];
        let tokens = self.tokenizer.tokenize(text);
        if tokens.is_empty() {
            let (b, s) = self.slot("");
            v[b] = s;
        }
        for tok in &tokens {
            let (b, s) = self.slot(tok);
            v[b] += s;
        }
        if v.iter().all(|&x| x == 0.0) {
            // every token cancelled out in shared buckets
            let (b, s) = self.slot(text);
            v[b] = s;
        }
        finish_vector(v)
    }
}

impl Embedder for ToyEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        texts.iter().map(|t| self.embed_text(t)).collect()
    }
}
