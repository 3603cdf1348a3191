//! Embedding providers.
//!
//! Every provider returns L2-normalised vectors whose values are exactly
//! representable as `f32`, so anything an embedder produces can go through
//! the on-disk cache without loss.

mod cache;
mod remote;
mod toy;

pub use cache::{
    read_cache, read_cache_bytes, write_cache, write_cache_bytes, CachedEmbedder, CACHE_MAGIC, CACHE_VERSION,
};
pub use remote::{RemoteConfig, RemoteEmbedder, API_KEY_ENV, DEFAULT_REMOTE_BATCH};
pub use toy::ToyEmbedder;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Embedding;

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    /// One embedding per input text, in order.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>>;
}

impl<E: Embedder + ?Sized> Embedder for Box<E> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        (**self).embed_batch(texts)
    }
}

impl<E: Embedder + ?Sized> Embedder for &E {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        (**self).embed_batch(texts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbedderSpec {
    Toy { dim: usize, seed: u64 },
    Remote(RemoteConfig),
    Cached { path: PathBuf, inner: Option<Box<EmbedderSpec>> },
}

impl EmbedderSpec {
    pub fn dim(&self) -> Option<usize> {
        match self {
            EmbedderSpec::Toy { dim, .. } => Some(*dim),
            EmbedderSpec::Remote(cfg) => Some(cfg.dim),
            EmbedderSpec::Cached { inner, .. } => inner.as_ref().and_then(|i| i.dim()),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Embedder>> {
        Ok(match self {
            EmbedderSpec::Toy { dim, seed } => Box::new(ToyEmbedder::new(*dim, *seed)?),
            EmbedderSpec::Remote(cfg) => Box::new(RemoteEmbedder::new(cfg.clone())?),
            EmbedderSpec::Cached { path, inner } => {
                let inner = inner.as_ref().map(|s| s.build()).transpose()?;
                Box::new(CachedEmbedder::open(path.clone(), inner)?)
            }
        })
    }
}

/// Builds the embedder described by `spec` and embeds `texts`.
pub fn embed_batch(texts: &[String], spec: &EmbedderSpec) -> Result<Vec<Embedding>> {
    if texts.is_empty() {
        return Err(Error::input("no texts to embed"));
    }
    spec.build()?.embed_batch(texts)
}

/// Normalises to unit length and rounds every value through `f32`.
pub(crate) fn finish_vector(mut v: Vec<f64>) -> Result<Embedding> {
    let n = crate::math::norm(&v);
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::Protocol("embedding has zero or non-finite norm".into()));
    }
    for x in &mut v {
        *x = f64::from((*x / n) as f32);
    }
    Embedding::new(v)
}
