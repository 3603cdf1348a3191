//! Dense retrieval toolkit: contrastive, distillation and listwise ranking
//! losses with closed-form gradients, table-aware masked-autoencoder
//! pretraining inputs, rotary position tables, sliding-window chunking,
//! pluggable embedders, exact vector search, retrieve-and-rerank with
//! hard-negative mining, IR metrics and an ingestion throughput harness.

pub mod corpus;
pub mod embedder;
pub mod error;
pub mod index;
pub mod math;
pub mod metrics;
pub mod pipeline;
pub mod positional;
pub mod pretrain;
pub mod synth;
pub mod throughput;

pub use corpus::{Chunk, ChunkConfig, Document, Query, Tokenizer, WhitespaceTokenizer};
pub use embedder::{Embedder, EmbedderSpec, ToyEmbedder};
pub use error::{Error, Result};
pub use index::{ScoredHit, VectorIndex};
pub use math::{Embedding, LossResult};
pub use metrics::{Qrels, RunFile};
pub use pipeline::{MiningConfig, Reranker};
