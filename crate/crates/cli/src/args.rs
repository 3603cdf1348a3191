use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use densekit::corpus::{DEFAULT_CHUNK_OVERLAP, DEFAULT_CHUNK_SIZE};
use densekit::embedder::{RemoteConfig, DEFAULT_REMOTE_BATCH};
use densekit::metrics::{DEFAULT_NDCG_K, DEFAULT_RECALL_K};
use densekit::pipeline::{DEFAULT_KEEP_N, DEFAULT_MARGIN, DEFAULT_RETRIEVE_K};
use densekit::throughput::{DEFAULT_BATCH_SIZE, DEFAULT_REPEATS};
use densekit::EmbedderSpec;

pub const ENDPOINT_ENV: &str = "DENSEKIT_ENDPOINT";

/// Dense retrieval toolkit: embed, index, search, rerank, mine, evaluate.
///
/// Every flag can also be set in a TOML file passed with `--config`. Top-level
/// keys apply to any subcommand that accepts them, `[subcommand]` tables to
/// that subcommand only. Flags given on the command line win.
#[derive(Debug, Parser)]
#[command(name = "densekit", version)]
pub struct Cli {
    /// TOML file mirroring the command-line flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a corpus into token windows and write the chunk manifest.
    Ingest(IngestArgs),
    /// Embed every chunk of a corpus into a vector cache.
    Embed(EmbedArgs),
    /// Pool chunk vectors per document into a searchable index file.
    Index(IndexArgs),
    /// Retrieve the top-k documents for each query into a run file.
    Search(SearchArgs),
    /// Rescore a run file with a reranker.
    Rerank(RerankArgs),
    /// Mine hard negatives for every judged (query, positive) pair.
    Mine(MineArgs),
    /// Score a run file against relevance judgments.
    Eval(EvalArgs),
    /// Measure ingestion throughput of an embedder.
    Bench(BenchArgs),
    /// Evaluate a loss and its gradient on a JSON batch.
    Loss(LossArgs),
    /// Write a seeded planted-relevance fixture (corpus, queries, qrels).
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbedderKind {
    Toy,
    Remote,
}

#[derive(Debug, Clone, Args)]
pub struct EmbedderArgs {
    #[arg(long, value_enum, default_value_t = EmbedderKind::Toy)]
    pub embedder: EmbedderKind,
    /// Embedding dimension.
    #[arg(long, default_value_t = 256)]
    pub dim: usize,
    /// Seed of the toy embedder.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// URL of the remote embedding service.
    #[arg(long, env = ENDPOINT_ENV)]
    pub endpoint: Option<String>,
    /// Texts per remote request.
    #[arg(long, default_value_t = DEFAULT_REMOTE_BATCH)]
    pub remote_batch: usize,
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
    /// Attempts per remote request, including the first.
    #[arg(long, default_value_t = 3)]
    pub attempts: u32,
    #[arg(long, default_value_t = 30_000)]
    pub timeout_ms: u64,
}

impl EmbedderArgs {
    pub fn spec(&self) -> anyhow::Result<EmbedderSpec> {
        Ok(match self.embedder {
            EmbedderKind::Toy => EmbedderSpec::Toy { dim: self.dim, seed: self.seed },
            EmbedderKind::Remote => {
                let endpoint = self.endpoint.clone().ok_or_else(|| {
                    densekit::Error::InvalidConfig(format!("remote embedder needs --endpoint or {ENDPOINT_ENV}"))
                })?;
                let mut cfg = RemoteConfig::new(endpoint, self.dim);
                cfg.batch_size = self.remote_batch;
                cfg.max_in_flight = self.max_in_flight;
                cfg.attempts = self.attempts;
                cfg.timeout_ms = self.timeout_ms;
                EmbedderSpec::Remote(cfg)
            }
        })
    }

    pub fn label(&self) -> String {
        match self.embedder {
            EmbedderKind::Toy => format!("toy(dim={}, seed={})", self.dim, self.seed),
            EmbedderKind::Remote => format!("remote({})", self.endpoint.as_deref().unwrap_or("?")),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ChunkArgs {
    /// Tokens per chunk.
    #[arg(long, default_value_t = DEFAULT_CHUNK_SIZE)]
    pub chunk_size: usize,
    /// Tokens shared by consecutive chunks.
    #[arg(long, default_value_t = DEFAULT_CHUNK_OVERLAP)]
    pub overlap: usize,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// JSONL corpus with `id` and `text` fields.
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub chunking: ChunkArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub chunking: ChunkArgs,
    #[command(flatten)]
    pub embedder: EmbedderArgs,
    /// Chunks per embedding call.
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    pub batch_size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Chunk vector cache written by `embed`.
    #[arg(long)]
    pub cache: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// JSONL queries with `id`, `text` and optional `task_definition`.
    #[arg(long)]
    pub queries: PathBuf,
    #[command(flatten)]
    pub embedder: EmbedderArgs,
    /// Documents retrieved per query.
    #[arg(short, long, default_value_t = DEFAULT_RETRIEVE_K)]
    pub k: usize,
    /// Search threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Run tag written in the last column.
    #[arg(long, default_value = "densekit")]
    pub tag: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RerankerKind {
    /// Keep the retrieval scores.
    Identity,
    /// Count query tokens present in the document.
    Overlap,
    /// Score by relevance grade; needs `--qrels`.
    Oracle,
}

#[derive(Debug, Args)]
pub struct RerankArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, value_enum, default_value_t = RerankerKind::Overlap)]
    pub reranker: RerankerKind,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    #[arg(long, default_value = "densekit")]
    pub tag: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SenseArg {
    /// Discard candidates scoring above the margin (presumed false negatives).
    Above,
    /// Discard candidates scoring below the margin.
    Below,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    #[command(flatten)]
    pub embedder: EmbedderArgs,
    #[arg(long, value_enum, default_value_t = RerankerKind::Overlap)]
    pub reranker: RerankerKind,
    /// Fraction of the positive's similarity used as the cut-off.
    #[arg(long, default_value_t = DEFAULT_MARGIN)]
    pub margin: f64,
    #[arg(long, value_enum, default_value_t = SenseArg::Above)]
    pub margin_sense: SenseArg,
    #[arg(long, default_value_t = DEFAULT_RETRIEVE_K)]
    pub retrieve_k: usize,
    /// Negatives kept per pair.
    #[arg(long, default_value_t = DEFAULT_KEEP_N)]
    pub keep_n: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long, default_value_t = DEFAULT_NDCG_K)]
    pub ndcg_k: usize,
    #[arg(long, default_value_t = DEFAULT_RECALL_K)]
    pub recall_k: usize,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Corpus to ingest; without it a synthetic corpus is generated.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Size of the synthetic corpus.
    #[arg(long, default_value_t = 1000)]
    pub synth_docs: usize,
    #[arg(long, default_value_t = 7)]
    pub synth_seed: u64,
    #[command(flatten)]
    pub chunking: ChunkArgs,
    #[command(flatten)]
    pub embedder: EmbedderArgs,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    pub batch_size: usize,
    #[arg(long, default_value_t = DEFAULT_REPEATS)]
    pub repeats: usize,
    /// Earlier reports to compare against; repeatable.
    #[arg(long)]
    pub baseline: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    /// JSON batch; its `kind` is `contrastive`, `distillation` or `plistmle`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub docs: usize,
    #[arg(long, default_value_t = 20)]
    pub queries: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}
