use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use densekit::corpus::{chunk, ingest, read_queries, truncate_query, write_jsonl, DEFAULT_QUERY_MAX_TOKENS};
use densekit::embedder::{read_cache, write_cache};
use densekit::index::{chunk_key, pool_chunks};
use densekit::math::{contrastive_loss, distillation_loss, plistmle_loss, ContrastiveConfig, TrainingBatch};
use densekit::metrics::evaluate_all;
use densekit::pipeline::{
    mine_hard_negatives, rerank_hits, MarginSense, NegativesRecord, OracleReranker, OverlapReranker, PipelineQuery,
    RetrievalScoreReranker,
};
use densekit::synth::{planted_relevance, synth_corpus, LengthDistribution};
use densekit::throughput::{comparison_table, measure_throughput, ThroughputReport};
use densekit::{
    ChunkConfig, Document, Embedder, Embedding, Error, MiningConfig, Qrels, Query, Reranker, RunFile, Tokenizer,
    VectorIndex, WhitespaceTokenizer,
};

use crate::args::*;

type Result<T> = anyhow::Result<T>;

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest(a) => ingest_cmd(a),
        Command::Embed(a) => embed_cmd(a),
        Command::Index(a) => index_cmd(a),
        Command::Search(a) => search_cmd(a),
        Command::Rerank(a) => rerank_cmd(a),
        Command::Mine(a) => mine_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Loss(a) => loss_cmd(a),
        Command::Synth(a) => synth_cmd(a),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(Error::from).with_context(|| format!("writing {}", path.display()))
}

fn load_corpus(path: &Path) -> Result<Vec<Document>> {
    ingest(path).with_context(|| format!("reading corpus {}", path.display()))
}

fn load_queries(path: &Path) -> Result<Vec<Query>> {
    read_queries(path).with_context(|| format!("reading queries {}", path.display()))
}

fn load_qrels(path: &Path) -> Result<Qrels> {
    Qrels::read(path).with_context(|| format!("reading qrels {}", path.display()))
}

fn chunk_config(a: &ChunkArgs) -> Result<ChunkConfig> {
    Ok(ChunkConfig::new(a.chunk_size, a.overlap)?)
}

/// Text sent to the embedder for a query: instruction-prefixed, cut to the
/// query token budget.
fn query_text(q: &Query, tok: &WhitespaceTokenizer) -> String {
    truncate_query(&tok.tokenize(&q.model_text()), DEFAULT_QUERY_MAX_TOKENS).join(" ")
}

fn embed_queries(queries: &[Query], embedder: &dyn Embedder) -> Result<Vec<Embedding>> {
    let tok = WhitespaceTokenizer::default();
    let texts: Vec<String> = queries.iter().map(|q| query_text(q, &tok)).collect();
    Ok(embedder.embed_batch(&texts)?)
}

fn doc_tokens(docs: &[Document]) -> HashMap<String, Vec<String>> {
    let tok = WhitespaceTokenizer::default();
    docs.iter().map(|d| (d.id.clone(), tok.tokenize(&d.text))).collect()
}

fn query_tokens(queries: &[Query]) -> HashMap<String, Vec<String>> {
    let tok = WhitespaceTokenizer::default();
    queries.iter().map(|q| (q.id.clone(), tok.tokenize(&q.text))).collect()
}

fn reranker(kind: RerankerKind, qrels: Option<&Path>) -> Result<Box<dyn Reranker>> {
    Ok(match kind {
        RerankerKind::Identity => Box::new(RetrievalScoreReranker),
        RerankerKind::Overlap => Box::new(OverlapReranker),
        RerankerKind::Oracle => {
            let path = qrels.ok_or_else(|| Error::InvalidConfig("the oracle reranker needs --qrels".into()))?;
            Box::new(OracleReranker::new(load_qrels(path)?))
        }
    })
}

fn ingest_cmd(a: IngestArgs) -> Result<()> {
    let docs = load_corpus(&a.corpus)?;
    let cfg = chunk_config(&a.chunking)?;
    let tok = WhitespaceTokenizer::default();
    let chunks: Vec<_> = docs.iter().flat_map(|d| chunk(&d.id, &tok.tokenize(&d.text), &cfg)).collect();
    write_jsonl(&a.out, &chunks)?;
    eprintln!("{} documents, {} chunks", docs.len(), chunks.len());
    Ok(())
}

fn embed_cmd(a: EmbedArgs) -> Result<()> {
    if a.batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be >= 1".into()).into());
    }
    let docs = load_corpus(&a.corpus)?;
    let cfg = chunk_config(&a.chunking)?;
    let embedder = a.embedder.spec()?.build()?;
    let tok = WhitespaceTokenizer::default();
    let mut ids = Vec::new();
    let mut texts = Vec::new();
    for d in &docs {
        let tokens = tok.tokenize(&d.text);
        for c in chunk(&d.id, &tokens, &cfg) {
            ids.push(chunk_key(&d.id, c.chunk_index));
            texts.push(tokens[c.token_start..c.token_end].join(" "));
        }
        if tokens.is_empty() {
            ids.push(chunk_key(&d.id, 0));
            texts.push(String::new());
        }
    }
    let mut vectors = Vec::with_capacity(texts.len());
    for batch in texts.chunks(a.batch_size) {
        vectors.extend(embedder.embed_batch(batch)?);
    }
    write_cache(&a.out, &ids, &vectors)?;
    eprintln!("{} documents, {} chunks embedded", docs.len(), ids.len());
    Ok(())
}

fn index_cmd(a: IndexArgs) -> Result<()> {
    let (ids, vectors) = read_cache(&a.cache).with_context(|| format!("reading cache {}", a.cache.display()))?;
    let (doc_ids, pooled) = pool_chunks(&ids, &vectors)?;
    let index = VectorIndex::from_parts(doc_ids, pooled)?;
    index.save(&a.out)?;
    eprintln!("{} documents indexed (dim {})", index.len(), index.dim());
    Ok(())
}

fn search_cmd(a: SearchArgs) -> Result<()> {
    let index = VectorIndex::load(&a.index).with_context(|| format!("reading index {}", a.index.display()))?;
    let queries = load_queries(&a.queries)?;
    let embedder = a.embedder.spec()?.build()?;
    let q_emb = embed_queries(&queries, embedder.as_ref())?;
    let workers = if a.workers == 0 { std::thread::available_parallelism().map_or(1, |n| n.get()) } else { a.workers };
    let hits = index.top_k_batch(&q_emb, a.k, workers)?;
    let mut run = RunFile::new();
    for (q, h) in queries.iter().zip(hits) {
        run.insert(&q.id, h)?;
    }
    write_file(&a.out, &run.to_trec_string(&a.tag))
}

fn rerank_cmd(a: RerankArgs) -> Result<()> {
    let run = RunFile::read(&a.run).with_context(|| format!("reading run {}", a.run.display()))?;
    let docs = doc_tokens(&load_corpus(&a.corpus)?);
    let queries = query_tokens(&load_queries(&a.queries)?);
    let reranker = reranker(a.reranker, a.qrels.as_deref())?;
    let mut out = RunFile::new();
    for (qid, hits) in run.iter() {
        let toks = queries.get(qid).ok_or_else(|| Error::InvalidInput(format!("query `{qid}` not in queries file")))?;
        out.insert(qid, rerank_hits(qid, toks, hits, &docs, reranker.as_ref())?)?;
    }
    write_file(&a.out, &out.to_trec_string(&a.tag))
}

fn mine_cmd(a: MineArgs) -> Result<()> {
    let cfg = MiningConfig {
        margin: a.margin,
        retrieve_k: a.retrieve_k,
        keep_n: a.keep_n,
        sense: match a.margin_sense {
            SenseArg::Above => MarginSense::ExcludeAbove,
            SenseArg::Below => MarginSense::ExcludeBelow,
        },
    };
    cfg.validate()?;
    let index = VectorIndex::load(&a.index).with_context(|| format!("reading index {}", a.index.display()))?;
    let docs = doc_tokens(&load_corpus(&a.corpus)?);
    let queries = load_queries(&a.queries)?;
    let qrels = load_qrels(&a.qrels)?;
    let reranker = reranker(a.reranker, Some(&a.qrels))?;
    let embedder = a.embedder.spec()?.build()?;
    let q_emb = embed_queries(&queries, embedder.as_ref())?;
    let tok = WhitespaceTokenizer::default();

    let mut records = Vec::new();
    for (q, emb) in queries.iter().zip(&q_emb) {
        let tokens = tok.tokenize(&q.text);
        let pq = PipelineQuery { id: &q.id, embedding: emb, tokens: &tokens };
        let relevant = qrels.relevant(&q.id);
        for &positive in &relevant {
            let mut negatives = mine_hard_negatives(&pq, positive, &index, &docs, reranker.as_ref(), &cfg)?;
            // other judged positives of the same query are never negatives
            negatives.retain(|n| !relevant.contains(&n.as_str()));
            records.push(NegativesRecord { query_id: q.id.clone(), positive_id: positive.to_string(), negatives });
        }
    }
    write_jsonl(&a.out, &records)?;
    eprintln!("{} (query, positive) pairs mined", records.len());
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let run = RunFile::read(&a.run).with_context(|| format!("reading run {}", a.run.display()))?;
    let qrels = load_qrels(&a.qrels)?;
    let report = evaluate_all(&run, &qrels, a.ndcg_k, a.recall_k)?;
    let text = serde_json::to_string_pretty(&report)? + "\n";
    if let Some(out) = &a.out {
        write_file(out, &text)?;
    }
    std::io::stdout().write_all(text.as_bytes())?;
    Ok(())
}

fn bench_cmd(a: BenchArgs) -> Result<()> {
    let docs = match &a.corpus {
        Some(p) => load_corpus(p)?,
        None => synth_corpus(a.synth_docs, &LengthDistribution::default(), a.synth_seed)?,
    };
    let cfg = chunk_config(&a.chunking)?;
    let embedder = a.embedder.spec()?.build()?;
    let report = measure_throughput(
        &a.embedder.label(),
        &docs,
        embedder.as_ref(),
        &WhitespaceTokenizer::default(),
        &cfg,
        a.batch_size,
        a.repeats,
    )?;
    let baselines = a
        .baseline
        .iter()
        .map(|p| {
            let text =
                fs::read_to_string(p).map_err(Error::from).with_context(|| format!("reading {}", p.display()))?;
            Ok(ThroughputReport::from_json(&text)?)
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(out) = &a.out {
        write_file(out, &(report.to_json() + "\n"))?;
    }
    print!("{}", comparison_table(&report, &baselines));
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LossInput {
    Contrastive {
        queries: Vec<Vec<f64>>,
        /// Per query: positive first, then its hard negatives.
        passages: Vec<Vec<Vec<f64>>>,
        #[serde(default)]
        config: Option<ContrastiveConfig>,
    },
    Distillation {
        student: Vec<Vec<f64>>,
        teacher: Vec<Vec<f64>>,
        tau_kd: f64,
    },
    Plistmle {
        scores: Vec<f64>,
        target_order: Vec<usize>,
        n: Option<usize>,
    },
}

#[derive(Serialize)]
struct LossOutput<G: Serialize> {
    loss: f64,
    grad: G,
}

fn embeddings(rows: Vec<Vec<f64>>) -> Result<Vec<Embedding>> {
    Ok(rows.into_iter().map(Embedding::new).collect::<densekit::Result<Vec<_>>>()?)
}

fn loss_cmd(a: LossArgs) -> Result<()> {
    let text =
        fs::read_to_string(&a.input).map_err(Error::from).with_context(|| format!("reading {}", a.input.display()))?;
    let input: LossInput = serde_json::from_str(&text)
        .map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })
        .with_context(|| format!("parsing {}", a.input.display()))?;
    let json = match input {
        LossInput::Contrastive { queries, passages, config } => {
            let passages = passages.into_iter().map(embeddings).collect::<Result<Vec<_>>>()?;
            let batch = TrainingBatch::new(embeddings(queries)?, passages)?;
            let r = contrastive_loss(&batch, &config.unwrap_or_default())?;
            serde_json::to_string_pretty(&LossOutput { loss: r.value, grad: r.grad })?
        }
        LossInput::Distillation { student, teacher, tau_kd } => {
            let r = distillation_loss(&student, &teacher, tau_kd)?;
            serde_json::to_string_pretty(&LossOutput { loss: r.value, grad: r.grad })?
        }
        LossInput::Plistmle { scores, target_order, n } => {
            let n = n.unwrap_or(scores.len());
            let r = plistmle_loss(&scores, &target_order, n)?;
            serde_json::to_string_pretty(&LossOutput { loss: r.value, grad: r.grad })?
        }
    } + "\n";
    if let Some(out) = &a.out {
        write_file(out, &json)?;
    }
    std::io::stdout().write_all(json.as_bytes())?;
    Ok(())
}

fn synth_cmd(a: SynthArgs) -> Result<()> {
    let planted = planted_relevance(a.docs, a.queries, a.seed)?;
    fs::create_dir_all(&a.out_dir).map_err(Error::from)?;
    write_jsonl(&a.out_dir.join("corpus.jsonl"), &planted.documents)?;
    write_jsonl(&a.out_dir.join("queries.jsonl"), &planted.queries)?;
    write_file(&a.out_dir.join("qrels.txt"), &planted.qrels.to_trec_string())?;
    eprintln!(
        "{} documents, {} queries written to {}",
        planted.documents.len(),
        planted.queries.len(),
        a.out_dir.display()
    );
    Ok(())
}
