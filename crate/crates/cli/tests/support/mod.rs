//! Helpers for driving the `densekit` binary over the shipped fixture.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn densekit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_densekit"))
        .args(args)
        .env_remove("DENSEKIT_ENDPOINT")
        .env_remove("DENSEKIT_API_KEY")
        .output()
        .expect("spawn densekit")
}

pub fn ok(args: &[&str]) -> Vec<u8> {
    let out = densekit(args);
    assert!(out.status.success(), "densekit {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Runs embed, index, search, rerank, mine and eval on the fixture inside
/// `work`. Returns every artifact by name.
pub fn full_pipeline(work: &Path) -> BTreeMap<&'static str, Vec<u8>> {
    let corpus = fixture("corpus.jsonl");
    let queries = fixture("queries.jsonl");
    let qrels = fixture("qrels.txt");
    let cache = work.join("chunks.dkvc");
    let index = work.join("index.dkvc");
    let run = work.join("run.txt");
    let reranked = work.join("reranked.txt");
    let negatives = work.join("negatives.jsonl");
    let manifest = work.join("chunks.jsonl");

    ok(&["ingest", "--corpus", s(&corpus), "--out", s(&manifest)]);
    ok(&["embed", "--corpus", s(&corpus), "--out", s(&cache)]);
    ok(&["index", "--cache", s(&cache), "--out", s(&index)]);
    ok(&["search", "--index", s(&index), "--queries", s(&queries), "--out", s(&run)]);
    ok(&[
        "rerank",
        "--run",
        s(&run),
        "--corpus",
        s(&corpus),
        "--queries",
        s(&queries),
        "--reranker",
        "overlap",
        "--out",
        s(&reranked),
    ]);
    ok(&[
        "mine",
        "--index",
        s(&index),
        "--corpus",
        s(&corpus),
        "--queries",
        s(&queries),
        "--qrels",
        s(&qrels),
        "--out",
        s(&negatives),
    ]);
    let report = ok(&["eval", "--run", s(&reranked), "--qrels", s(&qrels)]);

    let mut out = BTreeMap::new();
    for (name, path) in [
        ("manifest", &manifest),
        ("cache", &cache),
        ("index", &index),
        ("run", &run),
        ("reranked", &reranked),
        ("negatives", &negatives),
    ] {
        out.insert(name, std::fs::read(path).unwrap());
    }
    out.insert("report", report);
    out
}

/// Brute-force metrics straight from the text formats: (ndcg@10, recall@5,
/// match@5, accuracy@1) per judged query with at least one relevant doc.
pub fn oracle_metrics(run_text: &str, qrels_text: &str) -> BTreeMap<String, [f64; 4]> {
    let mut judged: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
    for line in qrels_text.lines().filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split_whitespace().collect();
        judged.entry(f[0].into()).or_default().insert(f[2].into(), f[3].parse().unwrap());
    }
    let mut ranked: BTreeMap<String, Vec<(usize, String)>> = BTreeMap::new();
    for line in run_text.lines().filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split_whitespace().collect();
        ranked.entry(f[0].into()).or_default().push((f[2].parse().unwrap(), f[1].into()));
    }
    let mut out = BTreeMap::new();
    for (q, grades) in &judged {
        let n_rel = grades.values().filter(|&&g| g > 0).count();
        if n_rel == 0 {
            continue;
        }
        let mut docs = ranked.get(q).cloned().unwrap_or_default();
        docs.sort();
        let grade = |d: &str| *grades.get(d).unwrap_or(&0);
        let gain = |g: u32| 2f64.powi(g as i32) - 1.0;
        let mut dcg = 0.0;
        for (r, (_, d)) in docs.iter().take(10).enumerate() {
            dcg += gain(grade(d)) / ((r + 2) as f64).log2();
        }
        let mut ideal: Vec<u32> = grades.values().copied().collect();
        ideal.sort_by(|a, b| b.cmp(a));
        let idcg: f64 = ideal.iter().take(10).enumerate().map(|(r, &g)| gain(g) / ((r + 2) as f64).log2()).sum();
        let hits5 = docs.iter().take(5).filter(|(_, d)| grade(d) > 0).count();
        let top1 = docs.first().is_some_and(|(_, d)| grade(d) > 0);
        out.insert(
            q.clone(),
            [dcg / idcg, hits5 as f64 / n_rel as f64, if hits5 > 0 { 1.0 } else { 0.0 }, if top1 { 1.0 } else { 0.0 }],
        );
    }
    out
}
