mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use common::*;
use densekit::embedder::{
    embed_batch, read_cache, write_cache, Embedder, EmbedderSpec, RemoteConfig, RemoteEmbedder, ToyEmbedder,
};
use densekit::math::cosine_similarity;
use densekit::{Embedding, Error};
use proptest::prelude::*;
use rand::Rng;

#[derive(Clone, Copy)]
enum Behaviour {
    Ok,
    FailFirst,
    WrongDim,
    AlwaysFail,
}

/// Minimal HTTP/1.1 service speaking the embedding protocol. Returns the
/// endpoint URL, a request counter and the largest batch it has seen.
fn serve(dim: usize, behaviour: Behaviour) -> (String, Arc<AtomicUsize>, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let biggest = Arc::new(AtomicUsize::new(0));
    let (h, b) = (hits.clone(), biggest.clone());
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            let mut auth = String::new();
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = line.trim().to_string();
                }
            }
            let mut body = vec![0u8; len];
            reader.read_exact(&mut body).unwrap();
            let n = h.fetch_add(1, Ordering::SeqCst);
            let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
            let texts = req["texts"].as_array().unwrap();
            b.fetch_max(texts.len(), Ordering::SeqCst);
            let fail =
                matches!(behaviour, Behaviour::AlwaysFail) || (matches!(behaviour, Behaviour::FailFirst) && n == 0);
            let (status, payload) = if fail {
                ("500 Internal Server Error", "{}".to_string())
            } else {
                let d = if matches!(behaviour, Behaviour::WrongDim) { dim + 1 } else { dim };
                let rows: Vec<Vec<f64>> = texts
                    .iter()
                    .map(|t| {
                        let s = t.as_str().unwrap();
                        (0..d).map(|i| (s.len() + i + 1) as f64 + if auth.is_empty() { 0.0 } else { 0.5 }).collect()
                    })
                    .collect();
                ("200 OK", serde_json::json!({ "embeddings": rows }).to_string())
            };
            let _ = write!(
                stream,
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
        }
    });
    (format!("http://{addr}/embed"), hits, biggest)
}

fn texts(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("text number {i}")).collect()
}

#[test]
fn remote_batches_and_normalises() {
    let (url, hits, biggest) = serve(4, Behaviour::Ok);
    let e = RemoteEmbedder::with_api_key(RemoteConfig::new(url, 4), None).unwrap();
    let out = e.embed_batch(&texts(300)).unwrap();
    assert_eq!(out.len(), 300);
    assert_eq!(hits.load(Ordering::SeqCst), 3);
    assert_eq!(biggest.load(Ordering::SeqCst), 128);
    for v in &out {
        assert!((v.norm() - 1.0).abs() < 1e-6);
    }
    // order preserved: the mock encodes text length into the vector
    assert_eq!(out[0], e.embed_batch(&texts(1)).unwrap()[0]);
}

#[test]
fn remote_retries_transient_failures() {
    let (url, hits, _) = serve(3, Behaviour::FailFirst);
    let e = RemoteEmbedder::with_api_key(RemoteConfig::new(url, 3), Some("secret".into())).unwrap();
    assert_eq!(e.embed_batch(&texts(2)).unwrap().len(), 2);
    assert_eq!(hits.load(Ordering::SeqCst), 2);
}

#[test]
fn remote_reports_attempts_and_protocol_errors() {
    let (url, _, _) = serve(3, Behaviour::AlwaysFail);
    let mut cfg = RemoteConfig::new(url, 3);
    cfg.attempts = 2;
    match RemoteEmbedder::with_api_key(cfg, None).unwrap().embed_batch(&texts(1)) {
        Err(Error::Transport { attempts, .. }) => assert_eq!(attempts, 2),
        other => panic!("unexpected {other:?}"),
    }
    let (url, _, _) = serve(3, Behaviour::WrongDim);
    let r = RemoteEmbedder::with_api_key(RemoteConfig::new(url, 3), None).unwrap().embed_batch(&texts(1));
    assert!(matches!(r, Err(Error::Protocol(_))));
}

#[test]
fn toy_golden_vector() {
    let e = ToyEmbedder::new(8, 7).unwrap();
    let v = e.embed_batch(&["a b a".to_string()]).unwrap().remove(0);
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/toy_dim8_seed7.json");
    if std::env::var_os("DENSEKIT_BLESS").is_some() {
        std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap() + "\n").unwrap();
    }
    let golden: Embedding = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v, golden);
}

#[test]
fn toy_similarity_statistics() {
    let e = ToyEmbedder::new(256, 1).unwrap();
    let mut r = rng(12);
    let mut sims = Vec::new();
    for i in 0..1000 {
        let mk = |side: &str, r: &mut rand_chacha::ChaCha8Rng| {
            let n = r.random_range(3..12);
            (0..n).map(|j| format!("{side}{i}w{j}x{}", r.random_range(0..1000))).collect::<Vec<_>>().join(" ")
        };
        let a = mk("left", &mut r);
        let b = mk("right", &mut r);
        let va = e.embed_batch(&[a]).unwrap().remove(0);
        let vb = e.embed_batch(&[b]).unwrap().remove(0);
        assert!((cosine_similarity(&va, &va).unwrap() - 1.0).abs() < 1e-6);
        sims.push(cosine_similarity(&va, &vb).unwrap());
    }
    let mean = sims.iter().sum::<f64>() / sims.len() as f64;
    assert!(mean.abs() < 0.1, "mean similarity {mean}");
}

#[test]
fn spec_driven_embedding() {
    let spec: EmbedderSpec = serde_json::from_str(r#"{"kind":"toy","dim":16,"seed":3}"#).unwrap();
    let v = embed_batch(&texts(2), &spec).unwrap();
    assert_eq!(v.len(), 2);
    assert!(embed_batch(&[], &spec).is_err());
}

proptest! {
    #[test]
    fn cache_round_trip_is_bit_exact(rows in prop::collection::vec(prop::collection::vec(-1.0f32..1.0, 5), 0..12)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.dkvc");
        let embs: Vec<Embedding> = rows.iter().map(|r| Embedding::from_f32(r).unwrap()).collect();
        let ids: Vec<String> = (0..embs.len()).map(|i| format!("id-{i}")).collect();
        write_cache(&path, &ids, &embs).unwrap();
        let (ids2, embs2) = read_cache(&path).unwrap();
        prop_assert_eq!(ids, ids2);
        for (a, b) in embs.iter().zip(&embs2) {
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
