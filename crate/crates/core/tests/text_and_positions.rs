mod common;

use common::*;
use densekit::corpus::{chunk, chunk_spans, ChunkConfig, WhitespaceTokenizer};
use densekit::positional::{apply_rope, attention_schedule, rope_frequencies, AttentionKind, RopeConfig};
use densekit::pretrain::{build_table_sequence, read_table_corpus, sample_masks, split_table_sequence, TableDoc};
use densekit::Embedding;
use proptest::prelude::*;

proptest! {
    #[test]
    fn chunks_cover_overlap_and_reconstruct(n in 0usize..5000, size in 2usize..700, overlap_frac in 0.0f64..0.99) {
        let overlap = ((size as f64) * overlap_frac) as usize;
        prop_assume!(overlap < size);
        let cfg = ChunkConfig::new(size, overlap).unwrap();
        let spans = chunk_spans(n, &cfg);
        prop_assert_eq!(&spans, &chunk_oracle(n, size, overlap));
        let tokens: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let mut rebuilt: Vec<String> = Vec::new();
        for (k, &(s, e)) in spans.iter().enumerate() {
            prop_assert!(e > s && e - s <= size);
            let skip = if k == 0 { 0 } else { overlap };
            rebuilt.extend(tokens[s + skip..e].iter().cloned());
        }
        prop_assert_eq!(rebuilt, tokens);
        if n > 0 && n <= size {
            prop_assert_eq!(spans.len(), 1);
        }
    }

    #[test]
    fn rope_preserves_norm_and_relative_position(
        half in 1usize..16,
        m in 0u64..2048,
        n in 0u64..2048,
        delta in 0u64..2048,
        seed in 0u64..10_000,
    ) {
        let mut r = rng(seed);
        let cfg = RopeConfig { head_dim: 2 * half, global_theta: 80_000.0, local_theta: 10_000.0 };
        let f = rope_frequencies(&cfg, AttentionKind::Global).unwrap();
        let q = Embedding::new(random_vec(&mut r, 2 * half)).unwrap();
        let k = Embedding::new(random_vec(&mut r, 2 * half)).unwrap();
        let rq = apply_rope(&q, m, &f).unwrap();
        prop_assert!((rq.norm() - q.norm()).abs() < 1e-12);
        let dot = |a: &Embedding, b: &Embedding| a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum::<f64>();
        let base = dot(&rq, &apply_rope(&k, n, &f).unwrap());
        let shifted = dot(&apply_rope(&q, m + delta, &f).unwrap(), &apply_rope(&k, n + delta, &f).unwrap());
        prop_assert!((base - shifted).abs() < 1e-9);
    }

    #[test]
    fn schedule_global_count(layers in 1usize..100) {
        let s = attention_schedule(layers).unwrap();
        prop_assert_eq!(s.flags.len(), layers);
        prop_assert_eq!(s.global_layers().len(), layers.div_ceil(3));
    }

    #[test]
    fn masks_never_touch_markers(len in 1usize..200, ratio in 0.01f64..0.99, seed in 0u64..1000) {
        let plan = sample_masks(len, ratio, seed).unwrap();
        prop_assert_eq!(plan.masked_positions.len(), (ratio * len as f64).round() as usize);
        prop_assert!(plan.masked_positions.windows(2).all(|w| w[0] < w[1]));
        // mapped into [CLS] s_1..s_K, no position lands on the marker
        prop_assert!(plan.sequence_positions(1).iter().all(|&p| p >= 1 && p <= len));
    }
}

#[test]
fn chunk_records_carry_ids() {
    let toks: Vec<String> = (0..900).map(|i| i.to_string()).collect();
    let c = chunk("doc", &toks, &ChunkConfig::default());
    assert_eq!(c.len(), 2);
    assert_eq!((c[1].doc_id.as_str(), c[1].chunk_index, c[1].token_start, c[1].token_end), ("doc", 1, 412, 900));
}

#[test]
fn table_corpus_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tables.jsonl");
    std::fs::write(
        &path,
        concat!(
            r#"{"id":"t1","headers":["item","price"],"cells":[["apple","3"],["pear","5"]],"summary":"fruit prices","metadata":"store list"}"#,
            "\n",
            r#"{"id":"t2","headers":[],"cells":[],"summary":"","synthetic_pending":true}"#,
            "\n"
        ),
    )
    .unwrap();
    let tables = read_table_corpus(&path, &WhitespaceTokenizer::default()).unwrap();
    assert_eq!(tables.len(), 2);
    let seq = build_table_sequence(&tables[0].1);
    let text: Vec<&str> = seq.table.iter().map(String::as_str).collect();
    assert_eq!(text, ["[CLS]", "item", "price", "[SEP]", "apple", "3", "pear", "5", "[SEP]"]);
    assert_eq!(seq.summary.join(" "), "[CLS] fruit prices store list");
    let (h, c) = split_table_sequence(&seq.table).unwrap();
    assert_eq!((h.len(), c.len()), (2, 4));

    std::fs::write(&path, r#"{"id":"bad","headers":["a"],"cells":[["x","y"],["z"]],"summary":"s"}"#).unwrap();
    assert!(read_table_corpus(&path, &WhitespaceTokenizer::default()).is_err());
    std::fs::write(&path, r#"{"id":"nosum","headers":["a"],"cells":[["x"]],"summary":""}"#).unwrap();
    assert!(read_table_corpus(&path, &WhitespaceTokenizer::default()).is_err());
    let _ = TableDoc::new(vec![], 0, 0, vec![], vec!["s".into()]).unwrap();
}
