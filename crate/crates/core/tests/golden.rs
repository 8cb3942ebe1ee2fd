//! The evaluation pipeline against an independent Python re-implementation
//! (tools/golden_oracle.py) and against committed output files.

mod common;

use std::fs;

use chunkbench::chunking::{Chunking, ChunkerConfig, WhitespaceTokenizer};
use chunkbench::evaluation::{write_records, EvalConfig, Evaluator};
use chunkbench::retrieval::{cosine_similarity, Embedder, EmbeddingProvider, MockEmbedder};
use serde_json::Value;

fn oracle() -> Value {
    let raw = fs::read_to_string(common::expected_dir().join("oracle_expected.json")).unwrap();
    serde_json::from_str(&raw).unwrap()
}

#[test]
fn documents_match_oracle() {
    let corpus = common::golden_corpus();
    let oracle = oracle();
    for (doc, want) in corpus.documents().zip(oracle["documents"].as_array().unwrap()) {
        assert_eq!(doc.doc_id(), want["doc_id"]);
        assert_eq!(doc.char_len() as u64, want["char_len"].as_u64().unwrap());
        let chunking = Chunking::build(&corpus, &WhitespaceTokenizer, ChunkerConfig::new(5)).unwrap();
        assert_eq!(
            chunking.tokens(doc.doc_id()).unwrap().len() as u64,
            want["token_count"].as_u64().unwrap()
        );
    }
}

#[test]
fn query_cosines_match_oracle() {
    let corpus = common::golden_corpus();
    let qs = common::golden_dataset(&corpus);
    let m = MockEmbedder::new(64);
    let texts: Vec<String> = qs.iter().take(3).map(|q| q.question.clone()).collect();
    let v = m.embed_batch(&texts).unwrap();
    let want = &oracle()["query_cosines_first3"];
    for i in 0..3 {
        for j in 0..3 {
            let got = cosine_similarity(&v[i], &v[j]);
            assert_eq!(got, want[i][j].as_f64().unwrap(), "queries {i},{j}");
        }
    }
}

#[test]
fn every_cell_matches_oracle() {
    let corpus = common::golden_corpus();
    let qs = common::golden_dataset(&corpus);
    let embedder = Embedder::new(MockEmbedder::new(64));
    let ev = Evaluator::new(&corpus, &qs);
    for cell in oracle()["cells"].as_array().unwrap() {
        let k = cell["k"].as_u64().unwrap() as usize;
        let size = cell["chunk_size"].as_u64().unwrap() as usize;
        let run = ev.evaluate(&EvalConfig::new(size, k), &embedder).unwrap();
        let chunking = Chunking::build(&corpus, &WhitespaceTokenizer, ChunkerConfig::new(size)).unwrap();
        assert_eq!(chunking.chunks().len() as u64, cell["num_chunks"].as_u64().unwrap());

        for (rec, want) in run.records.iter().zip(cell["records"].as_array().unwrap()) {
            let ctx = format!("k={k} size={size} {}", rec.query_id);
            assert_eq!(rec.query_id, want["query_id"], "{ctx}");
            let ids: Vec<u64> = rec.retrieved.iter().map(|r| r.chunk_id as u64).collect();
            let want_ids: Vec<u64> =
                want["retrieved"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
            assert_eq!(ids, want_ids, "{ctx}");
            let scores: Vec<f64> = rec.retrieved.iter().map(|r| r.score).collect();
            let want_scores: Vec<f64> =
                want["scores"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
            assert_eq!(scores, want_scores, "{ctx}");
            let m = rec.metrics;
            for (name, got) in [
                ("recall", m.recall),
                ("precision", m.precision),
                ("iou", m.iou),
                ("precision_omega", m.precision_omega),
            ] {
                assert_eq!(got, want[name].as_f64().unwrap(), "{ctx} {name}");
            }
        }

        let stats = run.row.stats.unwrap();
        for (name, got) in [
            ("iou", stats.iou),
            ("recall", stats.recall),
            ("precision", stats.precision),
            ("precision_omega", stats.precision_omega),
        ] {
            assert_eq!(got.mean, cell[name]["mean"].as_f64().unwrap(), "k={k} size={size} {name} mean");
            assert_eq!(got.std, cell[name]["std"].as_f64().unwrap(), "k={k} size={size} {name} std");
            assert_eq!(got.n as u64, cell[name]["n"].as_u64().unwrap());
        }
    }
}

/// Records and summary for the k=2 sweep, as the CLI would write them.
pub fn golden_sweep_outputs() -> (Vec<u8>, Vec<u8>) {
    let corpus = common::golden_corpus();
    let qs = common::golden_dataset(&corpus);
    let ev = Evaluator::new(&corpus, &qs);
    let base = EvalConfig::new(5, 2).with_dataset_label("golden");
    let out = ev
        .sweep(&base, &[5, 10, 15, 20], &[Embedder::new(MockEmbedder::new(64))], 2)
        .unwrap();
    let mut records = Vec::new();
    write_records(&mut records, &out.records).unwrap();
    (records, out.table.to_json().into_bytes())
}

#[test]
fn sweep_outputs_match_committed_files() {
    let (records, summary) = golden_sweep_outputs();
    let dir = common::expected_dir();
    if std::env::var_os("CHUNKBENCH_BLESS").is_some() {
        fs::write(dir.join("sweep_k2.records.jsonl"), &records).unwrap();
        fs::write(dir.join("sweep_k2.summary.json"), &summary).unwrap();
    }
    assert_eq!(records, fs::read(dir.join("sweep_k2.records.jsonl")).unwrap());
    assert_eq!(summary, fs::read(dir.join("sweep_k2.summary.json")).unwrap());
}
