#![allow(dead_code)]

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use chunkbench::corpus::{load_manifest, load_qa_dataset, Corpus, QaPair};

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/golden")
}

pub fn golden_corpus() -> Corpus {
    load_manifest(&golden_dir().join("manifest.json"), false).expect("golden manifest loads")
}

pub fn golden_dataset(corpus: &Corpus) -> Vec<QaPair> {
    let f = File::open(golden_dir().join("dataset.jsonl")).expect("golden dataset exists");
    load_qa_dataset(BufReader::new(f), corpus).expect("golden dataset loads")
}

pub fn expected_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}
