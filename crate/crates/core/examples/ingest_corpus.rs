// Loads documents from a manifest, validates a QA dataset against them and
// writes a normalized corpus archive.

use std::fs;
use std::io::BufReader;

use chunkbench::corpus::{load_corpus, load_manifest, load_qa_dataset, CorpusArchive};
use chunkbench::util::write_atomic;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    fs::write(dir.path().join("a.txt"), "Alpha report.\r\nSecond line.")?;
    fs::write(dir.path().join("b.txt"), "Beta report with a single line.")?;
    let manifest = dir.path().join("manifest.json");
    fs::write(
        &manifest,
        r#"{"documents": [{"doc_id": "a", "path": "a.txt"}, {"doc_id": "b", "path": "b.txt"}]}"#,
    )?;

    let corpus = load_manifest(&manifest, false).map_err(|r| format!("{:?}", r.errors))?;
    for d in corpus.documents() {
        println!("{}: {} chars, newlines normalized: {:?}", d.doc_id(), d.char_len(), d.text());
    }

    let dataset = r#"{"query_id": "q1", "question": "What is second?", "spans": [{"doc": "a", "start": 14, "end": 26, "excerpt": "Second line."}], "provenance": {"kind": "human"}}"#;
    let pairs = load_qa_dataset(BufReader::new(dataset.as_bytes()), &corpus)?;
    println!("{} valid QA pair(s)", pairs.len());

    let bad = dataset.replace("Second line.", "Third line.!");
    println!("mismatched excerpt: {}", load_qa_dataset(BufReader::new(bad.as_bytes()), &corpus).unwrap_err());

    let archive = dir.path().join("corpus.json");
    write_atomic(&archive, &serde_json::to_vec_pretty(&CorpusArchive::from_corpus(&corpus))?)?;
    let reloaded = load_corpus(&archive).map_err(|r| format!("{:?}", r.errors))?;
    println!("archive reloads with {} documents", reloaded.len());

    fs::write(dir.path().join("broken.json"), r#"{"documents": [{"doc_id": "x", "path": "missing.txt"}]}"#)?;
    let report = load_manifest(&dir.path().join("broken.json"), false).unwrap_err();
    for e in report.errors {
        println!("manifest error: {e}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("example failed");
}
