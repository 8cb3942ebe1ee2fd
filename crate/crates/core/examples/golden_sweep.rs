// The bundled golden mini-corpus swept over chunk sizes 5, 10, 15 and 20
// with the mock embedder at k = 2.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use chunkbench::corpus::{load_manifest, load_qa_dataset};
use chunkbench::evaluation::{EvalConfig, Evaluator};
use chunkbench::reporting::{emit, ReportSpec};
use chunkbench::retrieval::{Embedder, MockEmbedder};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/golden");
    let corpus = load_manifest(&data.join("manifest.json"), false).map_err(|r| format!("{:?}", r.errors))?;
    let queries = load_qa_dataset(BufReader::new(File::open(data.join("dataset.jsonl"))?), &corpus)?;

    let base = EvalConfig::new(5, 2).with_dataset_label("golden");
    let embedders = [Embedder::new(MockEmbedder::new(64))];
    let out = Evaluator::new(&corpus, &queries).sweep(&base, &[5, 10, 15, 20], &embedders, 4)?;

    print!("{}", String::from_utf8(emit(&out.table, &ReportSpec::default())?)?);
    let first = &out.records[0];
    println!(
        "{} at size {}: retrieved {:?}, recall {:.4}",
        first.query_id,
        first.chunk_size,
        first.retrieved.iter().map(|r| r.chunk_id).collect::<Vec<_>>(),
        first.metrics.recall
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("example failed");
}
