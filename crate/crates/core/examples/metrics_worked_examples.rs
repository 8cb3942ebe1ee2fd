// The four token-level metrics on hand-built token sets.
//
// A 100-token highlight, 200 retrieved tokens, 70 of them shared.

use chunkbench::chunking::{chunk_fixed, tokenize, TokenSet};
use chunkbench::corpus::Document;
use chunkbench::metrics::{iou, precision, precision_omega, recall};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mut highlight = TokenSet::new();
    highlight.insert_range("doc", 0..100);
    let mut retrieved = TokenSet::new();
    retrieved.insert_range("doc", 30..230);

    println!("recall    = {:.4}", recall(&highlight, &retrieved));
    println!("precision = {:.4}", precision(&highlight, &retrieved));
    println!("iou       = {:.4}", iou(&highlight, &retrieved));

    // Precision Ω depends only on the chunking: the best precision any
    // retriever could reach if it returned exactly the chunks touching the
    // highlight. Here chunks are 4 tokens and the highlight covers 2 of them.
    let doc = Document::new("doc", "a b c d e f g h")?;
    let chunks = chunk_fixed(&doc, &tokenize(&doc), 4)?;
    let mut two = TokenSet::new();
    two.insert_range("doc", 1..3);
    println!("precision omega = {:.4}", precision_omega(&chunks, &two));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("example failed");
}
