// Whitespace tokenization and fixed-size chunking with char offsets.

use chunkbench::chunking::{tokenize, write_chunk_dump, ChunkerConfig, Chunking, WhitespaceTokenizer};
use chunkbench::corpus::{Corpus, Document, HighlightSpan};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let doc = Document::new(
        "memo",
        "Revenue rose 12% to €4.1bn.\nMargins held at 31%, while capex fell sharply.",
    )?;
    for t in tokenize(&doc) {
        println!("token {:>2} [{:>2},{:>2}) {:?}", t.index, t.start, t.end, doc.slice(t.start, t.end).unwrap());
    }

    let corpus = Corpus::from_documents([doc.clone()])?;
    let chunking = Chunking::build(&corpus, &WhitespaceTokenizer, ChunkerConfig::new(5))?;
    for c in chunking.chunks() {
        println!("chunk {} tokens {:?} chars [{}, {}) {:?}", c.chunk_id, c.token_range(), c.char_start, c.char_end, c.text);
    }

    // a highlight picks up every token it touches, even partially
    let span = HighlightSpan::from_document(&doc, 8, 16)?;
    let tokens: Vec<usize> = chunking.highlight_tokens(&[span]).iter().map(|(_, i)| i).collect();
    println!("highlight [8,16) covers tokens {tokens:?}");

    let mut dump = Vec::new();
    write_chunk_dump(&mut dump, chunking.chunks())?;
    print!("{}", String::from_utf8(dump)?);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("example failed");
}
