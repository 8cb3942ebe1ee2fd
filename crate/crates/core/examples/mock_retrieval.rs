// Embeds chunks with the deterministic mock provider and runs exact top-k
// cosine search.

use chunkbench::chunking::{ChunkerConfig, Chunking, WhitespaceTokenizer};
use chunkbench::corpus::{Corpus, Document};
use chunkbench::retrieval::{build_index, CachedEmbedder, EmbeddingCache, EmbeddingProvider, MockEmbedder};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = Corpus::from_documents([
        Document::new("pubmed", "Metformin lowered HbA1c by 0.9 points over 24 weeks in adults with type 2 diabetes.")?,
        Document::new("cyber", "The loader sideloads a DLL and the implant beacons over HTTPS every 300 seconds.")?,
    ])?;
    let chunking = Chunking::build(&corpus, &WhitespaceTokenizer, ChunkerConfig::new(6))?;

    let cache = EmbeddingCache::new();
    let embedder = CachedEmbedder::new(MockEmbedder::new(64), cache.clone());
    let texts: Vec<String> = chunking.chunks().iter().map(|c| c.text.clone()).collect();
    let index = build_index(chunking.chunks(), embedder.embed_batch(&texts)?)?;

    for question in ["How much did metformin lower HbA1c?", "How often does the implant beacon?"] {
        let q = embedder.embed_batch(&[question.to_owned()])?.remove(0);
        println!("{question}");
        for hit in index.search(&q, 2)?.0 {
            let c = &chunking.chunks()[hit.chunk_id];
            println!("  {:.4}  chunk {} ({}) {:?}", hit.score, c.chunk_id, c.doc_id, c.text);
        }
    }

    // the second pass is served from the cache
    let before = cache.len();
    embedder.embed_batch(&texts)?;
    println!("cache entries: {before} -> {}", cache.len());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("example failed");
}
