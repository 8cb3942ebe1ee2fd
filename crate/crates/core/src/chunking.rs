//! Offset-tracking tokenization and fixed-size token chunking.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::ops::Range;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Document, HighlightSpan};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChunkError {
    #[error("chunk size must be at least 1")]
    InvalidChunkSize,
    #[error("chunk overlap {overlap} must be smaller than chunk size {size}")]
    InvalidOverlap { size: usize, overlap: usize },
}

/// One token: a char range `[start, end)` in its document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Token {
    pub index: usize,
    pub start: usize,
    pub end: usize,
}

/// Splits a document into tokens. Implementations must be deterministic
/// and return strictly ordered, non-overlapping, non-empty tokens.
pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, doc: &Document) -> Vec<Token>;
}

/// A token is a maximal run of non-whitespace characters (Unicode
/// `White_Space`). Punctuation stays attached to the word it touches.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn tokenize(&self, doc: &Document) -> Vec<Token> {
        tokenize(doc)
    }
}

pub fn tokenize(doc: &Document) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut start = None;
    let mut pos = 0;
    for ch in doc.text().chars() {
        match (ch.is_whitespace(), start) {
            (true, Some(s)) => {
                tokens.push(Token {
                    index: tokens.len(),
                    start: s,
                    end: pos,
                });
                start = None;
            }
            (false, None) => start = Some(pos),
            _ => {}
        }
        pos += 1;
    }
    if let Some(s) = start {
        tokens.push(Token {
            index: tokens.len(),
            start: s,
            end: pos,
        });
    }
    tokens
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: usize,
    pub doc_id: String,
    pub token_start: usize,
    pub token_end: usize,
    pub char_start: usize,
    pub char_end: usize,
    #[serde(skip)]
    pub text: String,
}

impl Chunk {
    pub fn token_range(&self) -> Range<usize> {
        self.token_start..self.token_end
    }

    pub fn token_len(&self) -> usize {
        self.token_end - self.token_start
    }
}

/// Fixed-size chunking parameters. `overlap` is the number of tokens shared
/// by consecutive chunks; zero reproduces disjoint chunking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkerConfig {
    pub size: usize,
    #[serde(default)]
    pub overlap: usize,
}

impl ChunkerConfig {
    pub fn new(size: usize) -> Self {
        Self { size, overlap: 0 }
    }

    pub fn with_overlap(mut self, overlap: usize) -> Self {
        self.overlap = overlap;
        self
    }

    pub fn validate(&self) -> Result<(), ChunkError> {
        if self.size == 0 {
            return Err(ChunkError::InvalidChunkSize);
        }
        if self.overlap >= self.size {
            return Err(ChunkError::InvalidOverlap {
                size: self.size,
                overlap: self.overlap,
            });
        }
        Ok(())
    }
}

/// Greedy left-to-right chunks of `size` tokens with no overlap. The last
/// chunk keeps whatever tokens remain. Chunk ids start at 0.
pub fn chunk_fixed(doc: &Document, tokens: &[Token], size: usize) -> Result<Vec<Chunk>, ChunkError> {
    chunk_with(doc, tokens, ChunkerConfig::new(size), 0)
}

/// Chunks one document, numbering chunks from `first_id`.
pub fn chunk_with(
    doc: &Document,
    tokens: &[Token],
    config: ChunkerConfig,
    first_id: usize,
) -> Result<Vec<Chunk>, ChunkError> {
    config.validate()?;
    let stride = config.size - config.overlap;
    let mut chunks = Vec::with_capacity(tokens.len().div_ceil(stride));
    let mut start = 0;
    while start < tokens.len() {
        let end = (start + config.size).min(tokens.len());
        let (char_start, char_end) = (tokens[start].start, tokens[end - 1].end);
        chunks.push(Chunk {
            chunk_id: first_id + chunks.len(),
            doc_id: doc.doc_id().to_owned(),
            token_start: start,
            token_end: end,
            char_start,
            char_end,
            text: doc
                .slice(char_start, char_end)
                .expect("token offsets lie inside the document")
                .to_owned(),
        });
        if end == tokens.len() {
            break;
        }
        start += stride;
    }
    Ok(chunks)
}

/// The complete chunking of a corpus: per-document token streams plus all
/// chunks, numbered consecutively across documents in corpus order.
#[derive(Debug, Clone)]
pub struct Chunking {
    config: ChunkerConfig,
    tokens: IndexMap<String, Vec<Token>>,
    chunks: Vec<Chunk>,
}

impl Chunking {
    pub fn build(
        corpus: &Corpus,
        tokenizer: &dyn Tokenizer,
        config: ChunkerConfig,
    ) -> Result<Self, ChunkError> {
        config.validate()?;
        let mut tokens = IndexMap::with_capacity(corpus.len());
        let mut chunks = Vec::new();
        for doc in corpus.documents() {
            let doc_tokens = tokenizer.tokenize(doc);
            let next = chunk_with(doc, &doc_tokens, config, chunks.len())?;
            chunks.extend(next);
            tokens.insert(doc.doc_id().to_owned(), doc_tokens);
        }
        Ok(Self {
            config,
            tokens,
            chunks,
        })
    }

    pub fn config(&self) -> ChunkerConfig {
        self.config
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn chunk(&self, chunk_id: usize) -> Option<&Chunk> {
        self.chunks.get(chunk_id)
    }

    pub fn tokens(&self, doc_id: &str) -> Option<&[Token]> {
        self.tokens.get(doc_id).map(Vec::as_slice)
    }

    /// Token set of a query's highlights, using this chunking's token streams.
    pub fn highlight_tokens(&self, spans: &[HighlightSpan]) -> TokenSet {
        let mut set = TokenSet::new();
        for span in spans {
            if let Some(tokens) = self.tokens.get(&span.doc_id) {
                set.extend(&span_to_token_set(tokens, std::slice::from_ref(span)));
            }
        }
        set
    }
}

/// Positional token indices grouped by document.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenSet {
    docs: BTreeMap<String, BTreeSet<usize>>,
}

impl TokenSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, doc_id: &str, index: usize) -> bool {
        self.docs.entry(doc_id.to_owned()).or_default().insert(index)
    }

    pub fn insert_range(&mut self, doc_id: &str, range: Range<usize>) {
        if range.is_empty() {
            return;
        }
        self.docs.entry(doc_id.to_owned()).or_default().extend(range);
    }

    pub fn extend(&mut self, other: &TokenSet) {
        for (doc, idx) in &other.docs {
            self.docs.entry(doc.clone()).or_default().extend(idx.iter().copied());
        }
    }

    pub fn contains(&self, doc_id: &str, index: usize) -> bool {
        self.docs.get(doc_id).is_some_and(|s| s.contains(&index))
    }

    pub fn len(&self) -> usize {
        self.docs.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.values().all(BTreeSet::is_empty)
    }

    pub fn intersection_len(&self, other: &TokenSet) -> usize {
        self.docs
            .iter()
            .filter_map(|(doc, a)| other.docs.get(doc).map(|b| a.intersection(b).count()))
            .sum()
    }

    pub fn intersects_range(&self, doc_id: &str, range: Range<usize>) -> bool {
        self.docs
            .get(doc_id)
            .is_some_and(|s| s.range(range).next().is_some())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.docs
            .iter()
            .flat_map(|(d, s)| s.iter().map(move |i| (d.as_str(), *i)))
    }
}

/// Tokens whose char range shares at least one character with any span.
/// Spans must belong to the document `tokens` came from.
pub fn span_to_token_set(tokens: &[Token], spans: &[HighlightSpan]) -> TokenSet {
    let mut set = TokenSet::new();
    for span in spans {
        // tokens are sorted by both start and end
        let first = tokens.partition_point(|t| t.end <= span.start);
        let last = tokens.partition_point(|t| t.start < span.end);
        set.insert_range(&span.doc_id, first..last.max(first));
    }
    set
}

/// Union of the token ranges of `chunks`.
pub fn chunks_to_token_set<'a>(chunks: impl IntoIterator<Item = &'a Chunk>) -> TokenSet {
    let mut set = TokenSet::new();
    for c in chunks {
        set.insert_range(&c.doc_id, c.token_range());
    }
    set
}

/// Writes the debugging dump, one chunk per line.
pub fn write_chunk_dump<W: Write>(mut writer: W, chunks: &[Chunk]) -> std::io::Result<()> {
    for c in chunks {
        serde_json::to_writer(&mut writer, c)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(text: &str) -> Document {
        Document::new("d", text).unwrap()
    }

    fn ranges(tokens: &[Token]) -> Vec<(usize, usize)> {
        tokens.iter().map(|t| (t.start, t.end)).collect()
    }

    fn span(start: usize, end: usize) -> HighlightSpan {
        HighlightSpan {
            doc_id: "d".into(),
            start,
            end,
            excerpt: String::new(),
        }
    }

    #[test]
    fn whitespace_tokens() {
        assert_eq!(ranges(&tokenize(&doc("foo bar  baz"))), [(0, 3), (4, 7), (9, 12)]);
        assert_eq!(ranges(&tokenize(&doc("a\nb"))), [(0, 1), (2, 3)]);
        assert_eq!(ranges(&tokenize(&doc("  lead, trail.  "))), [(2, 7), (8, 14)]);
        assert!(tokenize(&doc(" \n\t ")).is_empty());
        // NBSP and ideographic space are whitespace
        assert_eq!(tokenize(&doc("a\u{a0}b\u{3000}c")).len(), 3);
    }

    #[test]
    fn fixed_chunks_keep_short_tail() {
        let d = doc("a b c d e f g h i j k l");
        let toks = tokenize(&d);
        let lens: Vec<_> = chunk_fixed(&d, &toks, 5).unwrap().iter().map(Chunk::token_len).collect();
        assert_eq!(lens, [5, 5, 2]);
        let d5 = doc("a b c d e");
        assert_eq!(chunk_fixed(&d5, &tokenize(&d5), 5).unwrap().len(), 1);
        assert!(chunk_fixed(&d5, &[], 3).unwrap().is_empty());
        assert_eq!(chunk_fixed(&d5, &tokenize(&d5), 0), Err(ChunkError::InvalidChunkSize));
    }

    #[test]
    fn chunk_offsets() {
        let d = doc("one two three four");
        let c = chunk_fixed(&d, &tokenize(&d), 3).unwrap();
        assert_eq!((c[0].char_start, c[0].char_end), (0, 13));
        assert_eq!(c[0].text, "one two three");
        assert_eq!(c[1].text, "four");
        assert_eq!(c[1].chunk_id, 1);
    }

    #[test]
    fn overlapping_chunks() {
        let d = doc("a b c d e f g");
        let toks = tokenize(&d);
        let c = chunk_with(&d, &toks, ChunkerConfig::new(4).with_overlap(2), 0).unwrap();
        let r: Vec<_> = c.iter().map(|c| (c.token_start, c.token_end)).collect();
        assert_eq!(r, [(0, 4), (2, 6), (4, 7)]);
        assert_eq!(
            ChunkerConfig::new(3).with_overlap(3).validate(),
            Err(ChunkError::InvalidOverlap { size: 3, overlap: 3 })
        );
    }

    #[test]
    fn span_overlap_rule() {
        let d = doc("abc def");
        let toks = tokenize(&d);
        let idx = |s: &TokenSet| s.iter().map(|(_, i)| i).collect::<Vec<_>>();
        assert_eq!(idx(&span_to_token_set(&toks, &[span(4, 7)])), [1]);
        assert_eq!(idx(&span_to_token_set(&toks, &[span(2, 5)])), [0, 1]);
        assert!(span_to_token_set(&toks, &[span(3, 4)]).is_empty());
    }

    #[test]
    fn chunk_sets() {
        let d = doc("a b c d e f g h i j");
        let c = chunk_fixed(&d, &tokenize(&d), 5).unwrap();
        let all = chunks_to_token_set(&c);
        assert_eq!(all.len(), 10);
        assert!(chunks_to_token_set(&[]).is_empty());
        let twice = chunks_to_token_set([&c[0], &c[0]]);
        assert_eq!(twice, chunks_to_token_set([&c[0]]));
    }

    #[test]
    fn chunk_dump_format() {
        let d = doc("a b");
        let c = chunk_fixed(&d, &tokenize(&d), 5).unwrap();
        let mut out = Vec::new();
        write_chunk_dump(&mut out, &c).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "{\"chunk_id\":0,\"doc_id\":\"d\",\"token_start\":0,\"token_end\":2,\"char_start\":0,\"char_end\":3}\n"
        );
    }

    proptest! {
        #[test]
        fn partition_holds(words in prop::collection::vec("[a-z€.,]{1,6}", 0..60),
                           seps in prop::collection::vec(prop::sample::select(vec![" ", "  ", "\n", "\t "]), 60),
                           size in 1usize..25) {
            let mut text = String::from("x");
            for (w, s) in words.iter().zip(&seps) {
                text.push_str(s);
                text.push_str(w);
            }
            let d = doc(&text);
            let toks = tokenize(&d);
            let chunks = chunk_fixed(&d, &toks, size).unwrap();
            let mut next = 0;
            for c in &chunks {
                prop_assert_eq!(c.token_start, next);
                prop_assert!(c.token_len() <= size);
                next = c.token_end;
                let slice = d.slice(c.char_start, c.char_end).unwrap();
                let first = d.slice(toks[c.token_start].start, toks[c.token_start].end).unwrap();
                let last = d.slice(toks[c.token_end - 1].start, toks[c.token_end - 1].end).unwrap();
                prop_assert!(slice.starts_with(first) && slice.ends_with(last));
            }
            prop_assert_eq!(next, toks.len());
            for c in chunks.iter().rev().skip(1) {
                prop_assert_eq!(c.token_len(), size);
            }
            prop_assert_eq!(tokenize(&d), toks);
        }
    }
}
