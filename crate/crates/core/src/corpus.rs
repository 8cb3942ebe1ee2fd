//! Documents, highlight spans, QA datasets and their on-disk formats.
//!
//! All offsets are counted in Unicode scalar values (Rust `char`s), never
//! bytes, so datasets written here can be consumed by any implementation
//! that indexes strings by code point.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("document {doc_id}: invalid UTF-8 at byte {valid_up_to}")]
    Decode { doc_id: String, valid_up_to: usize },
    #[error("document {0} is empty after normalization")]
    EmptyDocument(String),
    #[error("document id must be nonempty")]
    EmptyDocId,
    #[error("duplicate document id {0}")]
    DuplicateDocument(String),
    #[error("line {line_no}: {message}")]
    Schema { line_no: usize, message: String },
    #[error("query {0}: excerpt does not match the document text")]
    SpanMismatch(String),
    #[error("span [{start}, {end}) is out of bounds for document {doc_id} (length {char_len})")]
    OutOfBounds {
        doc_id: String,
        start: usize,
        end: usize,
        char_len: usize,
    },
    #[error("unknown document {0}")]
    UnknownDocument(String),
    #[error("duplicate query id {0}")]
    DuplicateQuery(String),
    #[error("query {0} has no spans")]
    NoSpans(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Manifest { path: PathBuf, message: String },
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// A normalized text document.
///
/// Immutable after construction. Keeps a char-to-byte offset table so
/// span slicing by character offsets is O(1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    doc_id: String,
    text: String,
    // byte offset of every char, plus text.len() as the final entry
    char_bytes: Vec<usize>,
}

impl Document {
    /// Builds a document from already-normalized text. Use [`ingest_document`]
    /// for raw input.
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let doc_id = doc_id.into();
        if doc_id.is_empty() {
            return Err(CorpusError::EmptyDocId);
        }
        let text = normalize_newlines(&text.into());
        if text.is_empty() {
            return Err(CorpusError::EmptyDocument(doc_id));
        }
        let mut char_bytes: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        char_bytes.push(text.len());
        Ok(Self {
            doc_id,
            text,
            char_bytes,
        })
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Length in Unicode scalar values.
    pub fn char_len(&self) -> usize {
        self.char_bytes.len() - 1
    }

    /// Byte offset of a char offset. `char_offset` may equal `char_len()`.
    pub fn byte_offset(&self, char_offset: usize) -> Option<usize> {
        self.char_bytes.get(char_offset).copied()
    }

    /// Substring between two char offsets, `None` if out of bounds or reversed.
    pub fn slice(&self, start: usize, end: usize) -> Option<&str> {
        if start > end {
            return None;
        }
        let (b0, b1) = (self.byte_offset(start)?, self.byte_offset(end)?);
        Some(&self.text[b0..b1])
    }
}

/// CRLF and lone CR become LF. Nothing else is touched.
pub fn normalize_newlines(text: &str) -> String {
    if !text.contains('\r') {
        return text.to_owned();
    }
    text.replace("\r\n", "\n").replace('\r', "\n")
}

/// Decodes and normalizes raw bytes into a [`Document`].
///
/// With `lossy` set, invalid UTF-8 sequences become U+FFFD instead of
/// failing.
pub fn ingest_document(raw: &[u8], doc_id: &str, lossy: bool) -> Result<Document> {
    let text = match std::str::from_utf8(raw) {
        Ok(s) => s.to_owned(),
        Err(_) if lossy => String::from_utf8_lossy(raw).into_owned(),
        Err(e) => {
            return Err(CorpusError::Decode {
                doc_id: doc_id.to_owned(),
                valid_up_to: e.valid_up_to(),
            })
        }
    };
    Document::new(doc_id, text)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HighlightSpan {
    #[serde(rename = "doc")]
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
    pub excerpt: String,
}

impl HighlightSpan {
    /// Span over `doc[start..end)` with the excerpt copied from the document.
    pub fn from_document(doc: &Document, start: usize, end: usize) -> Result<Self> {
        let excerpt = doc.slice(start, end).ok_or_else(|| CorpusError::OutOfBounds {
            doc_id: doc.doc_id().to_owned(),
            start,
            end,
            char_len: doc.char_len(),
        })?;
        validate_span(
            doc,
            HighlightSpan {
                doc_id: doc.doc_id().to_owned(),
                start,
                end,
                excerpt: excerpt.to_owned(),
            },
        )
    }
}

/// Checks bounds (`0 <= start < end <= char_len`) and that the excerpt is
/// exactly the document slice.
///
/// The error for a mismatching excerpt carries the span's doc id; callers
/// with a query in hand rewrap it with the query id.
pub fn validate_span(doc: &Document, span: HighlightSpan) -> Result<HighlightSpan> {
    if span.doc_id != doc.doc_id() {
        return Err(CorpusError::UnknownDocument(span.doc_id));
    }
    if span.start >= span.end || span.end > doc.char_len() {
        return Err(CorpusError::OutOfBounds {
            doc_id: span.doc_id,
            start: span.start,
            end: span.end,
            char_len: doc.char_len(),
        });
    }
    match doc.slice(span.start, span.end) {
        Some(s) if s == span.excerpt => Ok(span),
        _ => Err(CorpusError::SpanMismatch(span.doc_id)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Human,
    Synthetic {
        model: String,
        timestamp: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        template: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<i64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPair {
    pub query_id: String,
    pub question: String,
    pub spans: Vec<HighlightSpan>,
    pub provenance: Provenance,
}

/// Unions overlapping spans per document into maximal spans.
///
/// Output is sorted by `(doc_id, start)`, which makes the result
/// independent of input order. Excerpts are re-read from the documents.
/// Spans that merely touch (`a.end == b.start`) are kept separate.
pub fn merge_spans<'a>(
    lookup: impl Fn(&str) -> Option<&'a Document>,
    spans: &[HighlightSpan],
) -> Result<Vec<HighlightSpan>> {
    let mut sorted: Vec<&HighlightSpan> = spans.iter().collect();
    sorted.sort_by(|a, b| (&a.doc_id, a.start, a.end).cmp(&(&b.doc_id, b.start, b.end)));

    let mut bounds: Vec<(&str, usize, usize)> = Vec::with_capacity(sorted.len());
    for s in sorted {
        match bounds.last_mut() {
            Some((doc, _, end)) if *doc == s.doc_id && s.start < *end => {
                *end = (*end).max(s.end);
            }
            _ => bounds.push((&s.doc_id, s.start, s.end)),
        }
    }

    bounds
        .into_iter()
        .map(|(doc_id, start, end)| {
            let doc =
                lookup(doc_id).ok_or_else(|| CorpusError::UnknownDocument(doc_id.to_owned()))?;
            HighlightSpan::from_document(doc, start, end)
        })
        .collect()
}

/// Documents plus the QA pairs that reference them.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    documents: IndexMap<String, Document>,
    qa_pairs: Vec<QaPair>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_documents(docs: impl IntoIterator<Item = Document>) -> Result<Self> {
        let mut corpus = Self::new();
        for d in docs {
            corpus.add_document(d)?;
        }
        Ok(corpus)
    }

    pub fn add_document(&mut self, doc: Document) -> Result<()> {
        if self.documents.contains_key(doc.doc_id()) {
            return Err(CorpusError::DuplicateDocument(doc.doc_id().to_owned()));
        }
        self.documents.insert(doc.doc_id().to_owned(), doc);
        Ok(())
    }

    /// Documents in insertion order.
    pub fn documents(&self) -> impl ExactSizeIterator<Item = &Document> {
        self.documents.values()
    }

    pub fn document_map(&self) -> &IndexMap<String, Document> {
        &self.documents
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.documents.get(doc_id)
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn qa_pairs(&self) -> &[QaPair] {
        &self.qa_pairs
    }

    /// Validates every span of `pairs` against this corpus and attaches them.
    pub fn set_qa_pairs(&mut self, pairs: Vec<QaPair>) -> Result<()> {
        let mut checked = Vec::with_capacity(pairs.len());
        for p in pairs {
            checked.push(self.normalize_pair(p)?);
        }
        self.qa_pairs = checked;
        Ok(())
    }

    /// Validates and merges the spans of one pair.
    pub fn normalize_pair(&self, mut pair: QaPair) -> Result<QaPair> {
        if pair.spans.is_empty() {
            return Err(CorpusError::NoSpans(pair.query_id));
        }
        for span in &pair.spans {
            let doc = self
                .documents
                .get(&span.doc_id)
                .ok_or_else(|| CorpusError::UnknownDocument(span.doc_id.clone()))?;
            validate_span(doc, span.clone()).map_err(|e| match e {
                CorpusError::SpanMismatch(_) => CorpusError::SpanMismatch(pair.query_id.clone()),
                other => other,
            })?;
        }
        pair.spans = merge_spans(|id| self.documents.get(id), &pair.spans)?;
        Ok(pair)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQaLine {
    query_id: String,
    question: String,
    spans: Vec<HighlightSpan>,
    #[serde(default = "default_provenance")]
    provenance: Provenance,
}

fn default_provenance() -> Provenance {
    Provenance::Human
}

/// Reads a JSON Lines QA dataset and validates it against `corpus`.
///
/// Blank lines are skipped; line numbers in errors are 1-based physical
/// lines. Query order follows line order.
pub fn load_qa_dataset<R: BufRead>(reader: R, corpus: &Corpus) -> Result<Vec<QaPair>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CorpusError::Schema {
            line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawQaLine = serde_json::from_str(&line).map_err(|e| CorpusError::Schema {
            line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(raw.query_id.clone()) {
            return Err(CorpusError::DuplicateQuery(raw.query_id));
        }
        out.push(corpus.normalize_pair(QaPair {
            query_id: raw.query_id,
            question: raw.question,
            spans: raw.spans,
            provenance: raw.provenance,
        })?);
    }
    Ok(out)
}

/// Writes one JSON object per pair, newline terminated.
pub fn save_qa_dataset<W: Write>(mut writer: W, pairs: &[QaPair]) -> std::io::Result<()> {
    for p in pairs {
        serde_json::to_writer(&mut writer, p)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub documents: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub doc_id: String,
    pub path: PathBuf,
}

pub const ARCHIVE_SCHEMA_VERSION: u32 = 1;

/// Normalized corpus as written by `chunkbench ingest`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusArchive {
    pub schema_version: u32,
    pub documents: Vec<ArchivedDocument>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchivedDocument {
    pub doc_id: String,
    pub text: String,
}

impl CorpusArchive {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        Self {
            schema_version: ARCHIVE_SCHEMA_VERSION,
            documents: corpus
                .documents()
                .map(|d| ArchivedDocument {
                    doc_id: d.doc_id().to_owned(),
                    text: d.text().to_owned(),
                })
                .collect(),
        }
    }

    pub fn into_corpus(self) -> Result<Corpus> {
        Corpus::from_documents(
            self.documents
                .into_iter()
                .map(|d| Document::new(d.doc_id, d.text))
                .collect::<Result<Vec<_>>>()?,
        )
    }
}

/// Problems found while reading a manifest, one per offending entry.
#[derive(Debug, Default)]
pub struct ManifestReport {
    pub errors: Vec<CorpusError>,
}

/// Loads every document referenced by a manifest. Paths are resolved
/// relative to the manifest's directory.
///
/// All entries are checked before returning, so the error list names every
/// bad file rather than just the first.
pub fn load_manifest(path: &Path, lossy: bool) -> std::result::Result<Corpus, ManifestReport> {
    let mut report = ManifestReport::default();
    let raw = match std::fs::read(path) {
        Ok(b) => b,
        Err(source) => {
            report.errors.push(CorpusError::Io {
                path: path.to_owned(),
                source,
            });
            return Err(report);
        }
    };
    let manifest: Manifest = match serde_json::from_slice(&raw) {
        Ok(m) => m,
        Err(e) => {
            report.errors.push(CorpusError::Manifest {
                path: path.to_owned(),
                message: e.to_string(),
            });
            return Err(report);
        }
    };
    if manifest.documents.is_empty() {
        report.errors.push(CorpusError::Manifest {
            path: path.to_owned(),
            message: "manifest lists no documents".into(),
        });
        return Err(report);
    }

    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut corpus = Corpus::new();
    for entry in manifest.documents {
        let doc_path = base.join(&entry.path);
        let loaded = std::fs::read(&doc_path)
            .map_err(|source| CorpusError::Io {
                path: doc_path.clone(),
                source,
            })
            .and_then(|bytes| ingest_document(&bytes, &entry.doc_id, lossy))
            .and_then(|doc| corpus.add_document(doc));
        if let Err(e) = loaded {
            report.errors.push(e);
        }
    }
    if report.errors.is_empty() {
        Ok(corpus)
    } else {
        Err(report)
    }
}

/// Reads either a manifest (`{"documents": [{"doc_id", "path"}]}`) or an
/// ingest archive (`{"schema_version", "documents": [{"doc_id", "text"}]}`).
pub fn load_corpus(path: &Path) -> std::result::Result<Corpus, ManifestReport> {
    let raw = std::fs::read(path).map_err(|source| ManifestReport {
        errors: vec![CorpusError::Io {
            path: path.to_owned(),
            source,
        }],
    })?;
    let value: serde_json::Value = serde_json::from_slice(&raw).map_err(|e| ManifestReport {
        errors: vec![CorpusError::Manifest {
            path: path.to_owned(),
            message: e.to_string(),
        }],
    })?;
    if value.get("schema_version").is_none() {
        return load_manifest(path, false);
    }
    serde_json::from_value::<CorpusArchive>(value)
        .map_err(|e| CorpusError::Manifest {
            path: path.to_owned(),
            message: e.to_string(),
        })
        .and_then(CorpusArchive::into_corpus)
        .map_err(|e| ManifestReport { errors: vec![e] })
}
