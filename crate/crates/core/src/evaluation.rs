//! End-to-end evaluation: chunk, embed, retrieve top-k, score, aggregate.
//!
//! For one configuration [`Evaluator::evaluate`] chunks every document,
//! embeds all chunks and questions, retrieves the top-k chunks for each
//! question, scores the retrieved tokens against the highlight tokens and
//! aggregates mean/std per metric. Precision Ω comes from the full chunking
//! and is shared by queries with identical highlight tokens.
//! [`Evaluator::sweep`] repeats this over chunk sizes × embedders.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunking::{chunks_to_token_set, ChunkError, ChunkerConfig, Chunking, Tokenizer, WhitespaceTokenizer};
use crate::corpus::{Corpus, Provenance, QaPair};
use crate::metrics::{
    aggregate, precision_omega, precision_omega_literal, AggregateStats, MetricQuadruple,
    OverlapCounts, PrecisionOmegaMode,
};
use crate::retrieval::{
    build_index, Embedder, EmbeddingCache, EmbeddingVector, RetrievalError, VectorIndex,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_K: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("dataset has no queries")]
    DatasetEmpty,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Chunking(#[from] ChunkError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("query {0} references a document missing from the corpus")]
    UnknownDocument(String),
}

impl EvalError {
    pub fn is_provider_failure(&self) -> bool {
        matches!(
            self,
            EvalError::Retrieval(
                RetrievalError::ProviderUnreachable(_)
                    | RetrievalError::ProviderError { .. }
                    | RetrievalError::MalformedResponse(_)
            )
        )
    }
}

/// Which chunks a query may retrieve from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexScope {
    /// One index over every chunk of the corpus.
    #[default]
    Corpus,
    /// Only chunks of the documents the query's highlights live in.
    Document,
}

fn default_k() -> usize {
    DEFAULT_K
}

fn default_dataset_label() -> String {
    "dataset".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub chunk_size: usize,
    #[serde(default)]
    pub chunk_overlap: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub index_scope: IndexScope,
    #[serde(default)]
    pub precision_omega: PrecisionOmegaMode,
    #[serde(default = "default_dataset_label")]
    pub dataset_label: String,
    /// Name of the model that produced the QA pairs. Derived from dataset
    /// provenance when unset.
    #[serde(default)]
    pub model_label: Option<String>,
}

impl EvalConfig {
    pub fn new(chunk_size: usize, k: usize) -> Self {
        Self {
            chunk_size,
            chunk_overlap: 0,
            k,
            index_scope: IndexScope::Corpus,
            precision_omega: PrecisionOmegaMode::Procedural,
            dataset_label: default_dataset_label(),
            model_label: None,
        }
    }

    pub fn with_dataset_label(mut self, label: impl Into<String>) -> Self {
        self.dataset_label = label.into();
        self
    }

    pub fn with_chunk_size(&self, chunk_size: usize) -> Self {
        Self {
            chunk_size,
            ..self.clone()
        }
    }

    pub fn chunker(&self) -> ChunkerConfig {
        ChunkerConfig::new(self.chunk_size).with_overlap(self.chunk_overlap)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.k == 0 {
            return Err(EvalError::InvalidConfig("k must be at least 1".into()));
        }
        self.chunker().validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedChunk {
    pub chunk_id: usize,
    pub doc_id: String,
    pub score: f64,
}

/// Metrics for one query under one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub dataset: String,
    pub embedder: String,
    pub model: String,
    pub chunk_size: usize,
    pub k: usize,
    pub query_id: String,
    pub retrieved: Vec<RetrievedChunk>,
    pub metrics: MetricQuadruple,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowStats {
    pub iou: AggregateStats,
    pub recall: AggregateStats,
    pub precision: AggregateStats,
    pub precision_omega: AggregateStats,
}

impl RowStats {
    pub fn n(&self) -> usize {
        self.iou.n
    }

    pub fn from_records(records: &[EvalRecord]) -> Result<Self, EvalError> {
        let col = |f: fn(&MetricQuadruple) -> f64| {
            let v: Vec<f64> = records.iter().map(|r| f(&r.metrics)).collect();
            aggregate(&v).map_err(|_| EvalError::DatasetEmpty)
        };
        Ok(Self {
            iou: col(|m| m.iou)?,
            recall: col(|m| m.recall)?,
            precision: col(|m| m.precision)?,
            precision_omega: col(|m| m.precision_omega)?,
        })
    }
}

/// One cell of a sweep. Exactly one of `stats` and `error` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dataset: String,
    pub embedder: String,
    pub model: String,
    pub chunk_size: usize,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<RowStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub schema_version: u32,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn new(rows: Vec<SweepRow>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            rows,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("sweep table serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRun {
    pub records: Vec<EvalRecord>,
    pub row: SweepRow,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepOutcome {
    pub table: SweepTable,
    /// Records of all successful cells, in row order.
    pub records: Vec<EvalRecord>,
    /// Errors of the failed cells, in row order.
    pub failures: Vec<EvalError>,
}

#[derive(Serialize)]
struct RecordLine<'a> {
    schema_version: u32,
    #[serde(flatten)]
    record: &'a EvalRecord,
}

/// One JSON object per record, each tagged with `schema_version`.
pub fn write_records<W: Write>(mut w: W, records: &[EvalRecord]) -> std::io::Result<()> {
    for record in records {
        serde_json::to_writer(
            &mut w,
            &RecordLine {
                schema_version: SCHEMA_VERSION,
                record,
            },
        )?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// The generating model named by the dataset's provenance: the single
/// synthetic model if there is one, `human` for all-human data, `mixed`
/// otherwise.
pub fn provenance_label(pairs: &[QaPair]) -> String {
    let labels: BTreeSet<&str> = pairs
        .iter()
        .map(|p| match &p.provenance {
            Provenance::Human => "human",
            Provenance::Synthetic { model, .. } => model.as_str(),
        })
        .collect();
    match labels.len() {
        1 => labels.into_iter().next().unwrap_or("human").to_owned(),
        0 => "human".into(),
        _ => "mixed".into(),
    }
}

/// Runs evaluations of one dataset over one corpus.
pub struct Evaluator<'a> {
    corpus: &'a Corpus,
    queries: &'a [QaPair],
    tokenizer: Box<dyn Tokenizer>,
    cache: Option<EmbeddingCache>,
}

impl<'a> Evaluator<'a> {
    /// Uses the whitespace tokenizer and a fresh embedding cache.
    pub fn new(corpus: &'a Corpus, queries: &'a [QaPair]) -> Self {
        Self {
            corpus,
            queries,
            tokenizer: Box::new(WhitespaceTokenizer),
            cache: Some(EmbeddingCache::new()),
        }
    }

    pub fn with_tokenizer(mut self, tokenizer: impl Tokenizer + 'static) -> Self {
        self.tokenizer = Box::new(tokenizer);
        self
    }

    /// Shares `cache` across evaluators, or disables caching with `None`.
    pub fn with_cache(mut self, cache: Option<EmbeddingCache>) -> Self {
        self.cache = cache;
        self
    }

    fn embed(&self, embedder: &Embedder, texts: &[String]) -> Result<Vec<EmbeddingVector>, EvalError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let vectors = match &self.cache {
            Some(cache) => cache.embed(embedder.provider(), texts)?,
            None => embedder.provider().embed_batch(texts)?,
        };
        if vectors.len() != texts.len() {
            return Err(RetrievalError::LengthMismatch {
                chunks: texts.len(),
                vectors: vectors.len(),
            }
            .into());
        }
        Ok(vectors)
    }

    fn model_label(&self, config: &EvalConfig) -> String {
        config
            .model_label
            .clone()
            .unwrap_or_else(|| provenance_label(self.queries))
    }

    /// Evaluates one configuration.
    pub fn evaluate(&self, config: &EvalConfig, embedder: &Embedder) -> Result<EvalRun, EvalError> {
        config.validate()?;
        if self.queries.is_empty() {
            return Err(EvalError::DatasetEmpty);
        }
        for q in self.queries {
            if q.spans.iter().any(|s| self.corpus.document(&s.doc_id).is_none()) {
                return Err(EvalError::UnknownDocument(q.query_id.clone()));
            }
        }

        let chunking = Chunking::build(self.corpus, self.tokenizer.as_ref(), config.chunker())?;
        let chunks = chunking.chunks();

        let passages: Vec<String> = chunks.iter().map(|c| embedder.passage_text(&c.text)).collect();
        let questions: Vec<String> = self.queries.iter().map(|q| embedder.query_text(&q.question)).collect();
        let chunk_vecs = self.embed(embedder, &passages)?;
        let query_vecs = self.embed(embedder, &questions)?;
        let index = build_index(chunks, chunk_vecs)?;

        let model = self.model_label(config);
        let mut omega_memo = HashMap::new();
        let mut records = Vec::with_capacity(self.queries.len());
        for (query, qvec) in self.queries.iter().zip(&query_vecs) {
            let scoped;
            let search_in: &VectorIndex = match config.index_scope {
                IndexScope::Corpus => &index,
                IndexScope::Document => {
                    let docs: BTreeSet<&str> = query.spans.iter().map(|s| s.doc_id.as_str()).collect();
                    scoped = index.subset(|id| docs.contains(chunks[id].doc_id.as_str()));
                    &scoped
                }
            };
            let hits = search_in.search(qvec, config.k)?;
            let highlights = chunking.highlight_tokens(&query.spans);
            let retrieved = chunks_to_token_set(hits.chunk_ids().map(|id| &chunks[id]));
            let counts = OverlapCounts::of(&highlights, &retrieved);
            let omega = match config.precision_omega {
                PrecisionOmegaMode::Procedural => *omega_memo
                    .entry(highlights.clone())
                    .or_insert_with(|| precision_omega(chunks, &highlights)),
                PrecisionOmegaMode::LiteralFormula => precision_omega_literal(&highlights, &retrieved),
            };
            records.push(EvalRecord {
                dataset: config.dataset_label.clone(),
                embedder: embedder.label().to_owned(),
                model: model.clone(),
                chunk_size: config.chunk_size,
                k: config.k,
                query_id: query.query_id.clone(),
                retrieved: hits
                    .0
                    .iter()
                    .map(|h| RetrievedChunk {
                        chunk_id: h.chunk_id,
                        doc_id: chunks[h.chunk_id].doc_id.clone(),
                        score: h.score,
                    })
                    .collect(),
                metrics: MetricQuadruple {
                    iou: counts.iou(),
                    recall: counts.recall(),
                    precision: counts.precision(),
                    precision_omega: omega,
                },
            });
        }

        let stats = RowStats::from_records(&records)?;
        info!(
            "{} / {} / size {}: IoU {:.4}, recall {:.4}, precision {:.4}, PΩ {:.4}",
            config.dataset_label,
            embedder.label(),
            config.chunk_size,
            stats.iou.mean,
            stats.recall.mean,
            stats.precision.mean,
            stats.precision_omega.mean
        );
        Ok(EvalRun {
            row: SweepRow {
                dataset: config.dataset_label.clone(),
                embedder: embedder.label().to_owned(),
                model,
                chunk_size: config.chunk_size,
                k: config.k,
                stats: Some(stats),
                error: None,
            },
            records,
        })
    }

    /// Evaluates every (embedder, chunk size) pair, running up to
    /// `parallelism` cells at once. Rows come out ordered by embedder then
    /// chunk size, in the order given. A failing cell becomes a row with
    /// `error` set; the other cells still run.
    pub fn sweep(
        &self,
        base: &EvalConfig,
        chunk_sizes: &[usize],
        embedders: &[Embedder],
        parallelism: usize,
    ) -> Result<SweepOutcome, EvalError> {
        if chunk_sizes.is_empty() {
            return Err(EvalError::InvalidConfig("chunk_sizes is empty".into()));
        }
        if embedders.is_empty() {
            return Err(EvalError::InvalidConfig("no embedding providers".into()));
        }
        if self.queries.is_empty() {
            return Err(EvalError::DatasetEmpty);
        }
        base.with_chunk_size(chunk_sizes[0]).validate()?;

        let cells: Vec<(&Embedder, EvalConfig)> = embedders
            .iter()
            .flat_map(|e| chunk_sizes.iter().map(move |&s| (e, base.with_chunk_size(s))))
            .collect();
        let results: Mutex<Vec<Option<Result<EvalRun, EvalError>>>> =
            Mutex::new(vec![None; cells.len()]);
        let next = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..parallelism.clamp(1, cells.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some((embedder, config)) = cells.get(i) else { break };
                    let r = self.evaluate(config, embedder);
                    results.lock().expect("results lock poisoned")[i] = Some(r);
                });
            }
        });

        let model = self.model_label(base);
        let mut out = SweepOutcome {
            table: SweepTable::new(Vec::with_capacity(cells.len())),
            records: Vec::new(),
            failures: Vec::new(),
        };
        let results = results.into_inner().expect("results lock poisoned");
        for ((embedder, config), r) in cells.iter().zip(results) {
            match r.expect("every cell ran") {
                Ok(run) => {
                    out.records.extend(run.records);
                    out.table.rows.push(run.row);
                }
                Err(e) => {
                    warn!(
                        "cell {} / size {} failed: {e}",
                        embedder.label(),
                        config.chunk_size
                    );
                    out.table.rows.push(SweepRow {
                        dataset: config.dataset_label.clone(),
                        embedder: embedder.label().to_owned(),
                        model: model.clone(),
                        chunk_size: config.chunk_size,
                        k: config.k,
                        stats: None,
                        error: Some(e.to_string()),
                    });
                    out.failures.push(e);
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, HighlightSpan};
    use crate::retrieval::{MockEmbedder, ScriptedEmbedder};

    fn corpus() -> Corpus {
        Corpus::from_documents([
            Document::new("a", "red apples grow on tall trees in the orchard").unwrap(),
            Document::new("b", "blue boats sail across the quiet harbor at dawn").unwrap(),
        ])
        .unwrap()
    }

    fn query(c: &Corpus, id: &str, q: &str, doc: &str, start: usize, end: usize) -> QaPair {
        QaPair {
            query_id: id.into(),
            question: q.into(),
            spans: vec![HighlightSpan::from_document(c.document(doc).unwrap(), start, end).unwrap()],
            provenance: Provenance::Human,
        }
    }

    #[test]
    fn perfect_retrieval() {
        let c = corpus();
        // "red apples grow on tall" is chunk 0 at size 5
        let qs = vec![query(&c, "q", "Q", "a", 0, 23)];
        let chunking = Chunking::build(&c, &WhitespaceTokenizer, ChunkerConfig::new(5)).unwrap();
        let mut scripted = ScriptedEmbedder::new("scripted").with("Q", vec![1.0, 0.0]);
        for ch in chunking.chunks() {
            let v = if ch.chunk_id == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
            scripted = scripted.with(ch.text.clone(), v);
        }
        let run = Evaluator::new(&c, &qs)
            .evaluate(&EvalConfig::new(5, 1), &Embedder::new(scripted))
            .unwrap();
        let m = run.records[0].metrics;
        assert_eq!((m.recall, m.precision, m.iou, m.precision_omega), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn retrieving_everything_gives_full_recall() {
        let c = corpus();
        let qs = vec![query(&c, "q1", "apples?", "a", 4, 16), query(&c, "q2", "boats", "b", 5, 10)];
        let run = Evaluator::new(&c, &qs)
            .evaluate(&EvalConfig::new(3, 100), &Embedder::new(MockEmbedder::new(16)))
            .unwrap();
        assert!(run.records.iter().all(|r| r.metrics.recall == 1.0));
        assert_eq!(run.row.stats.unwrap().n(), 2);
    }

    #[test]
    fn document_scope_restricts_candidates() {
        let c = corpus();
        let qs = vec![query(&c, "q", "blue boats", "b", 0, 10)];
        let mut cfg = EvalConfig::new(2, 100);
        cfg.index_scope = IndexScope::Document;
        let run = Evaluator::new(&c, &qs)
            .evaluate(&cfg, &Embedder::new(MockEmbedder::new(16)))
            .unwrap();
        assert!(run.records[0].retrieved.iter().all(|r| r.doc_id == "b"));
    }

    #[test]
    fn config_errors() {
        let c = corpus();
        let qs = vec![query(&c, "q", "x", "a", 0, 3)];
        let ev = Evaluator::new(&c, &qs);
        let e = Embedder::new(MockEmbedder::new(4));
        assert!(matches!(ev.evaluate(&EvalConfig::new(0, 1), &e), Err(EvalError::Chunking(_))));
        assert!(matches!(ev.evaluate(&EvalConfig::new(1, 0), &e), Err(EvalError::InvalidConfig(_))));
        assert_eq!(
            Evaluator::new(&c, &[]).evaluate(&EvalConfig::new(1, 1), &e),
            Err(EvalError::DatasetEmpty)
        );
        assert!(matches!(
            ev.sweep(&EvalConfig::new(5, 1), &[], std::slice::from_ref(&e), 1),
            Err(EvalError::InvalidConfig(_))
        ));
    }

    #[test]
    fn sweep_shape_and_failure_isolation() {
        let c = corpus();
        let qs = vec![query(&c, "q", "apples", "a", 4, 10)];
        let ev = Evaluator::new(&c, &qs);
        let embedders = [
            Embedder::new(MockEmbedder::new(8)),
            Embedder::new(ScriptedEmbedder::new("broken")),
        ];
        let out = ev.sweep(&EvalConfig::new(5, 1), &[5, 10], &embedders, 3).unwrap();
        let keys: Vec<_> = out
            .table
            .rows
            .iter()
            .map(|r| (r.embedder.as_str(), r.chunk_size, r.error.is_some()))
            .collect();
        assert_eq!(
            keys,
            [("mock", 5, false), ("mock", 10, false), ("broken", 5, true), ("broken", 10, true)]
        );
        assert_eq!(out.records.len(), 2);
    }

    #[test]
    fn provenance_labels() {
        let c = corpus();
        let mut q = query(&c, "q", "x", "a", 0, 3);
        assert_eq!(provenance_label(std::slice::from_ref(&q)), "human");
        q.provenance = Provenance::Synthetic {
            model: "phi-4".into(),
            timestamp: "t".into(),
            template: None,
            seed: None,
        };
        assert_eq!(provenance_label(std::slice::from_ref(&q)), "phi-4");
        let h = query(&c, "h", "x", "a", 0, 3);
        assert_eq!(provenance_label(&[q, h]), "mixed");
    }

    #[test]
    fn records_are_tagged_with_schema_version() {
        let c = corpus();
        let qs = vec![query(&c, "q", "apples", "a", 4, 10)];
        let run = Evaluator::new(&c, &qs)
            .evaluate(&EvalConfig::new(5, 1), &Embedder::new(MockEmbedder::new(8)))
            .unwrap();
        let mut buf = Vec::new();
        write_records(&mut buf, &run.records).unwrap();
        let line: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(line["schema_version"], 1);
        assert_eq!(line["query_id"], "q");
        assert!(line["metrics"]["precision_omega"].is_number());
    }
}
