//! Synthesis of span-anchored QA pairs through a chat model.
//!
//! The model is asked for `[{"question", "excerpts": [..]}]`. Every excerpt
//! must be found verbatim in the source document (whitespace runs compare
//! equal); an answer with any excerpt that cannot be anchored is rejected as
//! a whole. Each answer the model returns is either emitted or listed in the
//! rejection report, never silently dropped.

pub mod anchor;
pub mod chat;
mod parse;
mod prompts;

use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{merge_spans, Document, HighlightSpan, Provenance, QaPair};

pub use anchor::{anchor_excerpt, collapse_whitespace, AnchorError, Anchored};
pub use chat::{
    ChatMessage, ChatProvider, ChatProviderConfig, OpenAiChatClient, Role, ScriptedChatProvider,
};
pub use parse::{extract_answers, strip_thinking, RawModelAnswer};
pub use prompts::{PromptTemplate, DEFAULT_TEMPLATE_ID};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("chat provider unreachable: {0}")]
    ProviderUnreachable(String),
    #[error("chat provider returned {status}: {body}")]
    ProviderError { status: u16, body: String },
    #[error("model output could not be parsed: {0}")]
    MalformedModelOutput(String),
    #[error("no QA pair survived validation for {doc_id} ({} rejected)", rejections.len())]
    ZeroYield {
        doc_id: String,
        rejections: Vec<Rejection>,
    },
    #[error("unknown prompt template {0}")]
    UnknownTemplate(String),
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
}

impl SynthError {
    pub fn is_provider_failure(&self) -> bool {
        matches!(
            self,
            SynthError::ProviderUnreachable(_) | SynthError::ProviderError { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub num_questions: usize,
    /// Upper bound on excerpts per answer; above 1 allows multi-hop pairs.
    pub max_spans_per_question: usize,
    pub prompt_template_id: String,
    /// Recorded in provenance.
    pub seed: i64,
    /// Recorded in provenance.
    pub timestamp: String,
    /// Extra model rounds after malformed output or rejected answers.
    pub max_retries: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            num_questions: 5,
            max_spans_per_question: 3,
            prompt_template_id: DEFAULT_TEMPLATE_ID.into(),
            seed: 0,
            timestamp: "1970-01-01T00:00:00Z".into(),
            max_retries: 2,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.num_questions == 0 {
            return Err(SynthError::InvalidRequest("num_questions must be at least 1".into()));
        }
        if self.max_spans_per_question == 0 {
            return Err(SynthError::InvalidRequest(
                "max_spans_per_question must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GenerationRequest<'a> {
    pub doc: &'a Document,
    pub params: GenerationParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RejectionReason {
    ExcerptNotFound { excerpt: String },
    EmptyExcerpt,
    EmptyQuestion,
    NoExcerpts,
    TooManyExcerpts { count: usize, max: usize },
    Duplicate,
    OverQuota,
}

/// One model answer that did not become a QA pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub doc_id: String,
    pub question: String,
    pub attempt: u32,
    #[serde(flatten)]
    pub reason: RejectionReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOutcome {
    pub pairs: Vec<QaPair>,
    pub rejections: Vec<Rejection>,
    /// Answers successfully parsed from model output, over all attempts.
    pub parsed_answers: usize,
    pub attempts: u32,
    /// Excerpts that matched more than one location.
    pub ambiguous_excerpts: usize,
}

/// Normalized form used for duplicate detection: case-folded, whitespace
/// collapsed and trimmed.
pub fn question_key(question: &str) -> String {
    collapse_whitespace(&question.to_lowercase())
}

/// Keeps the first pair for each normalized question, preserving order.
pub fn dedupe(pairs: Vec<QaPair>) -> Vec<QaPair> {
    dedupe_split(pairs).0
}

fn dedupe_split(pairs: Vec<QaPair>) -> (Vec<QaPair>, Vec<QaPair>) {
    let mut seen = HashSet::new();
    pairs
        .into_iter()
        .partition(|p| seen.insert(question_key(&p.question)))
}

fn anchor_answer(
    doc: &Document,
    answer: &RawModelAnswer,
    max_spans: usize,
    ambiguous: &mut usize,
) -> Result<Vec<HighlightSpan>, RejectionReason> {
    if answer.question.trim().is_empty() {
        return Err(RejectionReason::EmptyQuestion);
    }
    if answer.excerpts.is_empty() {
        return Err(RejectionReason::NoExcerpts);
    }
    if answer.excerpts.len() > max_spans {
        return Err(RejectionReason::TooManyExcerpts {
            count: answer.excerpts.len(),
            max: max_spans,
        });
    }
    let mut spans = Vec::with_capacity(answer.excerpts.len());
    for excerpt in &answer.excerpts {
        match anchor_excerpt(doc, excerpt) {
            Ok(a) => {
                if a.is_ambiguous() {
                    *ambiguous += 1;
                }
                spans.push(a.span);
            }
            Err(AnchorError::Empty) => return Err(RejectionReason::EmptyExcerpt),
            Err(AnchorError::NotFound { excerpt, .. }) => {
                return Err(RejectionReason::ExcerptNotFound { excerpt })
            }
        }
    }
    Ok(merge_spans(|_| Some(doc), &spans).expect("anchored spans are valid"))
}

/// Asks `provider` for QA pairs about one document and keeps only those
/// whose excerpts anchor verbatim.
///
/// Another round is requested (up to `max_retries`) when output is
/// unparseable, or when answers were rejected and the quota is not yet
/// met. A provider failure on the first round is an error; on later rounds
/// it ends generation with what has been collected.
pub fn generate_qa(
    provider: &dyn ChatProvider,
    request: &GenerationRequest<'_>,
) -> Result<GenerationOutcome, SynthError> {
    let params = &request.params;
    params.validate()?;
    let doc = request.doc;
    let template = PromptTemplate::get(&params.prompt_template_id)
        .ok_or_else(|| SynthError::UnknownTemplate(params.prompt_template_id.clone()))?;
    let messages = template.render(doc, params.num_questions, params.max_spans_per_question);

    let mut accepted: Vec<QaPair> = Vec::new();
    let mut rejections: Vec<Rejection> = Vec::new();
    let mut parsed_answers = 0;
    let mut ambiguous_excerpts = 0;
    let mut last_parse_error = None;
    let mut attempts = 0;

    for attempt in 0..=params.max_retries {
        attempts = attempt + 1;
        let content = match provider.complete(&messages) {
            Ok(c) => c,
            Err(e) if attempt == 0 => return Err(e),
            Err(e) => {
                warn!("{}: giving up after round {attempt}: {e}", doc.doc_id());
                attempts = attempt;
                break;
            }
        };
        let answers = match extract_answers(&content) {
            Ok(a) => a,
            Err(e) => {
                warn!("{}: round {attempt}: {e}", doc.doc_id());
                last_parse_error = Some(e);
                continue;
            }
        };
        parsed_answers += answers.len();
        let mut rejected_now = 0;
        for answer in answers {
            match anchor_answer(
                doc,
                &answer,
                params.max_spans_per_question,
                &mut ambiguous_excerpts,
            ) {
                Ok(spans) => accepted.push(QaPair {
                    query_id: String::new(),
                    question: answer.question.trim().to_owned(),
                    spans,
                    provenance: Provenance::Synthetic {
                        model: provider.model_name().to_owned(),
                        timestamp: params.timestamp.clone(),
                        template: Some(template.id.to_owned()),
                        seed: Some(params.seed),
                    },
                }),
                Err(reason) => {
                    rejected_now += 1;
                    rejections.push(Rejection {
                        doc_id: doc.doc_id().to_owned(),
                        question: answer.question,
                        attempt,
                        reason,
                    });
                }
            }
        }
        let unique = accepted
            .iter()
            .map(|p| question_key(&p.question))
            .collect::<HashSet<_>>()
            .len();
        if unique >= params.num_questions || rejected_now == 0 {
            break;
        }
    }

    if parsed_answers == 0 {
        if let Some(e) = last_parse_error {
            return Err(e);
        }
    }

    let (mut kept, dups) = dedupe_split(accepted);
    rejections.extend(dups.into_iter().map(|p| Rejection {
        doc_id: doc.doc_id().to_owned(),
        question: p.question,
        attempt: 0,
        reason: RejectionReason::Duplicate,
    }));
    if kept.len() > params.num_questions {
        rejections.extend(kept.split_off(params.num_questions).into_iter().map(|p| {
            Rejection {
                doc_id: doc.doc_id().to_owned(),
                question: p.question,
                attempt: 0,
                reason: RejectionReason::OverQuota,
            }
        }));
    }
    for (i, p) in kept.iter_mut().enumerate() {
        p.query_id = format!("{}-q{:03}", doc.doc_id(), i + 1);
    }

    if kept.is_empty() {
        return Err(SynthError::ZeroYield {
            doc_id: doc.doc_id().to_owned(),
            rejections,
        });
    }
    if kept.len() < params.num_questions {
        info!(
            "{}: {} of {} requested pairs",
            doc.doc_id(),
            kept.len(),
            params.num_questions
        );
    }
    Ok(GenerationOutcome {
        pairs: kept,
        rejections,
        parsed_answers,
        attempts,
        ambiguous_excerpts,
    })
}

/// Result of running [`generate_qa`] over many documents.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusGeneration {
    pub pairs: Vec<QaPair>,
    pub rejections: Vec<Rejection>,
    pub parsed_answers: usize,
    /// Documents for which nothing survived.
    pub zero_yield: Vec<String>,
}

/// Runs generation for each document with at most `parallelism` jobs in
/// flight. Output is in document order regardless of scheduling. The first
/// provider failure (in document order) aborts the run.
pub fn generate_corpus(
    provider: &dyn ChatProvider,
    docs: &[&Document],
    params: &GenerationParams,
    parallelism: usize,
) -> Result<CorpusGeneration, SynthError> {
    params.validate()?;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<GenerationOutcome, SynthError>>>> =
        Mutex::new(vec![None; docs.len()]);
    let workers = parallelism.clamp(1, docs.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(doc) = docs.get(i) else { break };
                let request = GenerationRequest {
                    doc,
                    params: params.clone(),
                };
                let r = generate_qa(provider, &request);
                slots.lock().expect("slot lock poisoned")[i] = Some(r);
            });
        }
    });

    let mut out = CorpusGeneration::default();
    for slot in slots.into_inner().expect("slot lock poisoned") {
        match slot.expect("every document was processed") {
            Ok(o) => {
                out.parsed_answers += o.parsed_answers;
                out.pairs.extend(o.pairs);
                out.rejections.extend(o.rejections);
            }
            Err(SynthError::ZeroYield { doc_id, rejections }) => {
                out.parsed_answers += rejections.len();
                out.zero_yield.push(doc_id);
                out.rejections.extend(rejections);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
