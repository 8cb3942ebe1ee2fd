//! Pulling the answer array out of free-form model output.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::SynthError;

/// One answer as the model wrote it, before anchoring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawModelAnswer {
    pub question: String,
    pub excerpts: Vec<String>,
}

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";

/// Removes reasoning segments delimited by `<think>`/`</think>`.
///
/// A dangling close tag drops everything before it (some servers strip the
/// opening tag); a dangling open tag drops everything after it.
pub fn strip_thinking(content: &str) -> String {
    let mut rest = content;
    if let (Some(close), open) = (rest.find(THINK_CLOSE), rest.find(THINK_OPEN)) {
        if open.is_none_or(|o| close < o) {
            rest = &rest[close + THINK_CLOSE.len()..];
        }
    }
    let mut out = String::with_capacity(rest.len());
    while let Some(open) = rest.find(THINK_OPEN) {
        out.push_str(&rest[..open]);
        match rest[open..].find(THINK_CLOSE) {
            Some(close) => rest = &rest[open + close + THINK_CLOSE.len()..],
            None => {
                rest = "";
                break;
            }
        }
    }
    out.push_str(rest);
    out
}

/// The first well-formed JSON array in `content` (after stripping
/// reasoning) that reads as a list of answers. Prose and code fences
/// around it are ignored.
pub fn extract_answers(content: &str) -> Result<Vec<RawModelAnswer>, SynthError> {
    let text = strip_thinking(content);
    let mut saw_array = false;
    for (pos, _) in text.match_indices('[') {
        let mut stream = serde_json::Deserializer::from_str(&text[pos..]).into_iter::<Value>();
        if let Some(Ok(value @ Value::Array(_))) = stream.next() {
            saw_array = true;
            if let Ok(answers) = serde_json::from_value::<Vec<RawModelAnswer>>(value) {
                return Ok(answers);
            }
        }
    }
    Err(SynthError::MalformedModelOutput(if saw_array {
        "no JSON array of {question, excerpts} objects found".into()
    } else {
        "no JSON array found".into()
    }))
}
