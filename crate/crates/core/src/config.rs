//! TOML configuration for the command-line tool.
//!
//! ```toml
//! out = "results"
//! parallelism = 2
//!
//! [data]
//! corpus = "data/manifest.json"   # manifest or ingested archive
//! dataset = "data/dataset.jsonl"
//! label = "finance"
//!
//! [evaluation]
//! chunk_size = 10
//! chunk_sizes = [5, 10, 15, 20]
//! k = 5
//!
//! [[embedders]]
//! kind = "http_ollama"
//! endpoint = "${OLLAMA_URL}"
//! model_name = "bge-m3"
//!
//! [generation]
//! num_questions = 5
//!
//! [generation.provider]
//! kind = "openai_compatible"
//! endpoint = "http://localhost:8000"
//! model_name = "deepseek-r1"
//! api_key_env = "LLM_API_KEY"
//!
//! [report]
//! format = "markdown"
//! ```
//!
//! String values may reference environment variables as `${NAME}`; `$$`
//! is a literal dollar sign. Relative paths resolve against the config
//! file's directory. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::IndexScope;
use crate::metrics::PrecisionOmegaMode;
use crate::reporting::ReportSpec;
use crate::retrieval::EmbeddingProviderConfig;
use crate::synthgen::chat::ChatProviderConfig;
use crate::synthgen::DEFAULT_TEMPLATE_ID;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("environment variable {0} referenced in config is not set")]
    MissingEnv(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub out: Option<PathBuf>,
    pub parallelism: Option<usize>,
    pub seed: Option<i64>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub embedders: Vec<EmbeddingProviderConfig>,
    #[serde(default)]
    pub generation: GenerationSection,
    #[serde(default)]
    pub report: Option<ReportSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub corpus: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub label: Option<String>,
    /// Replace invalid UTF-8 instead of rejecting the document.
    #[serde(default)]
    pub lossy: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    pub chunk_size: Option<usize>,
    pub chunk_sizes: Option<Vec<usize>>,
    pub k: Option<usize>,
    #[serde(default)]
    pub chunk_overlap: usize,
    #[serde(default)]
    pub index_scope: IndexScope,
    #[serde(default)]
    pub precision_omega: PrecisionOmegaMode,
    pub model_label: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSection {
    pub num_questions: Option<usize>,
    pub max_spans_per_question: Option<usize>,
    pub prompt_template_id: Option<String>,
    /// Provenance timestamp. Live providers default to the current time,
    /// scripted ones to the Unix epoch so their output is reproducible.
    pub timestamp: Option<String>,
    pub max_retries: Option<u32>,
    pub provider: Option<ChatSection>,
}

impl GenerationSection {
    pub fn template_id(&self) -> &str {
        self.prompt_template_id.as_deref().unwrap_or(DEFAULT_TEMPLATE_ID)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChatSection {
    OpenaiCompatible(ChatProviderConfig),
    /// Replays replies from a JSON file holding an array of strings.
    Scripted(ScriptedChatConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedChatConfig {
    pub script: PathBuf,
    #[serde(default = "scripted_model")]
    pub model_name: String,
}

fn scripted_model() -> String {
    "scripted".into()
}

/// Replaces `${NAME}` with the value of environment variable `NAME`.
pub fn expand_env(s: &str, lookup: &dyn Fn(&str) -> Option<String>) -> Result<String, ConfigError> {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('$') {
        out.push_str(&rest[..i]);
        let tail = &rest[i..];
        if let Some(after) = tail.strip_prefix("$$") {
            out.push('$');
            rest = after;
        } else if let Some(body) = tail.strip_prefix("${") {
            let end = body
                .find('}')
                .ok_or_else(|| ConfigError::Parse(format!("unterminated ${{ in {s:?}")))?;
            let name = &body[..end];
            out.push_str(&lookup(name).ok_or_else(|| ConfigError::MissingEnv(name.into()))?);
            rest = &body[end + 1..];
        } else {
            out.push('$');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    Ok(out)
}

fn expand_value(v: &mut toml::Value, lookup: &dyn Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
    match v {
        toml::Value::String(s) => *s = expand_env(s, lookup)?,
        toml::Value::Array(a) => {
            for x in a {
                expand_value(x, lookup)?;
            }
        }
        toml::Value::Table(t) => {
            for (_, x) in t.iter_mut() {
                expand_value(x, lookup)?;
            }
        }
        _ => {}
    }
    Ok(())
}

impl CliConfig {
    /// Parses config text, expanding `${VAR}` through `lookup`.
    pub fn parse(text: &str, lookup: &dyn Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut value: toml::Value = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        expand_value(&mut value, lookup)?;
        value.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))
    }

    /// Reads a config file using the process environment.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut cfg = Self::parse(&text, &|k| std::env::var(k).ok())?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.out, &mut self.data.corpus, &mut self.data.dataset].into_iter().flatten() {
            fix(p);
        }
        if let Some(ChatSection::Scripted(s)) = &mut self.generation.provider {
            fix(&mut s.script);
        }
    }
}
