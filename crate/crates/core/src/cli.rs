//! The `chunkbench` command line.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success (a sweep with some failed cells still counts) |
//! | 1 | usage or configuration error |
//! | 2 | data error: unreadable or invalid corpus, dataset or summary |
//! | 3 | generation produced no valid QA pair |
//! | 4 | embedding or chat provider failure |

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::warn;
use thiserror::Error;

use crate::config::{ChatSection, CliConfig, ConfigError};
use crate::corpus::{load_corpus, load_manifest, load_qa_dataset, save_qa_dataset, Corpus, CorpusArchive, ManifestReport, QaPair};
use crate::evaluation::{write_records, EvalConfig, EvalError, Evaluator, SweepTable, DEFAULT_K};
use crate::reporting::{emit, ReportFormat, ReportSpec};
use crate::retrieval::{Embedder, EmbeddingProviderConfig};
use crate::synthgen::chat::{ChatProvider, OpenAiChatClient, ScriptedChatProvider};
use crate::synthgen::{generate_corpus, GenerationParams, SynthError};
use crate::util::write_atomic;

const SCRIPTED_TIMESTAMP: &str = "1970-01-01T00:00:00Z";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    ZeroYield(String),
    #[error("{0}")]
    Provider(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::ZeroYield(_) => 3,
            CliError::Provider(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            e if e.is_provider_failure() => CliError::Provider(e.to_string()),
            e @ (EvalError::InvalidConfig(_) | EvalError::Chunking(_)) => CliError::Usage(e.to_string()),
            EvalError::Retrieval(crate::retrieval::RetrievalError::Config(m)) => CliError::Usage(m),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            e if e.is_provider_failure() => CliError::Provider(e.to_string()),
            e @ (SynthError::InvalidRequest(_) | SynthError::UnknownTemplate(_)) => CliError::Usage(e.to_string()),
            e @ SynthError::ZeroYield { .. } => CliError::ZeroYield(e.to_string()),
            e => CliError::Provider(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn manifest_err(r: ManifestReport) -> CliError {
    let lines: Vec<String> = r.errors.iter().map(|e| format!("  {e}")).collect();
    CliError::Data(format!("corpus validation failed:\n{}", lines.join("\n")))
}

#[derive(Debug, Parser)]
#[command(name = "chunkbench", version, about = "Token-level evaluation of chunking and retrieval")]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Concurrent sweep cells or generation jobs.
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    /// Seed recorded in generation provenance.
    #[arg(long, global = true)]
    pub seed: Option<i64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a manifest's documents and write a normalized corpus archive.
    Ingest(IngestArgs),
    /// Synthesize span-anchored QA pairs with a chat model.
    Generate(GenerateArgs),
    /// Evaluate one chunk size against every configured embedder.
    Evaluate(EvalArgs),
    /// Evaluate every chunk size against every configured embedder.
    Sweep(SweepArgs),
    /// Render a summary JSON as CSV, JSON or Markdown.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Manifest JSON listing `{doc_id, path}` entries.
    pub manifest: PathBuf,
    /// Replace invalid UTF-8 instead of failing.
    #[arg(long)]
    pub lossy: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Corpus manifest or archive.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Questions requested per document.
    #[arg(short = 'n', long)]
    pub num_questions: Option<usize>,
    /// Replay chat replies from a JSON array of strings instead of calling a model.
    #[arg(long)]
    pub script: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Corpus manifest or archive.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// QA dataset (JSON Lines).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Dataset name used in result tables.
    #[arg(long)]
    pub label: Option<String>,
    /// Number of chunks retrieved per query.
    #[arg(short, long)]
    pub k: Option<usize>,
    /// Markdown printed to stdout; `--quiet` suppresses it.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Chunk size in tokens.
    #[arg(long)]
    pub chunk_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated chunk sizes.
    #[arg(long, value_delimiter = ',')]
    pub chunk_sizes: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Summary JSON written by `evaluate` or `sweep`.
    pub summary: PathBuf,
    #[arg(long)]
    pub format: Option<ReportFormat>,
    /// Decimal places, 1 to 10.
    #[arg(long)]
    pub float_precision: Option<usize>,
    /// Do not bold the best mean per column.
    #[arg(long)]
    pub no_bold: bool,
    /// Also bold the lowest std per column.
    #[arg(long)]
    pub bold_lowest_std: bool,
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_from<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = write!(stderr, "{e}");
            return 1;
        }
        Err(e) => {
            // --help and --version
            let _ = write!(stdout, "{e}");
            return 0;
        }
    };
    match run(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    let ctx = Context {
        out: cli.out.clone().or(cfg.out.clone()).unwrap_or_else(|| PathBuf::from(".")),
        parallelism: cli.parallelism.or(cfg.parallelism).unwrap_or(1),
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
        cfg,
    };
    if ctx.parallelism == 0 {
        return Err(CliError::Usage("--parallelism must be at least 1".into()));
    }
    match cli.command {
        Command::Ingest(a) => ingest(&ctx, a, stdout),
        Command::Generate(a) => generate(&ctx, a, stdout),
        Command::Evaluate(a) => {
            let size = a.chunk_size.or(ctx.cfg.evaluation.chunk_size).ok_or_else(|| {
                CliError::Usage("no chunk size: pass --chunk-size or set evaluation.chunk_size".into())
            })?;
            evaluate(&ctx, &a.data, &[size], stdout)
        }
        Command::Sweep(a) => {
            let sizes = a
                .chunk_sizes
                .or(ctx.cfg.evaluation.chunk_sizes.clone())
                .ok_or_else(|| CliError::Usage("no chunk sizes: pass --chunk-sizes or set evaluation.chunk_sizes".into()))?;
            evaluate(&ctx, &a.data, &sizes, stdout)
        }
        Command::Report(a) => report(&ctx, a, stdout),
    }
}

struct Context {
    cfg: CliConfig,
    out: PathBuf,
    parallelism: usize,
    seed: i64,
}

impl Context {
    fn out_file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn corpus(&self, flag: &Option<PathBuf>) -> Result<Corpus, CliError> {
        let path = flag
            .clone()
            .or(self.cfg.data.corpus.clone())
            .ok_or_else(|| CliError::Usage("no corpus: pass --corpus or set data.corpus".into()))?;
        load_corpus(&path).map_err(manifest_err)
    }
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn ingest(ctx: &Context, a: IngestArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let corpus = load_manifest(&a.manifest, a.lossy || ctx.cfg.data.lossy).map_err(manifest_err)?;
    let mut bytes = serde_json::to_vec_pretty(&CorpusArchive::from_corpus(&corpus)).expect("archive serializes");
    bytes.push(b'\n');
    let path = ctx.out_file("corpus.json");
    write_out(&path, &bytes)?;
    let _ = writeln!(stdout, "wrote {} documents to {}", corpus.len(), path.display());
    Ok(())
}

fn generate(ctx: &Context, a: GenerateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let g = &ctx.cfg.generation;
    let defaults = GenerationParams::default();
    let mut params = GenerationParams {
        num_questions: a.num_questions.or(g.num_questions).unwrap_or(defaults.num_questions),
        max_spans_per_question: g.max_spans_per_question.unwrap_or(defaults.max_spans_per_question),
        prompt_template_id: g.template_id().to_owned(),
        seed: ctx.seed,
        timestamp: String::new(),
        max_retries: g.max_retries.unwrap_or(defaults.max_retries),
    };
    params.validate()?;

    let section = match (&a.script, &g.provider) {
        (Some(p), _) => ChatSection::Scripted(crate::config::ScriptedChatConfig {
            script: p.clone(),
            model_name: "scripted".into(),
        }),
        (None, Some(s)) => s.clone(),
        (None, None) => {
            return Err(CliError::Usage(
                "no chat provider: pass --script or set generation.provider".into(),
            ))
        }
    };
    let mut parallelism = ctx.parallelism;
    let provider: Box<dyn ChatProvider> = match section {
        ChatSection::OpenaiCompatible(c) => {
            params.timestamp = g.timestamp.clone().unwrap_or_else(|| {
                chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
            });
            Box::new(OpenAiChatClient::new(c)?)
        }
        ChatSection::Scripted(s) => {
            params.timestamp = g.timestamp.clone().unwrap_or_else(|| SCRIPTED_TIMESTAMP.into());
            let raw = std::fs::read_to_string(&s.script).map_err(|e| io_err(&s.script, e))?;
            let replies: Vec<String> = serde_json::from_str(&raw).map_err(|e| {
                CliError::Usage(format!("{}: expected a JSON array of strings: {e}", s.script.display()))
            })?;
            // replies are consumed in order, so documents must be too
            parallelism = 1;
            Box::new(ScriptedChatProvider::new(s.model_name, replies))
        }
    };

    let corpus = ctx.corpus(&a.corpus)?;
    let docs: Vec<_> = corpus.documents().collect();
    let result = generate_corpus(provider.as_ref(), &docs, &params, parallelism)?;

    let mut rejections = Vec::new();
    for r in &result.rejections {
        serde_json::to_writer(&mut rejections, r).expect("rejection serializes");
        rejections.push(b'\n');
    }
    write_out(&ctx.out_file("rejections.jsonl"), &rejections)?;
    if result.pairs.is_empty() {
        return Err(CliError::ZeroYield(format!(
            "no QA pair survived validation ({} answers rejected)",
            result.rejections.len()
        )));
    }
    for doc in &result.zero_yield {
        warn!("no QA pair for document {doc}");
    }
    let mut dataset = Vec::new();
    save_qa_dataset(&mut dataset, &result.pairs).expect("in-memory write");
    let path = ctx.out_file("dataset.jsonl");
    write_out(&path, &dataset)?;
    let _ = writeln!(
        stdout,
        "wrote {} QA pairs to {} ({} of {} answers rejected)",
        result.pairs.len(),
        path.display(),
        result.rejections.len(),
        result.parsed_answers
    );
    Ok(())
}

fn load_dataset(ctx: &Context, flag: &Option<PathBuf>, corpus: &Corpus) -> Result<Vec<QaPair>, CliError> {
    let path = flag
        .clone()
        .or(ctx.cfg.data.dataset.clone())
        .ok_or_else(|| CliError::Usage("no dataset: pass --dataset or set data.dataset".into()))?;
    let f = File::open(&path).map_err(|e| io_err(&path, e))?;
    load_qa_dataset(BufReader::new(f), corpus).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn evaluate(ctx: &Context, a: &DataArgs, sizes: &[usize], stdout: &mut dyn Write) -> Result<(), CliError> {
    let ev_cfg = &ctx.cfg.evaluation;
    let mut base = EvalConfig::new(sizes.first().copied().unwrap_or(1), a.k.or(ev_cfg.k).unwrap_or(DEFAULT_K));
    base.chunk_overlap = ev_cfg.chunk_overlap;
    base.index_scope = ev_cfg.index_scope;
    base.precision_omega = ev_cfg.precision_omega;
    base.model_label = ev_cfg.model_label.clone();
    if let Some(label) = a.label.clone().or(ctx.cfg.data.label.clone()) {
        base.dataset_label = label;
    }
    if let Some(bad) = sizes.iter().find(|&&s| s == 0) {
        return Err(CliError::Usage(format!("chunk size must be at least 1, got {bad}")));
    }

    let provider_cfgs = if ctx.cfg.embedders.is_empty() {
        vec![EmbeddingProviderConfig::mock(64)]
    } else {
        ctx.cfg.embedders.clone()
    };
    let embedders = provider_cfgs
        .iter()
        .map(Embedder::from_config)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let corpus = ctx.corpus(&a.corpus)?;
    let queries = load_dataset(ctx, &a.dataset, &corpus)?;
    let outcome = Evaluator::new(&corpus, &queries).sweep(&base, sizes, &embedders, ctx.parallelism)?;

    if outcome.failures.len() == outcome.table.rows.len() {
        // nothing to report; surface the first cause with its exit code
        return Err(outcome.failures[0].clone().into());
    }

    let mut records = Vec::new();
    write_records(&mut records, &outcome.records).expect("in-memory write");
    write_out(&ctx.out_file("records.jsonl"), &records)?;
    write_out(&ctx.out_file("summary.json"), outcome.table.to_json().as_bytes())?;
    if !a.quiet {
        let spec = ctx.cfg.report.unwrap_or_default();
        let md = emit(&outcome.table, &ReportSpec { format: ReportFormat::Markdown, ..spec })
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let _ = stdout.write_all(&md);
    }
    Ok(())
}

fn report(ctx: &Context, a: ReportArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut spec = ctx.cfg.report.unwrap_or_default();
    if let Some(f) = a.format {
        spec.format = f;
    }
    if let Some(p) = a.float_precision {
        spec.float_precision = p;
    }
    if a.no_bold {
        spec.bold_best = false;
    }
    spec.bold_lowest_std |= a.bold_lowest_std;
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let raw = std::fs::read_to_string(&a.summary).map_err(|e| io_err(&a.summary, e))?;
    let table = SweepTable::from_json(&raw).map_err(|e| CliError::Data(format!("{}: {e}", a.summary.display())))?;
    let bytes = emit(&table, &spec).map_err(|e| CliError::Data(e.to_string()))?;
    match a.output {
        Some(p) => write_out(&p, &bytes),
        None => stdout.write_all(&bytes).map_err(|e| CliError::Data(e.to_string())),
    }
}
