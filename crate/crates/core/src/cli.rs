//! The `enthymeme` command line.
//!
//! Every flag can also come from an `ENTHYMEME_*` environment variable.
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 backend error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::annotation::{self, AnnotationError, AnnotationItem, AnnotationStore, JudgmentRecord};
use crate::corpus::{self, AbductivePair, Enthymeme, InputFormat, Split, TestSet};
use crate::generator::{
    self, CheckpointBackend, GenerationBackend, GenerationConfig, GenerationError, GenerationRecord, KnowledgeSource,
    RemoteBackend, Setting, StubBackend, TrainError, TrainingConfig,
};
use crate::jsonl;
use crate::knowledge::{
    self, CacheKnowledgeBackend, HttpKnowledgeBackend, KnowledgeBackend, KnowledgeError, StubKnowledgeBackend,
};
use crate::manifest::RunManifest;
use crate::metrics::{self, Embedder, HttpEmbedder, MetricsError, StaticEmbedder};

pub const DEFAULT_SEED: u64 = 13;

#[derive(Debug, Parser)]
#[command(name = "enthymeme", version, about = "Generate and evaluate implicit premises of enthymemes")]
pub struct Cli {
    /// Seed for every random choice; printed in manifests.
    #[arg(long, global = true, env = "ENTHYMEME_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Log progress (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a raw corpus release and write canonical JSONL.
    Prepare(PrepareArgs),
    /// Attach a commonsense phrase (xIntent of the first sentence) to each record.
    Augment(AugmentArgs),
    /// Train a checkpoint on abductive pairs.
    Train(TrainArgs),
    /// Generate implicit premises for a test set.
    Generate(GenerateArgs),
    /// Score generations against gold premises.
    Evaluate(EvaluateArgs),
    /// Sample an annotation batch from generation files.
    Batch(BatchArgs),
    /// Run the annotation HTTP service.
    Serve(ServeArgs),
    /// Aggregate collected judgments.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetArg {
    Art,
    D1,
    D2,
    D3,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long, env = "ENTHYMEME_DATASET", value_enum)]
    pub dataset: DatasetArg,
    #[arg(long = "in", env = "ENTHYMEME_IN")]
    pub input: PathBuf,
    /// anlg, arct, forum, microtext or canonical.
    #[arg(long, env = "ENTHYMEME_FORMAT")]
    pub format: InputFormat,
    /// ART split of the input file.
    #[arg(long, env = "ENTHYMEME_SPLIT")]
    pub split: Option<Split>,
    #[arg(long, env = "ENTHYMEME_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KnowledgeArg {
    Live,
    Cache,
    Stub,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long = "in", env = "ENTHYMEME_IN")]
    pub input: PathBuf,
    #[arg(long, env = "ENTHYMEME_KNOWLEDGE_BACKEND", value_enum)]
    pub backend: KnowledgeArg,
    /// Bundle cache. Required for `cache`; with `live`, misses are fetched and appended.
    #[arg(long, env = "ENTHYMEME_KNOWLEDGE_CACHE")]
    pub cache: Option<PathBuf>,
    #[arg(long, env = "ENTHYMEME_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Canonical ART pairs.
    #[arg(long, env = "ENTHYMEME_PAIRS")]
    pub pairs: PathBuf,
    /// JSONL records with `id` and `knowledge_phrase`, e.g. the output of `augment`.
    #[arg(long, env = "ENTHYMEME_KNOWLEDGE")]
    pub knowledge: Option<PathBuf>,
    /// JSON with any of `epochs`, `learning_rate`, `batch_size`.
    #[arg(long, env = "ENTHYMEME_TRAIN_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "ENTHYMEME_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KnowledgeSourceArg {
    /// Use the `knowledge_phrase` written by `augment`.
    Attached,
    Live,
    Cache,
    Stub,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("backend").required(true).args(["checkpoint", "stub", "remote"])))]
pub struct GenerateArgs {
    #[arg(long, env = "ENTHYMEME_ENTHYMEMES")]
    pub enthymemes: PathBuf,
    #[arg(long, env = "ENTHYMEME_SETTING")]
    pub setting: Setting,
    /// Checkpoint written by `train`.
    #[arg(long, env = "ENTHYMEME_CHECKPOINT")]
    pub checkpoint: Option<PathBuf>,
    /// Deterministic stub backend.
    #[arg(long)]
    pub stub: bool,
    /// Model server at GENERATION_BACKEND_URL.
    #[arg(long)]
    pub remote: bool,
    #[arg(long, env = "ENTHYMEME_KNOWLEDGE_SOURCE", value_enum, default_value = "attached")]
    pub knowledge: KnowledgeSourceArg,
    #[arg(long, env = "ENTHYMEME_KNOWLEDGE_CACHE")]
    pub knowledge_cache: Option<PathBuf>,
    #[arg(long, env = "ENTHYMEME_BEAM_WIDTH", default_value_t = 5)]
    pub beam_width: usize,
    #[arg(long, env = "ENTHYMEME_MAX_OUTPUT_TOKENS", default_value_t = 64)]
    pub max_output_tokens: usize,
    /// Independent backend handles decoding in parallel.
    #[arg(long, env = "ENTHYMEME_WORKERS", default_value_t = 1)]
    pub workers: usize,
    #[arg(long, env = "ENTHYMEME_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderArg {
    /// Hashed static embeddings; deterministic and offline.
    Static,
    /// Contextual embeddings from EMBEDDER_BACKEND_URL.
    Model,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, env = "ENTHYMEME_GENERATIONS")]
    pub generations: PathBuf,
    /// Canonical enthymemes with gold premises.
    #[arg(long, env = "ENTHYMEME_GOLD")]
    pub gold: PathBuf,
    #[arg(long, env = "ENTHYMEME_EMBEDDER", value_enum, default_value = "static")]
    pub embedder: EmbedderArg,
    /// Second generation file for a paired significance test.
    #[arg(long, env = "ENTHYMEME_COMPARE")]
    pub compare: Option<PathBuf>,
    #[arg(long, env = "ENTHYMEME_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    /// Generation files, one per system; repeat the flag.
    #[arg(long, env = "ENTHYMEME_GENERATIONS", value_delimiter = ',', required = true)]
    pub generations: Vec<PathBuf>,
    /// Canonical test sets; repeat the flag.
    #[arg(long, env = "ENTHYMEME_GOLD", value_delimiter = ',', required = true)]
    pub gold: Vec<PathBuf>,
    /// Enthymemes sampled per test set.
    #[arg(long, env = "ENTHYMEME_SAMPLE_SIZE", default_value_t = 50)]
    pub sample_size: usize,
    #[arg(long, env = "ENTHYMEME_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "ENTHYMEME_BATCH")]
    pub batch: PathBuf,
    #[arg(long, env = "ENTHYMEME_JOURNAL")]
    pub journal: PathBuf,
    #[arg(long, env = annotation::PORT_ENV, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, env = "ENTHYMEME_BIND", default_value = "127.0.0.1")]
    pub bind: std::net::IpAddr,
    /// Built annotation UI, served under /ui.
    #[arg(long, env = "ENTHYMEME_UI_DIR", default_value = "annotation_ui/dist")]
    pub ui_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, env = "ENTHYMEME_JOURNAL")]
    pub journal: PathBuf,
    #[arg(long, env = "ENTHYMEME_BATCH")]
    pub batch: PathBuf,
    /// Defaults to `<journal>.report.json`.
    #[arg(long, env = "ENTHYMEME_OUT")]
    pub out: Option<PathBuf>,
    /// Accept items that are still missing judgments.
    #[arg(long)]
    pub partial: bool,
}

/// A failed command and the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_BACKEND: u8 = 4;

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: message.into() }
    }

    fn data(message: impl ToString) -> Self {
        CliError { code: EXIT_DATA, message: message.to_string() }
    }

    fn backend(message: impl ToString) -> Self {
        CliError { code: EXIT_BACKEND, message: message.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e)
    }
}

impl From<corpus::CorpusError> for CliError {
    fn from(e: corpus::CorpusError) -> Self {
        match e {
            corpus::CorpusError::UnsupportedFormat { .. } => CliError::usage(e.to_string()),
            _ => CliError::data(e),
        }
    }
}

impl From<KnowledgeError> for CliError {
    fn from(e: KnowledgeError) -> Self {
        match e {
            KnowledgeError::InvalidDiscourse(_) | KnowledgeError::IndexOutOfRange { .. } => CliError::data(e),
            _ => CliError::backend(e),
        }
    }
}

impl From<GenerationError> for CliError {
    fn from(e: GenerationError) -> Self {
        match e {
            GenerationError::InvalidConfig(_) | GenerationError::Incompatible { .. } => CliError::usage(e.to_string()),
            GenerationError::Sequencing(_) | GenerationError::InputMismatch { .. } => CliError::data(e),
            GenerationError::Knowledge(k) => k.into(),
            _ => CliError::backend(e),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(_) => CliError::usage(e.to_string()),
            TrainError::Load(g) => g.into(),
            _ => CliError::data(e),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Embedder(_) => CliError::backend(e),
            _ => CliError::data(e),
        }
    }
}

impl From<AnnotationError> for CliError {
    fn from(e: AnnotationError) -> Self {
        CliError::data(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    jsonl::read_all(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> CliResult<()> {
    ensure_parent(path)?;
    jsonl::write_all(path, records).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(())
}

fn config_value<T: Serialize>(args: &T) -> Value {
    serde_json::to_value(args).unwrap_or(Value::Null)
}

fn prepare(args: &PrepareArgs, seed: u64) -> CliResult<()> {
    let mut manifest = RunManifest::start(
        "prepare",
        seed,
        json!({"dataset": args.dataset, "format": args.format, "split": args.split.map(|s| s.to_string())}),
    );
    manifest.input(&args.input)?;
    let summary = match args.dataset {
        DatasetArg::Art => {
            let split = args.split.ok_or_else(|| CliError::usage("--split is required for --dataset art"))?;
            let loaded = corpus::load_art(&args.input, split, args.format)?;
            write_jsonl(&args.out, &loaded.records)?;
            loaded.stats.summary()
        }
        DatasetArg::D1 | DatasetArg::D2 | DatasetArg::D3 => {
            let set = match args.dataset {
                DatasetArg::D1 => TestSet::D1,
                DatasetArg::D2 => TestSet::D2,
                _ => TestSet::D3,
            };
            let loaded = corpus::load_test_set(&args.input, set, args.format)?;
            write_jsonl(&args.out, &loaded.records)?;
            loaded.stats.summary()
        }
    };
    println!("{summary}");
    manifest.output(&args.out);
    manifest.finish(&args.out)?;
    Ok(())
}

fn knowledge_backend(kind: KnowledgeArg, cache: Option<&Path>) -> CliResult<Box<dyn KnowledgeBackend>> {
    Ok(match (kind, cache) {
        (KnowledgeArg::Stub, _) => Box::new(StubKnowledgeBackend::new()),
        (KnowledgeArg::Live, None) => Box::new(HttpKnowledgeBackend::from_env()?),
        (KnowledgeArg::Live, Some(path)) => {
            Box::new(CacheKnowledgeBackend::open(path)?.with_fallback(Box::new(HttpKnowledgeBackend::from_env()?)))
        }
        (KnowledgeArg::Cache, Some(path)) => Box::new(CacheKnowledgeBackend::open(path)?),
        (KnowledgeArg::Cache, None) => return Err(CliError::usage("--backend cache needs --cache PATH")),
    })
}

fn discourse_of(record: &Value) -> Option<Vec<String>> {
    let field = |k: &str| record.get(k).and_then(Value::as_str).map(str::to_string);
    field("stated_premise")
        .zip(field("stated_claim"))
        .or_else(|| field("obs1").zip(field("obs2")))
        .map(|(a, b)| vec![a, b])
}

fn augment(args: &AugmentArgs, seed: u64) -> CliResult<()> {
    let mut manifest = RunManifest::start("augment", seed, config_value(&json!({"backend": args.backend})));
    manifest.input(&args.input)?;
    let backend = knowledge_backend(args.backend, args.cache.as_deref())?;
    let mut records: Vec<Value> = read_jsonl(&args.input)?;
    let (mut attached, mut failed) = (0usize, 0usize);
    for (i, record) in records.iter_mut().enumerate() {
        let discourse = discourse_of(record).ok_or_else(|| {
            CliError::data(format!("{}: record {} has neither premise/claim nor obs1/obs2", args.input.display(), i + 1))
        })?;
        let phrase = knowledge::infer(&discourse, backend.as_ref()).and_then(|b| knowledge::select_intent(&b));
        match phrase {
            Ok(p) => {
                record["knowledge_phrase"] = Value::String(p);
                attached += 1;
            }
            Err(e) if e.is_retryable() => return Err(e.into()),
            Err(e) => {
                log::warn!("record {}: {e}", i + 1);
                failed += 1;
            }
        }
    }
    write_jsonl(&args.out, &records)?;
    println!("augmented={attached} failed={failed} backend={}", backend.id());
    manifest.output(&args.out);
    manifest.finish(&args.out)?;
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainConfigFile {
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
}

#[derive(Deserialize)]
struct KnowledgeLine {
    id: String,
    knowledge_phrase: Option<String>,
}

fn train(args: &TrainArgs, seed: u64) -> CliResult<()> {
    let mut config = TrainingConfig::new(&args.out);
    config.seed = seed;
    if let Some(path) = &args.config {
        let file: TrainConfigFile = serde_json::from_slice(&fs::read(path)?)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        config.epochs = file.epochs.unwrap_or(config.epochs);
        config.learning_rate = file.learning_rate.unwrap_or(config.learning_rate);
        config.batch_size = file.batch_size.unwrap_or(config.batch_size);
    }
    let mut manifest = RunManifest::start("train", seed, config_value(&config));
    manifest.input(&args.pairs)?;
    let pairs: Vec<AbductivePair> = read_jsonl(&args.pairs)?;
    let knowledge = match &args.knowledge {
        Some(path) => {
            manifest.input(path)?;
            let lines: Vec<KnowledgeLine> = read_jsonl(path)?;
            Some(
                lines
                    .into_iter()
                    .filter_map(|l| l.knowledge_phrase.map(|p| (l.id, p)))
                    .collect::<BTreeMap<_, _>>(),
            )
        }
        None => None,
    };
    let backend = generator::fine_tune(&pairs, knowledge.as_ref(), &config)?;
    let trained = generator::TrainingManifest::load(backend.dir())?;
    println!(
        "trained on {} of {} pairs; loss {:?}; checkpoint {}",
        trained.examples_used,
        trained.corpus_size,
        trained.loss,
        args.out.display()
    );
    manifest.output(&args.out);
    manifest.finish(&args.out)?;
    Ok(())
}

fn make_backend(args: &GenerateArgs) -> CliResult<Box<dyn GenerationBackend>> {
    if args.stub {
        Ok(Box::new(StubBackend::new()))
    } else if args.remote {
        let mut backend = RemoteBackend::from_env()?;
        backend.load()?;
        Ok(Box::new(backend))
    } else if let Some(dir) = &args.checkpoint {
        Ok(Box::new(CheckpointBackend::open(dir)?))
    } else {
        Err(CliError::usage("choose a backend: --checkpoint DIR, --stub or --remote"))
    }
}

fn generate(args: &GenerateArgs, seed: u64) -> CliResult<()> {
    let mut config = GenerationConfig::new(args.setting);
    config.beam_width = args.beam_width;
    config.max_output_tokens = args.max_output_tokens;
    config.seed = Some(seed);
    config.validate()?;
    let mut manifest = RunManifest::start(
        "generate",
        seed,
        json!({
            "generation": config,
            "backend": if args.stub { "stub".to_string() } else if args.remote { "remote".to_string() }
                else { args.checkpoint.as_ref().map(|p| format!("checkpoint:{}", p.display())).unwrap_or_default() },
            "knowledge": args.knowledge,
            "workers": args.workers,
        }),
    );
    manifest.input(&args.enthymemes)?;
    if let Some(dir) = &args.checkpoint {
        manifest.input(dir)?;
    }
    let enthymemes: Vec<Enthymeme> = read_jsonl(&args.enthymemes)?;
    let knowledge_backend = match (args.setting, args.knowledge) {
        (Setting::FineTunedKnowledge, KnowledgeSourceArg::Live) => {
            Some(knowledge_backend(KnowledgeArg::Live, args.knowledge_cache.as_deref())?)
        }
        (Setting::FineTunedKnowledge, KnowledgeSourceArg::Cache) => {
            Some(knowledge_backend(KnowledgeArg::Cache, args.knowledge_cache.as_deref())?)
        }
        (Setting::FineTunedKnowledge, KnowledgeSourceArg::Stub) => Some(knowledge_backend(KnowledgeArg::Stub, None)?),
        _ => None,
    };
    let source = match (args.setting, &knowledge_backend) {
        (Setting::FineTunedKnowledge, Some(b)) => Some(KnowledgeSource::Backend(b.as_ref())),
        (Setting::FineTunedKnowledge, None) => Some(KnowledgeSource::Attached),
        _ => None,
    };
    // fail fast on a bad backend before fanning out
    make_backend(args)?;
    let records = generator::generate_for_corpus_parallel(
        &enthymemes,
        || make_backend(args).map_err(|e| GenerationError::Backend(e.message)),
        args.workers,
        &config,
        source,
    )?;
    write_jsonl(&args.out, &records)?;
    let failed = records.iter().filter(|r| r.premise().is_none()).count();
    let fallback = records.iter().filter_map(GenerationRecord::premise).filter(|g| g.extraction_fallback).count();
    println!("generated={} failed={failed} extraction_fallback={fallback}", records.len() - failed);
    manifest.output(&args.out);
    manifest.finish(&args.out)?;
    Ok(())
}

fn evaluate(args: &EvaluateArgs, seed: u64) -> CliResult<()> {
    let mut manifest = RunManifest::start("evaluate", seed, json!({"embedder": args.embedder}));
    manifest.input(&args.generations)?;
    manifest.input(&args.gold)?;
    let embedder: Box<dyn Embedder> = match args.embedder {
        EmbedderArg::Static => Box::new(StaticEmbedder::default()),
        EmbedderArg::Model => Box::new(HttpEmbedder::from_env()?),
    };
    let gold: Vec<Enthymeme> = read_jsonl(&args.gold)?;
    let records: Vec<GenerationRecord> = read_jsonl(&args.generations)?;
    let mut evaluation = metrics::evaluate_corpus(&records, &gold, embedder.as_ref())?;
    let mut reports = Vec::new();
    if let Some(path) = &args.compare {
        manifest.input(path)?;
        let other: Vec<GenerationRecord> = read_jsonl(path)?;
        let other_eval = metrics::evaluate_corpus(&other, &gold, embedder.as_ref())?;
        match metrics::compare(&evaluation, &other_eval) {
            Ok(test) => evaluation.report.p_value = Some(test.p_value),
            // an undefined test is reported, not fatal
            Err(e @ (MetricsError::AllZeroDifferences | MetricsError::TooFewPairs(_))) => {
                eprintln!("warning: no significance test: {e}");
            }
            Err(e) => return Err(e.into()),
        }
        reports.push(other_eval.report);
    }
    reports.insert(0, evaluation.report.clone());
    ensure_parent(&args.out)?;
    fs::write(&args.out, serde_json::to_vec_pretty(&evaluation.report).map_err(CliError::data)?)?;
    print!("{}", metrics::render_score_table(&reports));
    manifest.output(&args.out);
    manifest.finish(&args.out)?;
    Ok(())
}

fn batch(args: &BatchArgs, seed: u64) -> CliResult<()> {
    let mut manifest = RunManifest::start("batch", seed, json!({"sample_size": args.sample_size}));
    let mut generations = Vec::new();
    for path in &args.generations {
        manifest.input(path)?;
        generations.extend(read_jsonl::<GenerationRecord>(path)?);
    }
    let mut enthymemes = Vec::new();
    for path in &args.gold {
        manifest.input(path)?;
        enthymemes.extend(read_jsonl::<Enthymeme>(path)?);
    }
    let items = annotation::create_batch(&generations, &enthymemes, args.sample_size, seed)?;
    write_jsonl(&args.out, &items)?;
    println!("items={}", items.len());
    manifest.output(&args.out);
    manifest.finish(&args.out)?;
    Ok(())
}

fn serve(args: &ServeArgs, seed: u64) -> CliResult<()> {
    let mut manifest = RunManifest::start("serve", seed, json!({"port": args.port, "bind": args.bind}));
    manifest.input(&args.batch)?;
    let items: Vec<AnnotationItem> = read_jsonl(&args.batch)?;
    ensure_parent(&args.journal)?;
    let store = AnnotationStore::open(items, &args.journal)?;
    manifest.output(&args.journal);
    manifest.finish(&args.journal)?;
    let addr = SocketAddr::new(args.bind, args.port);
    let runtime = tokio::runtime::Runtime::new().map_err(CliError::backend)?;
    runtime
        .block_on(annotation::serve(store, addr, Some(args.ui_dir.clone())))
        .map_err(CliError::backend)
}

fn report(args: &ReportArgs, seed: u64) -> CliResult<()> {
    let out = args.out.clone().unwrap_or_else(|| {
        let mut name = args.journal.file_name().unwrap_or_default().to_os_string();
        name.push(".report.json");
        args.journal.with_file_name(name)
    });
    let mut manifest = RunManifest::start("report", seed, json!({"partial": args.partial}));
    manifest.input(&args.batch)?;
    manifest.input(&args.journal)?;
    let items: Vec<AnnotationItem> = read_jsonl(&args.batch)?;
    let judgments: Vec<JudgmentRecord> = read_jsonl(&args.journal)?;
    let report = if args.partial {
        annotation::aggregate_partial(&items, &judgments)?
    } else {
        annotation::aggregate(&items, &judgments)?
    };
    ensure_parent(&out)?;
    fs::write(&out, serde_json::to_vec_pretty(&report).map_err(CliError::data)?)?;
    print!("{}", annotation::render_report_table(&report));
    manifest.output(&out);
    manifest.finish(&out)?;
    Ok(())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
}

/// Runs one parsed command.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let seed = cli.seed;
    match &cli.command {
        Command::Prepare(a) => prepare(a, seed),
        Command::Augment(a) => augment(a, seed),
        Command::Train(a) => train(a, seed),
        Command::Generate(a) => generate(a, seed),
        Command::Evaluate(a) => evaluate(a, seed),
        Command::Batch(a) => batch(a, seed),
        Command::Serve(a) => serve(a, seed),
        Command::Report(a) => report(a, seed),
    }
}

/// Parses `args` (program name first), runs the command and maps the outcome to an exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    init_logging(cli.verbose);
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
