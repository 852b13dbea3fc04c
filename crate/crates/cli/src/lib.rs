//! Command-line driver: synthetic data, vocabulary, both training stages,
//! decoding, evaluation and gradient checking.

pub mod config;

use std::ffi::{OsStr, OsString};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use compsum::corpus::{
    build_vocab, encode_record, generate_synthetic_corpus, read_records, records_to_jsonl,
    split_dataset, token_streams, CorpusError, DatasetRecord,
};
use compsum::metrics::{evaluate_dataset, MetricsError, ModelSummarizer, Summarizer};
use compsum::model::{Checkpoint, ModelError};
use compsum::training::{
    finite_difference_check, standard_probe, total_loss, train_comparative, train_pretrain,
    LogRecord, Stage, TrainError,
};
use compsum::{PaperSet, Vocabulary};
use tempfile::NamedTempFile;
use thiserror::Error;

pub use config::{ConfigError, RunConfig};

/// Largest accepted gradcheck error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: io::Error },
    #[error("{stage}: {message}")]
    Data {
        stage: &'static str,
        message: String,
    },
    #[error("{stage}: {message}")]
    Internal {
        stage: &'static str,
        message: String,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Config(_)
            | CliError::Read { .. }
            | CliError::Write { .. }
            | CliError::Data { .. } => 2,
            CliError::Internal { .. } => 3,
        }
    }

    pub(crate) fn read(path: &Path, source: io::Error) -> Self {
        CliError::Read {
            path: path.to_path_buf(),
            source,
        }
    }

    fn data(stage: &'static str, e: impl ToString) -> Self {
        CliError::Data {
            stage,
            message: e.to_string(),
        }
    }

    fn internal(stage: &'static str, e: impl ToString) -> Self {
        CliError::Internal {
            stage,
            message: e.to_string(),
        }
    }

    fn corpus(stage: &'static str, e: CorpusError) -> Self {
        match e {
            CorpusError::Io { path, source } => CliError::Read { path, source },
            e => Self::data(stage, e),
        }
    }

    fn model(stage: &'static str, e: ModelError) -> Self {
        match e {
            ModelError::DimensionMismatch(_) | ModelError::NonFinite(_) => Self::internal(stage, e),
            e => Self::data(stage, e),
        }
    }

    fn train(stage: &'static str, e: TrainError) -> Self {
        match e {
            TrainError::Model(e) => Self::model(stage, e),
            TrainError::Corpus(e) => Self::corpus(stage, e),
            TrainError::EmptyCorpus
            | TrainError::MissingInsights(_)
            | TrainError::InvalidConfig(_) => Self::data(stage, e),
            e => Self::internal(stage, e),
        }
    }

    fn metrics(stage: &'static str, e: MetricsError) -> Self {
        match e {
            MetricsError::Model(e) => Self::model(stage, e),
            MetricsError::Corpus(e) => Self::corpus(stage, e),
            e => Self::data(stage, e),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "compsum",
    version,
    about = "Comparative multi-document summarization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Run configuration in key=value format.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic corpus to `data`.
    Synth(ConfigArgs),
    /// Build the vocabulary of `data` and write it to `vocab`.
    BuildVocab(ConfigArgs),
    /// Run the configured training stage and write `checkpoint_out`.
    Train(ConfigArgs),
    /// Print one decoded summary per example of `data`.
    Generate(ConfigArgs),
    /// Score decoded summaries of `data` and write `report`.
    Evaluate(ConfigArgs),
    /// Compare backpropagation with central finite differences on a random model.
    Gradcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
    },
    /// Vocabulary, pretraining, comparative fine-tuning and evaluation on a
    /// train/validation/test split of `data`.
    Pipeline {
        #[command(flatten)]
        config: ConfigArgs,
        /// Generate the synthetic corpus into `data` first.
        #[arg(long)]
        synth: bool,
    },
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        for assignment in &self.set {
            let (k, v) = assignment.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("--set expects KEY=VALUE, got `{assignment}`"))
            })?;
            config.set(k.trim(), v.trim())?;
        }
        Ok(config)
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth(args) => synth(&args.resolve()?),
        Command::BuildVocab(args) => build_vocab_cmd(&args.resolve()?),
        Command::Train(args) => train(&args.resolve()?),
        Command::Generate(args) => generate(&args.resolve()?),
        Command::Evaluate(args) => evaluate(&args.resolve()?),
        Command::Gradcheck { seed, eps } => gradcheck(seed, eps),
        Command::Pipeline { config, synth } => pipeline(&config.resolve()?, synth),
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let err = |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(err)?;
    tmp.write_all(bytes).map_err(err)?;
    tmp.as_file().sync_all().map_err(err)?;
    tmp.persist(path).map_err(|e| err(e.error))?;
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(OsStr::new(suffix));
    PathBuf::from(s)
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::read(
            path,
            io::Error::new(io::ErrorKind::NotFound, "no such file"),
        ))
    }
}

fn load_vocab(path: &Path) -> Result<Vocabulary, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
    Vocabulary::from_file_str(&text).map_err(|e| CliError::corpus("vocabulary", e))
}

fn load_records(path: &Path) -> Result<Vec<DatasetRecord>, CliError> {
    read_records(path).map_err(|e| CliError::corpus("dataset", e))
}

fn encode_all(records: &[DatasetRecord], vocab: &Vocabulary) -> Vec<PaperSet> {
    records.iter().map(|r| encode_record(r, vocab)).collect()
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    require_file(path)?;
    Checkpoint::load(path).map_err(|e| CliError::model("checkpoint", e))
}

fn checkpoint_bytes(c: &Checkpoint) -> Result<Vec<u8>, CliError> {
    c.to_bytes().map_err(|e| CliError::model("checkpoint", e))
}

fn log_jsonl(log: &[LogRecord]) -> String {
    log.iter()
        .map(|r| serde_json::to_string(r).expect("plain numeric record") + "\n")
        .collect()
}

fn synth_records(config: &RunConfig) -> Vec<DatasetRecord> {
    generate_synthetic_corpus(config.synth_seed, config.synth_count, 2..=3)
}

fn synth(config: &RunConfig) -> Result<(), CliError> {
    let records = synth_records(config);
    write_atomic(&config.data, records_to_jsonl(&records).as_bytes())?;
    println!(
        "wrote {} examples to {}",
        records.len(),
        config.data.display()
    );
    Ok(())
}

fn build_vocab_cmd(config: &RunConfig) -> Result<(), CliError> {
    require_file(&config.data)?;
    let records = load_records(&config.data)?;
    let vocab = build_vocab(&token_streams(&records), config.min_freq);
    write_atomic(&config.vocab, vocab.to_file_string().as_bytes())?;
    println!("wrote {} tokens to {}", vocab.len(), config.vocab.display());
    Ok(())
}

fn train(config: &RunConfig) -> Result<(), CliError> {
    require_file(&config.data)?;
    require_file(&config.vocab)?;
    let init = match config.stage {
        Stage::Pretrain => None,
        Stage::Comparative => {
            let path = config.checkpoint_in.as_ref().ok_or_else(|| ConfigError {
                key: "checkpoint_in".into(),
                reason: "required for the comparative stage".into(),
            })?;
            Some(load_checkpoint(path)?)
        }
    };
    let vocab = load_vocab(&config.vocab)?;
    let sets = encode_all(&load_records(&config.data)?, &vocab);
    let train_config = config.train_config(config.stage);
    let outcome = match &init {
        None => train_pretrain(&sets, &vocab, &train_config),
        Some(init) => train_comparative(&sets, &vocab, init, &train_config),
    }
    .map_err(|e| CliError::train("train", e))?;
    write_atomic(
        &config.checkpoint_out,
        &checkpoint_bytes(&outcome.checkpoint)?,
    )?;
    write_atomic(
        &with_suffix(&config.checkpoint_out, ".log.jsonl"),
        log_jsonl(&outcome.log).as_bytes(),
    )?;
    println!(
        "{}",
        serde_json::json!({
            "stage": train_config.stage,
            "steps": outcome.log.len(),
            "epoch_losses": outcome.epoch_losses,
            "clipped_steps": outcome.clipped_steps,
        })
    );
    Ok(())
}

/// Checkpoint to decode with: `checkpoint_in` if set, else `checkpoint_out`.
fn decode_inputs(config: &RunConfig) -> Result<(Checkpoint, Vocabulary, Vec<PaperSet>), CliError> {
    let ckpt = config
        .checkpoint_in
        .as_ref()
        .unwrap_or(&config.checkpoint_out);
    require_file(ckpt)?;
    require_file(&config.data)?;
    require_file(&config.vocab)?;
    let checkpoint = load_checkpoint(ckpt)?;
    let vocab = load_vocab(&config.vocab)?;
    if checkpoint.params.vocab_size() != vocab.len() {
        return Err(CliError::data(
            "checkpoint",
            format!(
                "checkpoint vocabulary has {} tokens, {} has {}",
                checkpoint.params.vocab_size(),
                config.vocab.display(),
                vocab.len()
            ),
        ));
    }
    let sets = encode_all(&load_records(&config.data)?, &vocab);
    Ok((checkpoint, vocab, sets))
}

fn generate(config: &RunConfig) -> Result<(), CliError> {
    let (checkpoint, vocab, sets) = decode_inputs(config)?;
    let summarizer = ModelSummarizer {
        params: &checkpoint.params,
        vocab: &vocab,
        settings: config.decode_settings(),
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for (i, set) in sets.iter().enumerate() {
        let ids = summarizer
            .summarize(i, set)
            .map_err(|e| CliError::metrics("generate", e))?;
        let line = serde_json::json!({ "id": set.id, "summary": vocab.decode(&ids) });
        writeln!(out, "{line}").map_err(|e| CliError::internal("generate", e))?;
    }
    Ok(())
}

fn evaluate(config: &RunConfig) -> Result<(), CliError> {
    let (checkpoint, vocab, sets) = decode_inputs(config)?;
    let report = evaluate_dataset(
        &checkpoint.params,
        &sets,
        &vocab,
        config.decode_settings(),
        config.tau,
    )
    .map_err(|e| CliError::metrics("evaluate", e))?;
    let text = report.to_jsonl();
    write_atomic(&config.report, text.as_bytes())?;
    println!("{}", text.lines().next().unwrap_or_default());
    Ok(())
}

fn gradcheck(seed: u64, eps: f64) -> Result<(), CliError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(CliError::Usage("--eps must be positive".into()));
    }
    let start = Instant::now();
    let probe = standard_probe(seed);
    let report =
        finite_difference_check(&probe, eps).map_err(|e| CliError::train("gradcheck", e))?;
    let pass = report.max_relative_error < GRADCHECK_TOLERANCE;
    println!(
        "max relative error {:.3e} at {}[{}] over {} entries in {:.2?}: {}",
        report.max_relative_error,
        report.worst.0,
        report.worst.1,
        report.entries_checked,
        start.elapsed(),
        if pass { "pass" } else { "fail" }
    );
    if pass {
        Ok(())
    } else {
        Err(CliError::internal(
            "gradcheck",
            format!("error exceeds {GRADCHECK_TOLERANCE:e}"),
        ))
    }
}

fn pipeline(config: &RunConfig, synth_first: bool) -> Result<(), CliError> {
    let records = if synth_first {
        let records = synth_records(config);
        write_atomic(&config.data, records_to_jsonl(&records).as_bytes())?;
        records
    } else {
        require_file(&config.data)?;
        load_records(&config.data)?
    };
    let (train_records, _, test_records) = split_dataset(&records);
    if train_records.is_empty() || test_records.is_empty() {
        return Err(CliError::data(
            "split",
            format!(
                "{} examples are too few for a train/test split",
                records.len()
            ),
        ));
    }

    let vocab = build_vocab(&token_streams(&train_records), config.min_freq);
    write_atomic(&config.vocab, vocab.to_file_string().as_bytes())?;
    let train_sets = encode_all(&train_records, &vocab);
    let test_sets = encode_all(&test_records, &vocab);

    log::info!(
        "split {} train / {} test; vocabulary {}",
        train_records.len(),
        test_records.len(),
        vocab.len()
    );
    let pre = train_pretrain(&train_sets, &vocab, &config.train_config(Stage::Pretrain))
        .map_err(|e| CliError::train("pretrain", e))?;
    let pre_path = with_suffix(&config.checkpoint_out, ".pretrain");
    write_atomic(&pre_path, &checkpoint_bytes(&pre.checkpoint)?)?;
    write_atomic(
        &with_suffix(&pre_path, ".log.jsonl"),
        log_jsonl(&pre.log).as_bytes(),
    )?;

    log::info!("pretraining done, loss {:.4}", pre.final_loss());
    let comp = train_comparative(
        &train_sets,
        &vocab,
        &pre.checkpoint,
        &config.train_config(Stage::Comparative),
    )
    .map_err(|e| CliError::train("comparative", e))?;
    write_atomic(&config.checkpoint_out, &checkpoint_bytes(&comp.checkpoint)?)?;
    write_atomic(
        &with_suffix(&config.checkpoint_out, ".log.jsonl"),
        log_jsonl(&comp.log).as_bytes(),
    )?;

    log::info!("comparative stage done, loss {:.4}", comp.final_loss());
    let report = evaluate_dataset(
        &comp.checkpoint.params,
        &test_sets,
        &vocab,
        config.decode_settings(),
        config.tau,
    )
    .map_err(|e| CliError::metrics("evaluate", e))?;
    write_atomic(&config.report, report.to_jsonl().as_bytes())?;

    println!(
        "{}",
        serde_json::json!({
            "pretrain_loss": pre.final_loss(),
            "comparative_loss": comp.final_loss(),
            "total_loss": total_loss(pre.final_loss(), comp.final_loss()),
            "rouge1_f1": report.rouge1_f1,
            "rouge2_f1": report.rouge2_f1,
            "rougeL_f1": report.rouge_l_f1,
            "g_score": report.g_score,
            "example_count": report.example_count,
        })
    );
    Ok(())
}
