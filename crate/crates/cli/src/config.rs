//! Flat `key=value` run configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use compsum::metrics::{DecodeSettings, DEFAULT_TAU};
use compsum::model::AblationFlags;
use compsum::training::{Stage, TrainConfig};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("config key `{key}`: {reason}")]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

impl ConfigError {
    fn new(key: &str, reason: impl Into<String>) -> Self {
        Self {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}

pub const KEYS: [&str; 22] = [
    "stage",
    "data",
    "vocab",
    "checkpoint_in",
    "checkpoint_out",
    "report",
    "d",
    "l_chunk",
    "lr",
    "epochs",
    "lambda",
    "seed",
    "key_k",
    "max_len",
    "temperature",
    "tau",
    "min_freq",
    "disable_memory",
    "disable_key_extraction",
    "disable_comparative",
    "synth_count",
    "synth_seed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub stage: Stage,
    pub data: PathBuf,
    pub vocab: PathBuf,
    /// Starting checkpoint; comparative training and decoding read it.
    pub checkpoint_in: Option<PathBuf>,
    pub checkpoint_out: PathBuf,
    pub report: PathBuf,
    pub d: usize,
    pub l_chunk: usize,
    pub lr: f64,
    pub epochs: usize,
    pub lambda: f64,
    pub seed: u64,
    pub key_k: usize,
    pub max_len: usize,
    /// Zero decodes greedily.
    pub temperature: f64,
    pub tau: f64,
    pub min_freq: usize,
    pub flags: AblationFlags,
    pub synth_count: usize,
    pub synth_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            stage: Stage::Pretrain,
            data: "data.jsonl".into(),
            vocab: "vocab.txt".into(),
            checkpoint_in: None,
            checkpoint_out: "model.ckpt".into(),
            report: "report.jsonl".into(),
            d: train.d,
            l_chunk: train.l_chunk,
            lr: train.learning_rate,
            epochs: train.epochs,
            lambda: train.lambda,
            seed: train.seed,
            key_k: train.key_k,
            max_len: 64,
            temperature: 0.0,
            tau: DEFAULT_TAU,
            min_freq: 1,
            flags: AblationFlags::default(),
            synth_count: 100,
            synth_seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| ConfigError::new(key, format!("invalid value `{value}`: {e}")))
}

fn at_least<T: PartialOrd + fmt::Display>(key: &str, v: T, min: T) -> Result<T, ConfigError> {
    if v < min {
        Err(ConfigError::new(
            key,
            format!("out of range: must be at least {min}"),
        ))
    } else {
        Ok(v)
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError::new(
            key,
            format!("expected true or false, got `{value}`"),
        )),
    }
}

impl RunConfig {
    /// Applies one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let finite = |v: f64| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(ConfigError::new(key, "out of range: must be finite"))
            }
        };
        match key {
            "stage" => {
                self.stage = match value {
                    "pretrain" => Stage::Pretrain,
                    "comparative" => Stage::Comparative,
                    _ => return Err(ConfigError::new(key, "expected pretrain or comparative")),
                }
            }
            "data" | "vocab" | "checkpoint_out" | "report" | "checkpoint_in" => {
                if value.is_empty() {
                    return Err(ConfigError::new(key, "path is empty"));
                }
                let p = PathBuf::from(value);
                match key {
                    "data" => self.data = p,
                    "vocab" => self.vocab = p,
                    "checkpoint_out" => self.checkpoint_out = p,
                    "report" => self.report = p,
                    _ => self.checkpoint_in = Some(p),
                }
            }
            "d" => self.d = at_least(key, parse(key, value)?, 1)?,
            "l_chunk" => self.l_chunk = at_least(key, parse(key, value)?, 1)?,
            "lr" => {
                let v: f64 = finite(parse(key, value)?)?;
                if v <= 0.0 {
                    return Err(ConfigError::new(key, "out of range: must be positive"));
                }
                self.lr = v;
            }
            "epochs" => self.epochs = parse(key, value)?,
            "lambda" => self.lambda = at_least(key, finite(parse(key, value)?)?, 0.0)?,
            "seed" => self.seed = parse(key, value)?,
            "key_k" => self.key_k = at_least(key, parse(key, value)?, 1)?,
            "max_len" => self.max_len = at_least(key, parse(key, value)?, 1)?,
            "temperature" => self.temperature = at_least(key, finite(parse(key, value)?)?, 0.0)?,
            "tau" => {
                let v: f64 = parse(key, value)?;
                if !(v > 0.0 && v <= 1.0) {
                    return Err(ConfigError::new(key, "out of range: must lie in (0, 1]"));
                }
                self.tau = v;
            }
            "min_freq" => self.min_freq = at_least(key, parse(key, value)?, 1)?,
            "disable_memory" => self.flags.disable_memory = parse_bool(key, value)?,
            "disable_key_extraction" => self.flags.disable_key_extraction = parse_bool(key, value)?,
            "disable_comparative" => self.flags.disable_comparative = parse_bool(key, value)?,
            "synth_count" => self.synth_count = at_least(key, parse(key, value)?, 1)?,
            "synth_seed" => self.synth_seed = parse(key, value)?,
            _ => return Err(ConfigError::new(key, "unknown key")),
        }
        Ok(())
    }

    /// Parses the file format: one assignment per line, `#` starts a comment.
    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        let mut seen = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError::new(line, format!("line {}: expected key=value", n + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if seen.contains(&key) {
                return Err(ConfigError::new(key, "duplicate key"));
            }
            config.set(key, value)?;
            seen.push(key);
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, crate::CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::CliError::read(path, e))?;
        Ok(Self::parse_str(&text)?)
    }

    pub fn train_config(&self, stage: Stage) -> TrainConfig {
        TrainConfig {
            stage,
            learning_rate: self.lr,
            epochs: self.epochs,
            lambda: self.lambda,
            l_chunk: self.l_chunk,
            d: self.d,
            seed: self.seed,
            key_k: self.key_k,
            flags: self.flags,
            ..TrainConfig::default()
        }
    }

    pub fn decode_settings(&self) -> DecodeSettings {
        DecodeSettings {
            max_len: self.max_len,
            temperature: self.temperature,
            seed: self.seed,
            l_chunk: self.l_chunk,
            key_k: self.key_k,
            flags: self.flags,
        }
    }

    /// `key=value` lines for every key, in the documented order.
    pub fn to_file_string(&self) -> String {
        let path = |p: &Path| p.display().to_string();
        let stage = match self.stage {
            Stage::Pretrain => "pretrain",
            Stage::Comparative => "comparative",
        };
        let values: [String; 22] = [
            stage.to_string(),
            path(&self.data),
            path(&self.vocab),
            self.checkpoint_in.as_deref().map(path).unwrap_or_default(),
            path(&self.checkpoint_out),
            path(&self.report),
            self.d.to_string(),
            self.l_chunk.to_string(),
            self.lr.to_string(),
            self.epochs.to_string(),
            self.lambda.to_string(),
            self.seed.to_string(),
            self.key_k.to_string(),
            self.max_len.to_string(),
            self.temperature.to_string(),
            self.tau.to_string(),
            self.min_freq.to_string(),
            self.flags.disable_memory.to_string(),
            self.flags.disable_key_extraction.to_string(),
            self.flags.disable_comparative.to_string(),
            self.synth_count.to_string(),
            self.synth_seed.to_string(),
        ];
        KEYS.iter()
            .zip(values)
            .filter(|(_, v)| !v.is_empty())
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}
