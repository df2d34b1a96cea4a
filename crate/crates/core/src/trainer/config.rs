use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::curriculum::{CurriculumName, MaskingPolicy};
use crate::error::{Error, Result};
use crate::model::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelPreset {
    Desk,
    Full,
}

impl FromStr for ModelPreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "desk" => Ok(ModelPreset::Desk),
            "full" => Ok(ModelPreset::Full),
            other => Err(Error::Config(format!("unknown model preset `{other}` (desk, full)"))),
        }
    }
}

/// Per-field overrides applied on top of the preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelOverrides {
    pub n_layers: Option<usize>,
    pub n_heads: Option<usize>,
    pub hidden: Option<usize>,
    pub ffn_mult: Option<usize>,
    pub layer_norm_eps: Option<f64>,
    pub dropout: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub tagged_corpus: PathBuf,
    pub tokenizer: PathBuf,
    pub output_dir: PathBuf,
    pub curriculum: CurriculumName,
    /// Stage start fractions; `None` uses the curriculum's defaults.
    pub boundaries: Option<Vec<f64>>,
    pub policy: MaskingPolicy,
    pub preset: ModelPreset,
    pub model: ModelOverrides,
    pub total_steps: usize,
    pub warmup_steps: usize,
    pub peak_lr: f64,
    pub batch_size: usize,
    pub max_seq_len: usize,
    pub seed: u64,
    /// 0 disables periodic checkpoints (stage-boundary and final ones are
    /// still written).
    pub checkpoint_every: usize,
    pub log_every: usize,
    pub lambda_tag: f64,
    pub weight_decay: f64,
    /// Reorders batches once per epoch; off keeps corpus (age) order.
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            tagged_corpus: PathBuf::new(),
            tokenizer: PathBuf::new(),
            output_dir: PathBuf::from("run"),
            curriculum: CurriculumName::None,
            boundaries: None,
            policy: MaskingPolicy::default(),
            preset: ModelPreset::Desk,
            model: ModelOverrides::default(),
            total_steps: 400_000,
            warmup_steps: 100_000,
            peak_lr: 1e-3,
            batch_size: 32,
            max_seq_len: 128,
            seed: 0,
            checkpoint_every: 50_000,
            log_every: 50,
            lambda_tag: 1.0,
            weight_decay: 0.01,
            shuffle: false,
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse `{value}`: {e}")))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got `{value}`"))),
    }
}

pub const CONFIG_KEYS: [&str; 27] = [
    "tagged_corpus",
    "tokenizer",
    "output_dir",
    "curriculum",
    "curriculum.name",
    "curriculum.boundaries",
    "curriculum.active_ratio",
    "curriculum.base_ratio",
    "model",
    "model.preset",
    "model.n_layers",
    "model.n_heads",
    "model.hidden",
    "model.ffn_mult",
    "model.layer_norm_eps",
    "model.dropout",
    "total_steps",
    "warmup_steps",
    "peak_lr",
    "batch_size",
    "max_seq_len",
    "seed",
    "checkpoint_every",
    "log_every",
    "lambda_tag",
    "weight_decay",
    "shuffle",
];

impl TrainConfig {
    /// Sets one `key = value` entry. Relative paths are kept as given.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "tagged_corpus" => self.tagged_corpus = value.into(),
            "tokenizer" => self.tokenizer = value.into(),
            "output_dir" => self.output_dir = value.into(),
            "curriculum" | "curriculum.name" => self.curriculum = value.parse()?,
            "curriculum.boundaries" => {
                self.boundaries = if value.is_empty() || value == "default" {
                    None
                } else {
                    Some(
                        value
                            .split(',')
                            .map(|v| num::<f64>("curriculum.boundaries", v.trim()))
                            .collect::<Result<_>>()?,
                    )
                }
            }
            "curriculum.active_ratio" => {
                self.policy = MaskingPolicy::new(num(key, value)?, self.policy.base_ratio)?
            }
            "curriculum.base_ratio" => {
                self.policy = MaskingPolicy::new(self.policy.active_ratio, num(key, value)?)?
            }
            "model" | "model.preset" => self.preset = value.parse()?,
            "model.n_layers" => self.model.n_layers = Some(num(key, value)?),
            "model.n_heads" => self.model.n_heads = Some(num(key, value)?),
            "model.hidden" => self.model.hidden = Some(num(key, value)?),
            "model.ffn_mult" => self.model.ffn_mult = Some(num(key, value)?),
            "model.layer_norm_eps" => self.model.layer_norm_eps = Some(num(key, value)?),
            "model.dropout" => self.model.dropout = Some(num(key, value)?),
            "total_steps" => self.total_steps = num(key, value)?,
            "warmup_steps" => self.warmup_steps = num(key, value)?,
            "peak_lr" => self.peak_lr = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "max_seq_len" => self.max_seq_len = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "checkpoint_every" => self.checkpoint_every = num(key, value)?,
            "log_every" => self.log_every = num(key, value)?,
            "lambda_tag" => self.lambda_tag = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "shuffle" => self.shuffle = flag(key, value)?,
            other => {
                return Err(Error::Config(format!(
                    "unknown key `{other}` (valid: {})",
                    CONFIG_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies a flat `key = value` file on top of `self`. `#` starts a
    /// comment; blank lines are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(k, v).map_err(|e| Error::Parse { line: idx + 1, message: e.to_string() })?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = TrainConfig::parse(&std::fs::read_to_string(path)?)?;
        if let Some(dir) = path.parent() {
            for p in [&mut cfg.tagged_corpus, &mut cfg.tokenizer, &mut cfg.output_dir] {
                if p.is_relative() && !p.as_os_str().is_empty() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Renders the config back to the flat file format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("tagged_corpus", self.tagged_corpus.display().to_string());
        kv("tokenizer", self.tokenizer.display().to_string());
        kv("output_dir", self.output_dir.display().to_string());
        kv("curriculum.name", self.curriculum.as_str().to_string());
        if let Some(b) = &self.boundaries {
            kv("curriculum.boundaries", b.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
        }
        kv("curriculum.active_ratio", self.policy.active_ratio.to_string());
        kv("curriculum.base_ratio", self.policy.base_ratio.to_string());
        let preset = match self.preset {
            ModelPreset::Desk => "desk",
            ModelPreset::Full => "full",
        };
        kv("model.preset", preset.to_string());
        let m = &self.model;
        for (k, v) in [
            ("model.n_layers", m.n_layers),
            ("model.n_heads", m.n_heads),
            ("model.hidden", m.hidden),
            ("model.ffn_mult", m.ffn_mult),
        ] {
            if let Some(v) = v {
                kv(k, v.to_string());
            }
        }
        if let Some(v) = m.layer_norm_eps {
            kv("model.layer_norm_eps", v.to_string());
        }
        if let Some(v) = m.dropout {
            kv("model.dropout", v.to_string());
        }
        kv("total_steps", self.total_steps.to_string());
        kv("warmup_steps", self.warmup_steps.to_string());
        kv("peak_lr", self.peak_lr.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("max_seq_len", self.max_seq_len.to_string());
        kv("seed", self.seed.to_string());
        kv("checkpoint_every", self.checkpoint_every.to_string());
        kv("log_every", self.log_every.to_string());
        kv("lambda_tag", self.lambda_tag.to_string());
        kv("weight_decay", self.weight_decay.to_string());
        kv("shuffle", self.shuffle.to_string());
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.total_steps == 0 {
            return bad("total_steps must be positive");
        }
        if self.warmup_steps >= self.total_steps {
            return bad("warmup_steps must be smaller than total_steps");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.max_seq_len < 2 {
            return bad("max_seq_len must be at least 2");
        }
        if self.log_every == 0 {
            return bad("log_every must be positive");
        }
        if !(self.peak_lr >= 0.0 && self.peak_lr.is_finite()) {
            return bad("peak_lr must be a finite non-negative number");
        }
        if !(self.lambda_tag >= 0.0 && self.lambda_tag.is_finite()) {
            return bad("lambda_tag must be a finite non-negative number");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        Ok(())
    }

    pub fn model_config(&self, vocab_size: usize, n_tag_labels: usize) -> Result<ModelConfig> {
        let mut cfg = match self.preset {
            ModelPreset::Desk => ModelConfig::desk(vocab_size, n_tag_labels),
            ModelPreset::Full => ModelConfig { vocab_size, ..ModelConfig::full(n_tag_labels) },
        };
        let m = &self.model;
        cfg.n_layers = m.n_layers.unwrap_or(cfg.n_layers);
        cfg.n_heads = m.n_heads.unwrap_or(cfg.n_heads);
        cfg.hidden = m.hidden.unwrap_or(cfg.hidden);
        cfg.ffn_mult = m.ffn_mult.unwrap_or(cfg.ffn_mult);
        cfg.layer_norm_eps = m.layer_norm_eps.unwrap_or(cfg.layer_norm_eps);
        cfg.dropout = m.dropout.unwrap_or(cfg.dropout);
        cfg.max_seq_len = self.max_seq_len;
        cfg.validate()?;
        Ok(cfg)
    }
}
