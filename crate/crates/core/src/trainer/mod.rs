//! Training loop: packed batches, curriculum masking, the joint MLM and
//! tag objective, AdamW, checkpoints and metrics.

mod config;
mod data;

pub use config::{ModelOverrides, ModelPreset, TrainConfig, CONFIG_KEYS};
pub use data::{pack_sequences, tokenize_tagged, Batch, BatchCycle, TaggedTokens};

use std::fs::{self, File, OpenOptions};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curriculum::{build_schedule, select_masks, step_seed, CurriculumSchedule};
use crate::error::{Error, Result};
use crate::model::{
    adamw_step, backward, init_model, lr_at, AdamWConfig, Checkpoint, LossSpec, LossValue, ModelParams,
    OptimizerState,
};
use crate::tagging::{load_tagged_corpus, TagVocabulary};
use crate::tokenizer::{TokenizerModel, MASK_ID};

pub const METRICS_FILE: &str = "metrics.csv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const METRICS_COLUMNS: [&str; 8] = [
    "step",
    "stage",
    "lr",
    "mlm_loss",
    "tag_loss",
    "masked_fraction_active",
    "masked_fraction_base",
    "epoch",
];

/// One row of the metrics CSV, aggregated over the steps since the previous
/// row. Rows are also closed at every stage end, so a stage change shows up
/// exactly on the first row of the new stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    pub stage: String,
    pub lr: f64,
    pub mlm_loss: f64,
    pub tag_loss: f64,
    pub masked_fraction_active: f64,
    pub masked_fraction_base: f64,
    pub epoch: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
struct Window {
    steps: usize,
    mlm_sum: f64,
    tag_sum: f64,
    active_masked: u64,
    active_total: u64,
    base_masked: u64,
    base_total: u64,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        f64::NAN
    } else {
        a as f64 / b as f64
    }
}

/// Resumable state stored in every checkpoint's `run` field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RunState {
    config: TrainConfig,
    stage: String,
    window: Window,
    tokens_consumed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: LossValue,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub resume_from: Option<PathBuf>,
    /// Stop (with a checkpoint) after this many completed steps.
    pub stop_at: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub steps_completed: usize,
    pub last_checkpoint: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    /// Rows written by this invocation.
    pub metrics: Vec<MetricsRow>,
    /// Per-step losses of this invocation.
    pub steps: Vec<StepRecord>,
    pub tokens_consumed: u64,
    pub schedule: CurriculumSchedule,
}

/// Tokenized, packed and batched training data.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub tokenizer: TokenizerModel,
    pub vocab: TagVocabulary,
    pub cycle: BatchCycle,
}

impl TrainData {
    pub fn new(
        config: &TrainConfig,
        sentences: &[crate::tagging::TaggedSentence],
        tokenizer: TokenizerModel,
        vocab: TagVocabulary,
    ) -> Result<Self> {
        let stream = tokenize_tagged(sentences, &tokenizer, &vocab)?;
        let packed = pack_sequences(&stream, config.max_seq_len);
        if packed.is_empty() {
            return Err(Error::Config("training corpus is empty".into()));
        }
        let shuffle = config.shuffle.then_some(config.seed);
        Ok(TrainData { tokenizer, vocab, cycle: BatchCycle::new(packed, config.batch_size, shuffle) })
    }

    pub fn load(config: &TrainConfig) -> Result<Self> {
        let tokenizer = TokenizerModel::load(&config.tokenizer)?;
        let vocab = TagVocabulary::default();
        let reader = BufReader::new(File::open(&config.tagged_corpus)?);
        let sentences = load_tagged_corpus(reader, &vocab)?;
        TrainData::new(config, &sentences, tokenizer, vocab)
    }
}

/// Loads data from the paths in `config` and trains.
pub fn train(config: &TrainConfig, options: &TrainOptions) -> Result<TrainOutcome> {
    config.validate()?;
    let data = TrainData::load(config)?;
    train_on(config, &data, options)
}

fn without_paths(c: &TrainConfig) -> TrainConfig {
    TrainConfig {
        tagged_corpus: PathBuf::new(),
        tokenizer: PathBuf::new(),
        output_dir: PathBuf::new(),
        ..c.clone()
    }
}

struct Resumed {
    params: ModelParams<f32>,
    opt: OptimizerState<f32>,
    step: usize,
    window: Window,
    tokens: u64,
}

fn resume(path: &Path, config: &TrainConfig, tokenizer_hash: &str) -> Result<Resumed> {
    let ck = Checkpoint::load(path)?;
    let state: RunState = serde_json::from_value(ck.header.run.clone())
        .map_err(|e| Error::Checkpoint(format!("{}: no training state: {e}", path.display())))?;
    if without_paths(&state.config) != without_paths(config) {
        return Err(Error::Config(format!(
            "{} was written with a different training config",
            path.display()
        )));
    }
    if ck.header.tokenizer_hash != tokenizer_hash {
        return Err(Error::Checkpoint("tokenizer does not match the checkpoint".into()));
    }
    let opt = ck
        .optimizer
        .ok_or_else(|| Error::Checkpoint(format!("{} has no optimizer state", path.display())))?;
    Ok(Resumed { params: ck.params, opt, step: ck.header.step, window: state.window, tokens: state.tokens_consumed })
}

/// Keeps the rows logged before `step` and returns an appending writer.
fn open_metrics(path: &Path, step: usize) -> Result<csv::Writer<File>> {
    let mut keep = Vec::new();
    if step > 0 && path.exists() {
        let mut rdr = csv::Reader::from_path(path).map_err(crate::eval::csv_err)?;
        for row in rdr.deserialize::<MetricsRow>() {
            let row = row.map_err(crate::eval::csv_err)?;
            if row.step < step {
                keep.push(row);
            }
        }
    }
    let file = OpenOptions::new().create(true).write(true).truncate(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(METRICS_COLUMNS).map_err(crate::eval::csv_err)?;
    for r in &keep {
        w.serialize(r).map_err(crate::eval::csv_err)?;
    }
    w.flush()?;
    Ok(w)
}

pub fn train_on(config: &TrainConfig, data: &TrainData, options: &TrainOptions) -> Result<TrainOutcome> {
    config.validate()?;
    let total = config.total_steps;
    let tokenizer_hash = data.tokenizer.fingerprint();
    let model_cfg = config.model_config(data.tokenizer.vocab_size(), data.vocab.n_labels())?;
    let schedule = build_schedule(config.curriculum, total, config.boundaries.as_deref(), config.policy, &data.vocab)?;
    let adam = AdamWConfig { weight_decay: config.weight_decay, ..AdamWConfig::default() };

    let Resumed { mut params, mut opt, step: start, mut window, mut tokens } = match &options.resume_from {
        Some(path) => resume(path, config, &tokenizer_hash)?,
        None => {
            let params = init_model::<f32>(&model_cfg, config.seed);
            let opt = OptimizerState::new(&params, adam);
            Resumed { params, opt, step: 0, window: Window::default(), tokens: 0 }
        }
    };
    if params.config != model_cfg {
        return Err(Error::Config("checkpoint model config differs from the training config".into()));
    }
    let end = options.stop_at.unwrap_or(total).min(total);
    if start > end {
        return Err(Error::Config(format!("checkpoint is at step {start}, past the stop step {end}")));
    }

    fs::create_dir_all(&config.output_dir)?;
    let mut metrics_out = open_metrics(&config.output_dir.join(METRICS_FILE), start)?;

    let save = |params: &ModelParams<f32>, opt: &OptimizerState<f32>, step: usize, stage: &str, window: Window, tokens: u64, name: &str| -> Result<PathBuf> {
        let run = RunState { config: config.clone(), stage: stage.to_string(), window, tokens_consumed: tokens };
        let ck = Checkpoint::new(
            params.clone(),
            Some(opt.clone()),
            step,
            data.vocab.clone(),
            tokenizer_hash.clone(),
            serde_json::to_value(&run)?,
        );
        let path = config.output_dir.join(name);
        ck.save(&path)?;
        Ok(path)
    };

    let mut outcome_steps = Vec::with_capacity(end - start);
    let mut rows = Vec::new();
    let mut checkpoints = Vec::new();
    let mut last_checkpoint = options.resume_from.clone().unwrap_or_default();

    for step in start..end {
        let stage_idx = schedule.stage_index(step)?;
        let stage = &schedule.stages[stage_idx];
        let stage_name = stage.unit.name.as_str();
        let batch = data.cycle.batch(step);

        let mut rng = ChaCha8Rng::seed_from_u64(step_seed(config.seed, step as u64));
        let masks = select_masks(&batch.tags, &batch.maskable, stage, &mut rng);
        let mut inputs = batch.inputs;
        let mut positions = Vec::new();
        let mut vocab_targets = Vec::new();
        let mut tag_targets = Vec::new();
        for (i, &m) in masks.iter().enumerate() {
            if batch.maskable[i] {
                let (masked, total) = if stage.matches(batch.tags[i]) {
                    (&mut window.active_masked, &mut window.active_total)
                } else {
                    (&mut window.base_masked, &mut window.base_total)
                };
                *total += 1;
                *masked += m as u64;
            }
            if m {
                positions.push(i);
                vocab_targets.push(inputs.ids[i]);
                tag_targets.push(stage.tag_target(batch.tags[i]));
                inputs.ids[i] = MASK_ID;
            }
        }
        tokens += inputs.attend.iter().filter(|&&a| a).count() as u64;

        let spec = LossSpec {
            mask_positions: &positions,
            vocab_targets: &vocab_targets,
            tag_targets: &tag_targets,
            active_tag_ids: &stage.active_ids,
            lambda_tag: config.lambda_tag,
        };
        let mut dropout_rng = ChaCha8Rng::seed_from_u64(step_seed(config.seed, step as u64));
        dropout_rng.set_stream(1);
        let (value, grads) = backward(&params, &inputs, &spec, Some(&mut dropout_rng as &mut dyn RngCore))?;
        if !value.total.is_finite() || !grads.all_finite() {
            let name = format!("diagnostic-step{step:08}.ckpt");
            let path = save(&params, &opt, step, stage_name, window, tokens, &name)?;
            return Err(Error::NonFinite { step, checkpoint: path.display().to_string() });
        }
        let lr = lr_at(step, total, config.warmup_steps, config.peak_lr);
        adamw_step(&mut params, &grads, &mut opt, lr);
        outcome_steps.push(StepRecord { step, lr, loss: value });
        window.steps += 1;
        window.mlm_sum += value.mlm;
        window.tag_sum += value.tag;

        let completed = step + 1;
        let stage_end = completed == stage.end_step;
        if completed % config.log_every == 0 || stage_end {
            let n = window.steps as f64;
            let row = MetricsRow {
                step,
                stage: stage_name.to_string(),
                lr,
                mlm_loss: window.mlm_sum / n,
                tag_loss: window.tag_sum / n,
                masked_fraction_active: ratio(window.active_masked, window.active_total),
                masked_fraction_base: ratio(window.base_masked, window.base_total),
                epoch: data.cycle.epoch(step),
            };
            metrics_out.serialize(&row).map_err(crate::eval::csv_err)?;
            metrics_out.flush()?;
            rows.push(row);
            window = Window::default();
        }

        let mut names = Vec::new();
        if config.checkpoint_every > 0 && completed % config.checkpoint_every == 0 {
            names.push(format!("step-{completed:08}.ckpt"));
        }
        if stage_end {
            names.push(format!("stage-{stage_idx}-{stage_name}.ckpt"));
        }
        if completed == end && end < total {
            names.push(format!("step-{completed:08}.ckpt"));
        }
        if completed == total {
            names.push(FINAL_CHECKPOINT.to_string());
        }
        names.dedup();
        if let Some((first, rest)) = names.split_first() {
            let path = save(&params, &opt, completed, stage_name, window, tokens, first)?;
            checkpoints.push(path.clone());
            for alias in rest {
                let other = config.output_dir.join(alias);
                fs::copy(&path, &other)?;
                checkpoints.push(other);
            }
            last_checkpoint = path;
        }
    }

    Ok(TrainOutcome {
        steps_completed: end,
        last_checkpoint,
        checkpoints,
        metrics: rows,
        steps: outcome_steps,
        tokens_consumed: tokens,
        schedule,
    })
}
