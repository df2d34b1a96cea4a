//! Command-line entry point. Every subcommand maps onto one pipeline stage
//! and leaves a `*.manifest.json` next to what it writes.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::corpus::{build_age_ordered_corpus, corpus_stats, parse_transcripts, text_stats, TranscriptFormat};
use crate::curriculum::CurriculumName;
use crate::error::{Error, Result};
use crate::eval::{
    accuracy_by_phenomenon, load_pairs, paired_t_test, score_pairs, write_results_csv, AccuracySummary,
    ScoringMethod, UnigramModel,
};
use crate::model::Checkpoint;
use crate::tokenizer::TokenizerModel;
use crate::trainer::{train, TrainConfig, TrainOptions};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "CURRICULUM_LM_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "curriculum-lm", version, about = "Tag-conditional masking curricula for small masked LMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Filter transcripts to caregiver speech below an age cutoff, ordered by age.
    PrepareCorpus(PrepareArgs),
    /// Train a BPE tokenizer on a one-sentence-per-line corpus.
    TrainTokenizer(TokenizerArgs),
    /// Train a model under a curriculum.
    Train(TrainArgs),
    /// Score minimal pairs with a checkpoint.
    Evaluate(EvalArgs),
    /// Paired t-test between two evaluation summaries.
    Significance(SignificanceArgs),
    /// Whitespace-token statistics of a text corpus.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
struct PrepareArgs {
    /// Transcript files (repeatable).
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// jsonl or chat.
    #[arg(long, default_value = "jsonl")]
    format: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = crate::corpus::DEFAULT_CUTOFF_MONTHS)]
    cutoff_months: u32,
    /// Stats JSON path; defaults to `<out>.stats.json`.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TokenizerArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8192)]
    vocab_size: usize,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    curriculum: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    total_steps: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    tagged_corpus: Option<PathBuf>,
    #[arg(long)]
    tokenizer: Option<PathBuf>,
    /// Extra `key=value` overrides (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Continue from a checkpoint written by the same config.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Stop after this many completed steps.
    #[arg(long)]
    stop_at: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    tokenizer: PathBuf,
    /// JSONL minimal pairs.
    #[arg(long)]
    pairs: PathBuf,
    /// logprob or slor.
    #[arg(long, default_value = "logprob")]
    method: String,
    /// Training text for the SLOR unigram model.
    #[arg(long)]
    unigram_corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    smoothing: f64,
    /// Output directory for results.csv and summary.json.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SignificanceArgs {
    /// Summary JSON (or a JSON array of accuracies) of the first run.
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Also write the result as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Also count subword tokens with this tokenizer.
    #[arg(long)]
    tokenizer: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `argv` (program name first) and runs; returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command, &argv) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.kind());
            1
        }
    }
}

fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    argv: Vec<String>,
    config: C,
    seed: Option<u64>,
    version: &'static str,
    created_unix: u64,
}

fn write_manifest<C: Serialize>(path: &Path, command: &str, argv: &[OsString], config: C, seed: Option<u64>) -> Result<()> {
    let manifest = Manifest {
        command,
        argv: argv.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
        config,
        seed,
        version: env!("CARGO_PKG_VERSION"),
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    write_json(path, &manifest)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => Ok(std::fs::create_dir_all(p)?),
        _ => Ok(()),
    }
}

fn dispatch(command: Command, argv: &[OsString]) -> Result<()> {
    match command {
        Command::PrepareCorpus(a) => prepare_corpus(a, argv),
        Command::TrainTokenizer(a) => train_tokenizer(a, argv),
        Command::Train(a) => run_train(a, argv),
        Command::Evaluate(a) => evaluate(a, argv),
        Command::Significance(a) => significance(a, argv),
        Command::Stats(a) => stats(a, argv),
    }
}

fn prepare_corpus(a: PrepareArgs, argv: &[OsString]) -> Result<()> {
    let format: TranscriptFormat = a.format.parse()?;
    let mut utterances = Vec::new();
    for path in &a.inputs {
        let source = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        utterances.extend(parse_transcripts(BufReader::new(File::open(path)?), format, &source)?);
    }
    let corpus = build_age_ordered_corpus(utterances, a.cutoff_months)?;
    create_parent(&a.out)?;
    let mut w = BufWriter::new(File::create(&a.out)?);
    corpus.write_text(&mut w)?;
    w.flush()?;
    let stats = corpus_stats(&corpus);
    let stats_path = a.stats.clone().unwrap_or_else(|| sibling(&a.out, ".stats.json"));
    write_json(&stats_path, &stats)?;
    let config = json!({
        "inputs": a.inputs,
        "format": a.format,
        "out": a.out,
        "cutoff_months": a.cutoff_months,
        "stats": stats_path,
    });
    write_manifest(&sibling(&a.out, ".manifest.json"), "prepare-corpus", argv, config, None)?;
    println!(
        "{} utterances, {} tokens -> {}",
        stats.n_utterances,
        stats.n_tokens,
        a.out.display()
    );
    Ok(())
}

fn train_tokenizer(a: TokenizerArgs, argv: &[OsString]) -> Result<()> {
    let text = std::fs::read_to_string(&a.input)?;
    let tok = TokenizerModel::train(text.lines(), a.vocab_size)?;
    create_parent(&a.out)?;
    tok.save(&a.out)?;
    let config = json!({"in": a.input, "out": a.out, "vocab_size": a.vocab_size, "fingerprint": tok.fingerprint()});
    write_manifest(&sibling(&a.out, ".manifest.json"), "train-tokenizer", argv, config, None)?;
    println!("vocabulary of {} -> {}", tok.vocab_size(), a.out.display());
    Ok(())
}

fn run_train(a: TrainArgs, argv: &[OsString]) -> Result<()> {
    let mut cfg = TrainConfig { output_dir: std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| "run".into()), ..TrainConfig::default() };
    if let Some(path) = &a.config {
        let file = TrainConfig::load(path)?;
        let keep_env_dir = !std::fs::read_to_string(path)?.lines().any(|l| l.trim_start().starts_with("output_dir"));
        let out = cfg.output_dir.clone();
        cfg = file;
        if keep_env_dir {
            cfg.output_dir = out;
        }
    }
    if let Some(c) = &a.curriculum {
        cfg.curriculum = c.parse::<CurriculumName>()?;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(t) = a.total_steps {
        cfg.total_steps = t;
    }
    if let Some(p) = a.output_dir {
        cfg.output_dir = p;
    }
    if let Some(p) = a.tagged_corpus {
        cfg.tagged_corpus = p;
    }
    if let Some(p) = a.tokenizer {
        cfg.tokenizer = p;
    }
    for kv in &a.sets {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    write_manifest(&cfg.output_dir.join("train.manifest.json"), "train", argv, &cfg, Some(cfg.seed))?;
    std::fs::write(cfg.output_dir.join("train.cfg"), cfg.to_text())?;
    let options = TrainOptions { resume_from: a.resume, stop_at: a.stop_at };
    let outcome = train(&cfg, &options)?;
    if let Some(last) = outcome.metrics.last() {
        println!(
            "step {} stage {} mlm_loss {:.4} tag_loss {:.4}",
            last.step, last.stage, last.mlm_loss, last.tag_loss
        );
    }
    println!("{} steps done; checkpoint {}", outcome.steps_completed, outcome.last_checkpoint.display());
    Ok(())
}

fn evaluate(a: EvalArgs, argv: &[OsString]) -> Result<()> {
    let method: ScoringMethod = a.method.parse()?;
    let tokenizer = TokenizerModel::load(&a.tokenizer)?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    if ck.header.tokenizer_hash != tokenizer.fingerprint() {
        return Err(Error::Checkpoint("tokenizer does not match the checkpoint".into()));
    }
    let pairs = load_pairs(BufReader::new(File::open(&a.pairs)?))?;
    let unigram = match (method, &a.unigram_corpus) {
        (ScoringMethod::Slor, None) => {
            return Err(Error::Config("--method slor needs --unigram-corpus".into()));
        }
        (_, Some(path)) => {
            let text = std::fs::read_to_string(path)?;
            Some(UnigramModel::from_lines(&tokenizer, text.lines(), a.smoothing)?)
        }
        _ => None,
    };
    let results = score_pairs(&ck.params, &tokenizer, &pairs, method, unigram.as_ref())?;
    let summary = accuracy_by_phenomenon(&results)?;
    let out_dir = a.out_dir.clone().unwrap_or_else(default_out_dir);
    std::fs::create_dir_all(&out_dir)?;
    let mut w = BufWriter::new(File::create(out_dir.join("results.csv"))?);
    write_results_csv(&results, &mut w)?;
    w.flush()?;
    write_json(&out_dir.join("summary.json"), &summary)?;
    let config = json!({
        "checkpoint": a.checkpoint,
        "checkpoint_step": ck.header.step,
        "tokenizer": a.tokenizer,
        "pairs": a.pairs,
        "method": method,
        "unigram_corpus": a.unigram_corpus,
        "smoothing": a.smoothing,
    });
    write_manifest(&out_dir.join("evaluate.manifest.json"), "evaluate", argv, config, None)?;
    for (name, acc) in &summary.phenomena {
        println!("{name}\t{}\t{:.4}", acc.n, acc.accuracy);
    }
    println!("overall\t{}\t{:.4}", results.len(), summary.overall);
    Ok(())
}

/// Per-test-set accuracies from a summary JSON (keyed by phenomenon) or a
/// bare JSON array.
fn load_accuracies(path: &Path) -> Result<Vec<(String, f64)>> {
    let value: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    if let Some(arr) = value.as_array() {
        return arr
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_f64()
                    .map(|x| (i.to_string(), x))
                    .ok_or_else(|| Error::Stats(format!("{}: entry {i} is not a number", path.display())))
            })
            .collect();
    }
    let summary: AccuracySummary = serde_json::from_value(value)?;
    Ok(summary.phenomena.into_iter().map(|(k, v)| (k, v.accuracy)).collect())
}

fn significance(a: SignificanceArgs, argv: &[OsString]) -> Result<()> {
    let ra = load_accuracies(&a.a)?;
    let rb = load_accuracies(&a.b)?;
    let keys_a: Vec<&String> = ra.iter().map(|(k, _)| k).collect();
    let keys_b: Vec<&String> = rb.iter().map(|(k, _)| k).collect();
    if keys_a != keys_b {
        return Err(Error::Stats("the two runs cover different test sets".into()));
    }
    let xa: Vec<f64> = ra.iter().map(|(_, v)| *v).collect();
    let xb: Vec<f64> = rb.iter().map(|(_, v)| *v).collect();
    let t = paired_t_test(&xa, &xb)?;
    println!("t = {}", t.t);
    println!("df = {}", t.df);
    println!("p = {}", t.p);
    if let Some(out) = &a.out {
        create_parent(out)?;
        write_json(out, &t)?;
        write_manifest(&sibling(out, ".manifest.json"), "significance", argv, json!({"a": a.a, "b": a.b}), None)?;
    }
    Ok(())
}

fn stats(a: StatsArgs, argv: &[OsString]) -> Result<()> {
    let text = std::fs::read_to_string(&a.input)?;
    let mut value = serde_json::to_value(text_stats(text.lines()))?;
    if let Some(path) = &a.tokenizer {
        let tok = TokenizerModel::load(path)?;
        let n: usize = text.lines().map(|l| tok.encode(l).len()).sum();
        value["n_subword_tokens"] = json!(n);
    }
    println!("{}", serde_json::to_string_pretty(&value)?);
    if let Some(out) = &a.out {
        create_parent(out)?;
        write_json(out, &value)?;
        write_manifest(&sibling(out, ".manifest.json"), "stats", argv, json!({"in": a.input, "tokenizer": a.tokenizer}), None)?;
    }
    Ok(())
}
