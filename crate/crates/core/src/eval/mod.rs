//! Minimal-pair evaluation: pseudo-log-likelihood and SLOR scoring,
//! per-phenomenon accuracy and paired t-tests.

mod stats;

pub use stats::{paired_t_test, student_t_two_sided_p, TTestResult};

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{vocab_log_probs_at, Float, Inputs, ModelParams};
use crate::tokenizer::{is_special, TokenizerModel, EOS_ID, MASK_ID};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimalPair {
    pub phenomenon: String,
    #[serde(alias = "good", rename = "sentence_good")]
    pub good: String,
    #[serde(alias = "bad", rename = "sentence_bad")]
    pub bad: String,
}

/// Reads minimal pairs from JSONL (`phenomenon`, `sentence_good`,
/// `sentence_bad`; `good`/`bad` accepted as aliases).
pub fn load_pairs<R: BufRead>(input: R) -> Result<Vec<MinimalPair>> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: idx + 1, message };
        let pair: MinimalPair = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if pair.phenomenon.is_empty() {
            return Err(parse_err("empty phenomenon".into()));
        }
        if pair.good == pair.bad {
            return Err(parse_err("good and bad sentences are identical".into()));
        }
        out.push(pair);
    }
    Ok(out)
}

/// Add-k smoothed subword unigram distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnigramModel {
    pub counts: Vec<u64>,
    pub total: u64,
    pub smoothing: f64,
}

impl UnigramModel {
    /// Counts non-special token ids; `vocab_size` fixes the support.
    pub fn from_ids<I: IntoIterator<Item = u32>>(ids: I, vocab_size: usize, smoothing: f64) -> Result<Self> {
        if !(smoothing > 0.0) {
            return Err(Error::Config("unigram smoothing must be positive".into()));
        }
        let mut counts = vec![0u64; vocab_size];
        let mut total = 0;
        for id in ids {
            if is_special(id) {
                continue;
            }
            let slot = counts
                .get_mut(id as usize)
                .ok_or_else(|| Error::OutOfRange(format!("token id {id} >= {vocab_size}")))?;
            *slot += 1;
            total += 1;
        }
        Ok(UnigramModel { counts, total, smoothing })
    }

    pub fn from_lines<'a, I>(tokenizer: &TokenizerModel, lines: I, smoothing: f64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let ids = lines.into_iter().flat_map(|l| tokenizer.encode(l).token_ids);
        UnigramModel::from_ids(ids, tokenizer.vocab_size(), smoothing)
    }

    pub fn prob(&self, id: u32) -> f64 {
        let c = self.counts.get(id as usize).copied().unwrap_or(0) as f64;
        (c + self.smoothing) / (self.total as f64 + self.smoothing * self.counts.len() as f64)
    }

    pub fn log_prob(&self, id: u32) -> f64 {
        self.prob(id).ln()
    }
}

/// Per-position masked log-probabilities of `tokens` (each position masked
/// in turn, EOS appended as in training).
pub fn pll_token_scores<F: Float>(params: &ModelParams<F>, tokens: &[u32]) -> Result<Vec<f64>> {
    let n = tokens.len();
    if n == 0 {
        return Err(Error::Eval("sentence has no tokens".into()));
    }
    let seq = n + 1;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = tokens.to_vec();
        row.push(EOS_ID);
        row[i] = MASK_ID;
        rows.push(row);
    }
    let inputs = Inputs::from_rows(&rows);
    let positions: Vec<usize> = (0..n).map(|i| i * seq + i).collect();
    let logp = vocab_log_probs_at(params, &inputs, &positions)?;
    Ok(tokens
        .iter()
        .enumerate()
        .map(|(i, &t)| if is_special(t) { 0.0 } else { logp[[i, t as usize]].as_f64() })
        .collect())
}

/// Pseudo-log-likelihood: Σᵢ log P(tokenᵢ | sentence with i masked), over
/// non-special positions, unnormalized.
pub fn pll_score<F: Float>(params: &ModelParams<F>, tokenizer: &TokenizerModel, sentence: &str) -> Result<f64> {
    let tokens = tokenizer.encode(sentence).token_ids;
    Ok(pll_token_scores(params, &tokens)?.iter().sum())
}

/// `(log p_model − Σ log p_unigram) / |X|` with |X| the subword count.
pub fn slor(logp_model: f64, tokens: &[u32], unigram: &UnigramModel) -> f64 {
    let n = tokens.iter().filter(|&&t| !is_special(t)).count();
    let logp_u: f64 = tokens.iter().filter(|&&t| !is_special(t)).map(|&t| unigram.log_prob(t)).sum();
    slor_from_parts(logp_model, logp_u, n)
}

pub fn slor_from_parts(logp_model: f64, logp_unigram: f64, n_tokens: usize) -> f64 {
    (logp_model - logp_unigram) / n_tokens as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoringMethod {
    LogProb,
    Slor,
}

impl FromStr for ScoringMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logprob" | "log_prob" | "pll" => Ok(ScoringMethod::LogProb),
            "slor" => Ok(ScoringMethod::Slor),
            other => Err(Error::Config(format!("unknown scoring method `{other}` (logprob, slor)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub pair: MinimalPair,
    pub score_good: f64,
    pub score_bad: f64,
    /// Strictly higher score for the good sentence; ties count as wrong.
    pub correct: bool,
}

impl PairResult {
    pub fn new(pair: MinimalPair, score_good: f64, score_bad: f64) -> Self {
        PairResult { correct: score_good > score_bad, pair, score_good, score_bad }
    }
}

fn score_sentence<F: Float>(
    params: &ModelParams<F>,
    tokenizer: &TokenizerModel,
    sentence: &str,
    method: ScoringMethod,
    unigram: Option<&UnigramModel>,
) -> Result<f64> {
    let tokens = tokenizer.encode(sentence).token_ids;
    let logp: f64 = pll_token_scores(params, &tokens)?.iter().sum();
    Ok(match (method, unigram) {
        (ScoringMethod::LogProb, _) => logp,
        (ScoringMethod::Slor, Some(u)) => slor(logp, &tokens, u),
        (ScoringMethod::Slor, None) => unreachable!("checked by score_pairs"),
    })
}

pub fn score_pairs<F: Float>(
    params: &ModelParams<F>,
    tokenizer: &TokenizerModel,
    pairs: &[MinimalPair],
    method: ScoringMethod,
    unigram: Option<&UnigramModel>,
) -> Result<Vec<PairResult>> {
    if method == ScoringMethod::Slor && unigram.is_none() {
        return Err(Error::Config("SLOR scoring needs a unigram model".into()));
    }
    pairs
        .iter()
        .enumerate()
        .map(|(i, pair)| {
            let wrap = |e: Error| Error::Eval(format!("pair {i}: {e}"));
            let good = score_sentence(params, tokenizer, &pair.good, method, unigram).map_err(wrap)?;
            let bad = score_sentence(params, tokenizer, &pair.bad, method, unigram).map_err(wrap)?;
            Ok(PairResult::new(pair.clone(), good, bad))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhenomenonAccuracy {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub phenomena: BTreeMap<String, PhenomenonAccuracy>,
    /// Unweighted mean of the per-phenomenon accuracies.
    pub overall: f64,
}

pub fn accuracy_by_phenomenon(results: &[PairResult]) -> Result<AccuracySummary> {
    if results.is_empty() {
        return Err(Error::Eval("no results to aggregate".into()));
    }
    let mut phenomena: BTreeMap<String, PhenomenonAccuracy> = BTreeMap::new();
    for r in results {
        let e = phenomena
            .entry(r.pair.phenomenon.clone())
            .or_insert(PhenomenonAccuracy { n: 0, correct: 0, accuracy: 0.0 });
        e.n += 1;
        e.correct += r.correct as usize;
    }
    for e in phenomena.values_mut() {
        e.accuracy = e.correct as f64 / e.n as f64;
    }
    let overall = phenomena.values().map(|e| e.accuracy).sum::<f64>() / phenomena.len() as f64;
    Ok(AccuracySummary { phenomena, overall })
}

pub fn write_results_csv<W: Write>(results: &[PairResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["phenomenon", "sentence_good", "sentence_bad", "score_good", "score_bad", "correct"])
        .map_err(csv_err)?;
    for r in results {
        w.write_record([
            r.pair.phenomenon.as_str(),
            &r.pair.good,
            &r.pair.bad,
            &format!("{}", r.score_good),
            &format!("{}", r.score_bad),
            if r.correct { "1" } else { "0" },
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
