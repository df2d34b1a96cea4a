//! Child-directed speech ingestion: transcript parsing, the age filter and
//! ordering, and corpus statistics.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default age cutoff: six years, in months.
pub const DEFAULT_CUTOFF_MONTHS: u32 = 72;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpeakerRole {
    TargetChild,
    Caregiver,
    Other,
}

/// CHAT participant codes treated as adult caregivers.
const CAREGIVER_CODES: &[&str] = &[
    "MOT", "FAT", "GRA", "GRM", "GRF", "ADU", "AUN", "UNC", "CAR", "NUR", "TEA", "BAB", "INV",
    "EXP", "OBS", "PAR", "MOM", "DAD", "FEM", "MAL",
];

impl SpeakerRole {
    /// Maps a CHAT speaker code (with or without the leading `*`).
    pub fn from_code(code: &str) -> SpeakerRole {
        let code = code.trim().trim_start_matches('*').to_ascii_uppercase();
        if code == "CHI" {
            SpeakerRole::TargetChild
        } else if CAREGIVER_CODES.contains(&code.as_str()) {
            SpeakerRole::Caregiver
        } else {
            SpeakerRole::Other
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker_role: SpeakerRole,
    pub child_age_months: u32,
    pub text: String,
    pub source_id: String,
}

impl Utterance {
    pub fn new(
        speaker_role: SpeakerRole,
        child_age_months: u32,
        text: &str,
        source_id: &str,
    ) -> Self {
        Utterance {
            speaker_role,
            child_age_months,
            text: normalize_whitespace(text),
            source_id: source_id.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TranscriptFormat {
    Jsonl,
    ChatLite,
}

impl std::str::FromStr for TranscriptFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(TranscriptFormat::Jsonl),
            "chat" | "chatlite" | "cha" => Ok(TranscriptFormat::ChatLite),
            other => Err(Error::Config(format!("unknown transcript format `{other}`"))),
        }
    }
}

/// Collapses runs of whitespace into single spaces and trims the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses a CHAT age such as `2;06`, `2;6.15` or `3;` into months.
/// Days are truncated.
pub fn parse_age(age: &str) -> Option<u32> {
    let age = age.trim();
    let (years, rest) = age.split_once(';')?;
    let years: u32 = years.trim().parse().ok()?;
    let months_part = rest.split('.').next().unwrap_or("").trim();
    let months: u32 = if months_part.is_empty() {
        0
    } else {
        months_part.parse().ok()?
    };
    if months >= 12 {
        return None;
    }
    Some(years * 12 + months)
}

#[derive(Deserialize)]
struct JsonlRecord {
    speaker: String,
    #[serde(default)]
    age_months: Option<u32>,
    #[serde(default)]
    age: Option<String>,
    text: String,
    #[serde(default, alias = "transcript")]
    source: Option<String>,
}

/// Parses one transcript stream into utterances.
///
/// Utterances whose text is empty after whitespace normalization are
/// skipped. `source_id` labels every utterance unless a JSONL record
/// carries its own `source`/`transcript` field.
pub fn parse_transcripts<R: BufRead>(
    input: R,
    format: TranscriptFormat,
    source_id: &str,
) -> Result<Vec<Utterance>> {
    match format {
        TranscriptFormat::Jsonl => parse_jsonl(input, source_id),
        TranscriptFormat::ChatLite => parse_chat_lite(input, source_id),
    }
}

fn parse_jsonl<R: BufRead>(input: R, source_id: &str) -> Result<Vec<Utterance>> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonlRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let age = match (rec.age_months, rec.age.as_deref()) {
            (Some(m), _) => m,
            (None, Some(a)) => parse_age(a).ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("bad age `{a}`"),
            })?,
            (None, None) => {
                return Err(Error::Parse {
                    line: line_no,
                    message: "missing `age_months` or `age`".into(),
                })
            }
        };
        let src = rec.source.as_deref().unwrap_or(source_id);
        let utt = Utterance::new(SpeakerRole::from_code(&rec.speaker), age, &rec.text, src);
        if !utt.text.is_empty() {
            out.push(utt);
        }
    }
    Ok(out)
}

fn parse_chat_lite<R: BufRead>(input: R, source_id: &str) -> Result<Vec<Utterance>> {
    let mut out = Vec::new();
    let mut age: Option<u32> = None;
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if let Some(rest) = line.strip_prefix("@Age:") {
            age = Some(parse_age(rest).ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("bad age `{}`", rest.trim()),
            })?);
        } else if let Some(rest) = line.strip_prefix('*') {
            let (code, text) = rest.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                message: "utterance line without `:`".into(),
            })?;
            if code.is_empty() || code.contains(char::is_whitespace) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("bad speaker code `{code}`"),
                });
            }
            let age = age.ok_or_else(|| Error::Transcript {
                source_id: source_id.to_string(),
                message: format!("utterance at line {line_no} precedes any @Age header"),
            })?;
            let utt = Utterance::new(SpeakerRole::from_code(code), age, text, source_id);
            if !utt.text.is_empty() {
                out.push(utt);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeOrderedCorpus {
    pub utterances: Vec<Utterance>,
    pub cutoff_months: u32,
}

/// Keeps non-target-child utterances below the age cutoff, stably sorted by
/// child age.
pub fn build_age_ordered_corpus(
    utterances: Vec<Utterance>,
    cutoff_months: u32,
) -> Result<AgeOrderedCorpus> {
    if cutoff_months == 0 {
        return Err(Error::Config("cutoff_months must be positive".into()));
    }
    let mut kept: Vec<Utterance> = utterances
        .into_iter()
        .filter(|u| u.speaker_role != SpeakerRole::TargetChild && u.child_age_months < cutoff_months)
        .collect();
    kept.sort_by_key(|u| u.child_age_months);
    Ok(AgeOrderedCorpus {
        utterances: kept,
        cutoff_months,
    })
}

impl AgeOrderedCorpus {
    /// Writes one utterance per line.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        for u in &self.utterances {
            writeln!(out, "{}", u.text)?;
        }
        Ok(())
    }

    pub fn lines(&self) -> impl Iterator<Item = &str> {
        self.utterances.iter().map(|u| u.text.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_utterances: usize,
    pub n_tokens: usize,
    pub vocab_size: usize,
    pub mean_sentence_length: f64,
}

pub fn corpus_stats(corpus: &AgeOrderedCorpus) -> CorpusStats {
    text_stats(corpus.lines())
}

/// Whitespace-token statistics over arbitrary lines.
pub fn text_stats<'a, I>(lines: I) -> CorpusStats
where
    I: IntoIterator<Item = &'a str>,
{
    let mut n_utterances = 0;
    let mut n_tokens = 0;
    let mut vocab: HashSet<&str> = HashSet::new();
    for line in lines {
        n_utterances += 1;
        for tok in line.split_whitespace() {
            n_tokens += 1;
            vocab.insert(tok);
        }
    }
    let mean_sentence_length = if n_utterances == 0 {
        0.0
    } else {
        n_tokens as f64 / n_utterances as f64
    };
    CorpusStats {
        n_utterances,
        n_tokens,
        vocab_size: vocab.len(),
        mean_sentence_length,
    }
}
