//! Tag inventory, curriculum units, the tagged-corpus reader and
//! word-to-subword tag projection.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::TokenizedSentence;

/// Tag id; 0 means "no tag / inactive".
pub type TagId = u32;

pub const NO_TAG: TagId = 0;

/// Universal POS tags, including the legacy `PRT` and `CONJ`.
pub const UPOS_TAGS: [&str; 19] = [
    "NOUN", "VERB", "DET", "ADJ", "PRON", "PROPN", "NUM", "PRT", "AUX", "PART", "ADP", "ADV", "X",
    "INTJ", "SYM", "CCONJ", "SCONJ", "CONJ", "PUNCT",
];

/// Coarse semantic tag categories.
pub const SEM_TAGS: [&str; 14] = [
    "ACT", "ANA", "ATT", "COM", "DEM", "DIS", "ENT", "EVE", "LOG", "MOD", "NAM", "TIM", "TNS",
    "UNK",
];

/// Legacy unit tags and the modern word tags they also match.
pub const TAG_EQUIVALENTS: [(&str, &[&str]); 2] = [("CONJ", &["CCONJ", "SCONJ"]), ("PRT", &["PART"])];

pub const UNIT_NAMES: [&str; 11] = [
    "NV",
    "GROWING1",
    "GROWING2",
    "INTJ",
    "INWARDS_CP",
    "INWARDS_TP",
    "MMM1",
    "MMM2",
    "SEM1",
    "SEM2",
    "POS_ALL",
];

/// Tag inventory with stable ids: UPOS tags sorted, then semantic tags
/// sorted, numbered from 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagVocabulary {
    upos_tags: Vec<String>,
    sem_tags: Vec<String>,
    #[serde(skip)]
    id_of: BTreeMap<String, TagId>,
}

impl Default for TagVocabulary {
    fn default() -> Self {
        TagVocabulary::new(UPOS_TAGS, SEM_TAGS)
    }
}

impl TagVocabulary {
    pub fn new<'a, U, S>(upos: U, sem: S) -> Self
    where
        U: IntoIterator<Item = &'a str>,
        S: IntoIterator<Item = &'a str>,
    {
        let upos: BTreeSet<String> = upos.into_iter().map(str::to_string).collect();
        let sem: BTreeSet<String> = sem.into_iter().map(str::to_string).collect();
        let mut v = TagVocabulary {
            upos_tags: upos.into_iter().collect(),
            sem_tags: sem.into_iter().filter(|s| !UPOS_TAGS.contains(&s.as_str())).collect(),
            id_of: BTreeMap::new(),
        };
        v.rebuild_index();
        v
    }

    /// Restores the id index after deserialization.
    pub fn rebuild_index(&mut self) {
        self.id_of = self
            .upos_tags
            .iter()
            .chain(&self.sem_tags)
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TagId + 1))
            .collect();
    }

    pub fn upos_tags(&self) -> &[String] {
        &self.upos_tags
    }

    pub fn sem_tags(&self) -> &[String] {
        &self.sem_tags
    }

    pub fn id(&self, tag: &str) -> Option<TagId> {
        self.id_of.get(tag).copied()
    }

    pub fn is_upos(&self, tag: &str) -> bool {
        self.upos_tags.binary_search_by(|t| t.as_str().cmp(tag)).is_ok()
    }

    pub fn is_sem(&self, tag: &str) -> bool {
        self.sem_tags.binary_search_by(|t| t.as_str().cmp(tag)).is_ok()
    }

    pub fn tag(&self, id: TagId) -> Option<&str> {
        if id == NO_TAG {
            return None;
        }
        self.upos_tags
            .iter()
            .chain(&self.sem_tags)
            .nth(id as usize - 1)
            .map(String::as_str)
    }

    /// Number of tag-classifier labels, including the reserved 0.
    pub fn n_labels(&self) -> usize {
        self.upos_tags.len() + self.sem_tags.len() + 1
    }

    pub fn upos_ids(&self) -> BTreeSet<TagId> {
        self.upos_tags.iter().filter_map(|t| self.id(t)).collect()
    }

    /// Ids a unit activates: its own tags plus the modern tags that its
    /// legacy tags stand for.
    pub fn unit_ids(&self, unit: &CurriculumUnit) -> BTreeSet<TagId> {
        let mut ids = BTreeSet::new();
        for tag in &unit.tags {
            ids.extend(self.id(tag));
            for (legacy, modern) in TAG_EQUIVALENTS {
                if tag == legacy {
                    ids.extend(modern.iter().filter_map(|m| self.id(m)));
                }
            }
        }
        ids
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurriculumUnit {
    pub name: String,
    pub tags: BTreeSet<String>,
}

impl CurriculumUnit {
    fn new(name: &str, tags: &[&str]) -> Self {
        CurriculumUnit {
            name: name.to_string(),
            tags: tags.iter().map(|t| t.to_string()).collect(),
        }
    }

    fn extend(&self, name: &str, more: &[&str]) -> Self {
        let mut unit = self.clone();
        unit.name = name.to_string();
        unit.tags.extend(more.iter().map(|t| t.to_string()));
        unit
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.tags.contains(tag)
    }
}

/// Looks up a curriculum unit by name, ignoring case and any character
/// other than letters and digits (`inwards-cp` finds `INWARDS_CP`).
pub fn resolve_unit(name: &str) -> Result<CurriculumUnit> {
    let key: String = name.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_uppercase();
    let nv = CurriculumUnit::new("NV", &["NOUN", "VERB"]);
    let growing1 = nv.extend("GROWING1", &["DET", "ADJ", "PRON", "PROPN", "NUM", "PRT"]);
    let intj = CurriculumUnit::new("INTJ", &["X", "INTJ", "SYM"]);
    let inwards_cp = intj.extend("INWARDS_CP", &["PROPN", "CCONJ", "SCONJ", "SYM"]);
    let mmm1 = nv.extend("MMM1", &["DET", "CONJ", "INTJ"]);
    let pos_all = CurriculumUnit::new("POS_ALL", &UPOS_TAGS);
    let sem1 = pos_all.extend("SEM1", &["EVE", "TNS", "ACT", "ANA"]);
    let unit = match key.as_str() {
        "NV" => nv,
        "GROWING1" => growing1,
        "GROWING2" => growing1.extend("GROWING2", &["AUX", "PART", "ADP", "ADV"]),
        "INTJ" => intj,
        "INWARDSCP" => inwards_cp,
        "INWARDSTP" => {
            inwards_cp.extend("INWARDS_TP", &["NUM", "PRT", "AUX", "PART", "ADP", "ADV"])
        }
        "MMM1" => mmm1,
        "MMM2" => mmm1.extend("MMM2", &["ADJ", "ADV", "PRON", "PROPN", "NUM", "PRT"]),
        "SEM1" => sem1,
        "SEM2" => sem1.extend(
            "SEM2",
            &["LOG", "COM", "DEM", "DIS", "MOD", "ENT", "NAM", "TIM"],
        ),
        "POSALL" => pos_all,
        _ => {
            return Err(Error::UnknownUnit {
                name: name.to_string(),
                valid: UNIT_NAMES.join(", "),
            })
        }
    };
    Ok(unit)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedWord {
    pub surface: String,
    pub upos: String,
    pub sem: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TaggedSentence {
    pub words: Vec<TaggedWord>,
}

impl TaggedSentence {
    pub fn surfaces(&self) -> Vec<&str> {
        self.words.iter().map(|w| w.surface.as_str()).collect()
    }

    pub fn text(&self) -> String {
        self.surfaces().join(" ")
    }
}

/// Reads `token<TAB>upos<TAB>sem` blocks separated by blank lines; `_`
/// marks an absent semantic tag.
pub fn load_tagged_corpus<R: BufRead>(
    input: R,
    vocab: &TagVocabulary,
) -> Result<Vec<TaggedSentence>> {
    let mut out = Vec::new();
    let mut cur = TaggedSentence::default();
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !cur.words.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 tab-separated columns, found {}", cols.len()),
            });
        }
        let (surface, upos, sem) = (cols[0].trim(), cols[1].trim(), cols[2].trim());
        if surface.is_empty() || surface.contains(char::is_whitespace) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("bad token `{surface}`"),
            });
        }
        if !vocab.is_upos(upos) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("unknown UPOS tag `{upos}`"),
            });
        }
        let sem = match sem {
            "_" => None,
            s if vocab.is_sem(s) => Some(s.to_string()),
            s => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("unknown semantic tag `{s}`"),
                })
            }
        };
        cur.words.push(TaggedWord {
            surface: surface.to_string(),
            upos: upos.to_string(),
            sem,
        });
    }
    if !cur.words.is_empty() {
        out.push(cur);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct TokenTags {
    pub upos: TagId,
    pub sem: TagId,
}

/// Broadcasts each word's tags onto its subwords.
pub fn align_tags_to_subwords(
    sentence: &TaggedSentence,
    tokenized: &TokenizedSentence,
    vocab: &TagVocabulary,
) -> Result<Vec<TokenTags>> {
    if tokenized.n_words() != sentence.words.len() {
        return Err(Error::Shape(format!(
            "tokenized sentence covers {} words, tagged sentence has {}",
            tokenized.n_words(),
            sentence.words.len()
        )));
    }
    let word_tags: Vec<TokenTags> = sentence
        .words
        .iter()
        .map(|w| TokenTags {
            upos: vocab.id(&w.upos).unwrap_or(NO_TAG),
            sem: w.sem.as_deref().and_then(|s| vocab.id(s)).unwrap_or(NO_TAG),
        })
        .collect();
    Ok(tokenized.word_index.iter().map(|&w| word_tags[w]).collect())
}
