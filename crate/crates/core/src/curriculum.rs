//! Stage schedules over training steps and tag-conditional masking.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tagging::{resolve_unit, CurriculumUnit, TagId, TagVocabulary, TokenTags, NO_TAG};

pub const DEFAULT_ACTIVE_RATIO: f64 = 0.4;
pub const DEFAULT_BASE_RATIO: f64 = 0.15;

pub const DEFAULT_BOUNDARIES_4: [f64; 3] = [0.10, 0.30, 0.60];
pub const DEFAULT_BOUNDARIES_6: [f64; 5] = [0.10, 0.25, 0.45, 0.65, 0.85];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurriculumName {
    None,
    Growing,
    Inwards,
    MmmUpos,
    MmmSem,
}

impl CurriculumName {
    pub const ALL: [CurriculumName; 5] = [
        CurriculumName::None,
        CurriculumName::Growing,
        CurriculumName::Inwards,
        CurriculumName::MmmUpos,
        CurriculumName::MmmSem,
    ];

    pub fn unit_names(self) -> &'static [&'static str] {
        match self {
            CurriculumName::None => &["POS_ALL"],
            CurriculumName::Growing => &["NV", "GROWING1", "GROWING2", "POS_ALL"],
            CurriculumName::Inwards => &["INTJ", "INWARDS_CP", "INWARDS_TP", "POS_ALL"],
            CurriculumName::MmmUpos => &["NV", "MMM1", "MMM2", "POS_ALL"],
            CurriculumName::MmmSem => &["NV", "MMM1", "MMM2", "SEM1", "SEM2", "POS_ALL"],
        }
    }

    pub fn default_boundaries(self) -> &'static [f64] {
        match self.unit_names().len() {
            1 => &[],
            4 => &DEFAULT_BOUNDARIES_4,
            _ => &DEFAULT_BOUNDARIES_6,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CurriculumName::None => "none",
            CurriculumName::Growing => "growing",
            CurriculumName::Inwards => "inwards",
            CurriculumName::MmmUpos => "mmm_upos",
            CurriculumName::MmmSem => "mmm_sem",
        }
    }
}

impl fmt::Display for CurriculumName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CurriculumName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        match key.as_str() {
            "none" | "vanilla" | "baseline" => Ok(CurriculumName::None),
            "growing" => Ok(CurriculumName::Growing),
            "inwards" => Ok(CurriculumName::Inwards),
            "mmm" | "mmmupos" => Ok(CurriculumName::MmmUpos),
            "mmmsem" => Ok(CurriculumName::MmmSem),
            other => Err(Error::Config(format!(
                "unknown curriculum `{other}` (valid: none, growing, inwards, mmm_upos, mmm_sem)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskingPolicy {
    /// Masking probability for tokens whose tag is in the stage unit.
    pub active_ratio: f64,
    /// Masking probability for every other maskable token.
    pub base_ratio: f64,
}

impl Default for MaskingPolicy {
    fn default() -> Self {
        MaskingPolicy {
            active_ratio: DEFAULT_ACTIVE_RATIO,
            base_ratio: DEFAULT_BASE_RATIO,
        }
    }
}

impl MaskingPolicy {
    pub fn new(active_ratio: f64, base_ratio: f64) -> Result<Self> {
        for (name, r) in [("active_ratio", active_ratio), ("base_ratio", base_ratio)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {r}")));
            }
        }
        Ok(MaskingPolicy { active_ratio, base_ratio })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub start_step: usize,
    pub end_step: usize,
    pub unit: CurriculumUnit,
    pub policy: MaskingPolicy,
    /// Tag ids matched by `unit`, legacy equivalents included.
    pub active_ids: BTreeSet<TagId>,
    /// Whether the tag-classification objective runs in this stage.
    pub tag_objective: bool,
}

impl Stage {
    pub fn contains(&self, step: usize) -> bool {
        (self.start_step..self.end_step).contains(&step)
    }

    pub fn len(&self) -> usize {
        self.end_step - self.start_step
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn matches(&self, tags: TokenTags) -> bool {
        self.active_ids.contains(&tags.upos) || self.active_ids.contains(&tags.sem)
    }

    /// Tag-classification target for a token: its semantic tag when the
    /// stage activates it, else its UPOS tag when active, else 0.
    pub fn tag_target(&self, tags: TokenTags) -> TagId {
        if !self.tag_objective {
            NO_TAG
        } else if tags.sem != NO_TAG && self.active_ids.contains(&tags.sem) {
            tags.sem
        } else if self.active_ids.contains(&tags.upos) {
            tags.upos
        } else {
            NO_TAG
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSchedule {
    pub name: CurriculumName,
    pub stages: Vec<Stage>,
    pub total_steps: usize,
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Builds the stage list for `name`. `boundaries` are the fractions of
/// `total_steps` at which each stage after the first begins; `None` uses
/// the defaults.
pub fn build_schedule(
    name: CurriculumName,
    total_steps: usize,
    boundaries: Option<&[f64]>,
    policy: MaskingPolicy,
    vocab: &TagVocabulary,
) -> Result<CurriculumSchedule> {
    if total_steps == 0 {
        return Err(Error::Config("total_steps must be positive".into()));
    }
    let units = name.unit_names();
    let fractions = boundaries.unwrap_or(name.default_boundaries());
    if fractions.len() + 1 != units.len() {
        return Err(Error::Config(format!(
            "curriculum {name} needs {} boundaries, got {}",
            units.len() - 1,
            fractions.len()
        )));
    }
    let mut prev = 0.0;
    for &f in fractions {
        if !(f > prev && f < 1.0) {
            return Err(Error::Config(format!(
                "boundaries must be strictly increasing inside (0, 1): {fractions:?}"
            )));
        }
        prev = f;
    }

    let mut edges = vec![0];
    edges.extend(fractions.iter().map(|f| round_half_up(f * total_steps as f64)));
    edges.push(total_steps);
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "total_steps {total_steps} is too small for {} non-empty stages",
            units.len()
        )));
    }

    let policy = if name == CurriculumName::None {
        MaskingPolicy {
            active_ratio: policy.base_ratio,
            base_ratio: policy.base_ratio,
        }
    } else {
        policy
    };
    let stages = units
        .iter()
        .zip(edges.windows(2))
        .map(|(unit_name, w)| {
            let unit = resolve_unit(unit_name)?;
            Ok(Stage {
                start_step: w[0],
                end_step: w[1],
                active_ids: vocab.unit_ids(&unit),
                unit,
                policy,
                tag_objective: name != CurriculumName::None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CurriculumSchedule { name, stages, total_steps })
}

impl CurriculumSchedule {
    pub fn active_stage(&self, step: usize) -> Result<&Stage> {
        if step >= self.total_steps {
            return Err(Error::OutOfRange(format!(
                "step {step} outside [0, {})",
                self.total_steps
            )));
        }
        // stages are contiguous and sorted
        let idx = self.stages.partition_point(|s| s.end_step <= step);
        Ok(&self.stages[idx])
    }

    pub fn stage_index(&self, step: usize) -> Result<usize> {
        self.active_stage(step)
            .map(|s| self.stages.iter().position(|x| x.start_step == s.start_step).unwrap())
    }

    /// First step of every stage after the first.
    pub fn boundary_steps(&self) -> Vec<usize> {
        self.stages.iter().skip(1).map(|s| s.start_step).collect()
    }
}

pub fn active_tag_ids(stage: &Stage) -> &BTreeSet<TagId> {
    &stage.active_ids
}

/// Independent Bernoulli masking: a maskable token is masked with the
/// stage's active ratio when its tags match the unit, else with the base
/// ratio. Unmaskable positions are never masked and consume no randomness.
pub fn select_masks<R: Rng + ?Sized>(
    tags: &[TokenTags],
    maskable: &[bool],
    stage: &Stage,
    rng: &mut R,
) -> Vec<bool> {
    debug_assert_eq!(tags.len(), maskable.len());
    tags.iter()
        .zip(maskable)
        .map(|(&t, &ok)| {
            if !ok {
                return false;
            }
            let p = if stage.matches(t) {
                stage.policy.active_ratio
            } else {
                stage.policy.base_ratio
            };
            rng.random::<f64>() < p
        })
        .collect()
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for the randomness of one training step:
/// `splitmix64(global_seed ^ splitmix64(step))`.
pub fn step_seed(global_seed: u64, step: u64) -> u64 {
    splitmix64(global_seed ^ splitmix64(step))
}
