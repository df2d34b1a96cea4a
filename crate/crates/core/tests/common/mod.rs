#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub mod gradcheck;
pub mod reference;

use curriculum_lm::eval::MinimalPair;
use curriculum_lm::tagging::{TaggedSentence, TaggedWord};
use curriculum_lm::tokenizer::TokenizerModel;

const DETS: [&str; 3] = ["the", "my", "your"];
const ADJS: [&str; 3] = ["big", "little", "happy"];
const NOUNS: [(&str, &str); 10] = [
    ("dog", "dogs"),
    ("cat", "cats"),
    ("bird", "birds"),
    ("girl", "girls"),
    ("boy", "boys"),
    ("baby", "babies"),
    ("duck", "ducks"),
    ("bear", "bears"),
    ("frog", "frogs"),
    ("horse", "horses"),
];
const VERBS: [(&str, &str); 6] = [
    ("runs", "run"),
    ("sleeps", "sleep"),
    ("jumps", "jump"),
    ("eats", "eat"),
    ("sings", "sing"),
    ("plays", "play"),
];
const PREPS: [&str; 3] = ["near", "with", "behind"];
const ADVS: [&str; 3] = ["now", "again", "here"];
const INTJS: [&str; 3] = ["oh", "look", "wow"];

fn word(surface: &str, upos: &str, sem: Option<&str>) -> TaggedWord {
    TaggedWord { surface: surface.into(), upos: upos.into(), sem: sem.map(str::to_string) }
}

/// One sentence of the agreement grammar:
/// `[INTJ] DET [ADJ] N [PREP DET N] V [ADV]`, verb agreeing with the head
/// noun. Returns the sentence and the index of the verb.
fn sentence(rng: &mut ChaCha8Rng) -> (Vec<TaggedWord>, usize, usize, bool) {
    let mut w = Vec::new();
    if rng.random_bool(0.2) {
        w.push(word(INTJS.choose(rng).unwrap(), "INTJ", Some("DIS")));
    }
    w.push(word(DETS.choose(rng).unwrap(), "DET", Some("DEM")));
    if rng.random_bool(0.3) {
        w.push(word(ADJS.choose(rng).unwrap(), "ADJ", Some("ATT")));
    }
    let plural = rng.random_bool(0.5);
    let (sg, pl) = NOUNS.choose(rng).unwrap();
    w.push(word(if plural { pl } else { sg }, "NOUN", Some("ENT")));
    if rng.random_bool(0.3) {
        w.push(word(PREPS.choose(rng).unwrap(), "ADP", None));
        w.push(word(DETS.choose(rng).unwrap(), "DET", Some("DEM")));
        let (sg, pl) = NOUNS.choose(rng).unwrap();
        w.push(word(if rng.random_bool(0.5) { pl } else { sg }, "NOUN", Some("ENT")));
    }
    let verb = rng.random_range(0..VERBS.len());
    let vi = w.len();
    w.push(word(if plural { VERBS[verb].1 } else { VERBS[verb].0 }, "VERB", Some("EVE")));
    if rng.random_bool(0.3) {
        w.push(word(ADVS.choose(rng).unwrap(), "ADV", Some("TIM")));
    }
    (w, vi, verb, plural)
}

pub fn agreement_corpus(n: usize, seed: u64) -> Vec<TaggedSentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| TaggedSentence { words: sentence(&mut rng).0 }).collect()
}

/// Pairs differing only in the number of the verb.
pub fn agreement_pairs(n: usize, seed: u64) -> Vec<MinimalPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let (w, vi, verb, plural) = sentence(&mut rng);
            let good: Vec<String> = w.iter().map(|x| x.surface.clone()).collect();
            let mut bad = good.clone();
            bad[vi] = if plural { VERBS[verb].0 } else { VERBS[verb].1 }.to_string();
            MinimalPair {
                phenomenon: if w.iter().any(|x| x.upos == "ADP") { "agreement_attractor" } else { "agreement_simple" }.into(),
                good: good.join(" "),
                bad: bad.join(" "),
            }
        })
        .collect()
}

/// A tokenizer large enough to keep every grammar word whole.
pub fn agreement_tokenizer(corpus: &[TaggedSentence]) -> TokenizerModel {
    let lines: Vec<String> = corpus.iter().map(TaggedSentence::text).collect();
    TokenizerModel::train(lines.iter().map(String::as_str), 400).unwrap()
}

/// Three-column `surface<TAB>upos<TAB>sem` text, blank line between sentences.
pub fn tagged_tsv(corpus: &[TaggedSentence]) -> String {
    let mut s = String::new();
    for sent in corpus {
        for w in &sent.words {
            s.push_str(&format!("{}\t{}\t{}\n", w.surface, w.upos, w.sem.as_deref().unwrap_or("_")));
        }
        s.push('\n');
    }
    s
}

pub fn pairs_jsonl(pairs: &[MinimalPair]) -> String {
    pairs.iter().map(|p| serde_json::to_string(p).unwrap() + "\n").collect()
}

const SPEAKERS: [&str; 5] = ["CHI", "MOT", "FAT", "INV", "SIS"];

/// 1000 utterances cycling through speakers and ages 0..=95 months.
/// Utterance `i` is `w{i % 13} w{i % 7}` plus `again` every third line.
pub fn transcript_fixture() -> String {
    let mut s = String::new();
    for i in 0..1000usize {
        let age = (i * 37) % 96;
        let mut text = format!("w{} w{}", i % 13, i % 7);
        if i % 3 == 0 {
            text.push_str("  again ");
        }
        s.push_str(&format!(
            "{{\"speaker\": \"{}\", \"age_months\": {age}, \"text\": \"{text}\", \"source\": \"t{}\"}}\n",
            SPEAKERS[i % 5],
            i / 100
        ));
    }
    s
}
