//! Word-internal byte-pair encoding.
//!
//! Text is split on whitespace first and merges never cross a word
//! boundary, so every subword maps back to exactly one source word. The
//! last symbol of each word carries an end-of-word marker, which is how
//! [`TokenizerModel::decode`] recovers spaces.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const MASK_ID: u32 = 1;
pub const UNK_ID: u32 = 2;
pub const BOS_ID: u32 = 3;
pub const EOS_ID: u32 = 4;

pub const SPECIAL_TOKENS: [&str; 5] = ["<pad>", "<mask>", "<unk>", "<s>", "</s>"];
pub const END_OF_WORD: &str = "</w>";

pub fn is_special(id: u32) -> bool {
    (id as usize) < SPECIAL_TOKENS.len()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenizedSentence {
    pub token_ids: Vec<u32>,
    /// Source word position of each subword.
    pub word_index: Vec<usize>,
}

impl TokenizedSentence {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn n_words(&self) -> usize {
        self.word_index.last().map_or(0, |w| w + 1)
    }
}

#[derive(Serialize, Deserialize)]
struct SerializedTokenizer {
    vocab: Vec<String>,
    merges: Vec<[String; 2]>,
}

#[derive(Debug, Clone)]
pub struct TokenizerModel {
    vocab: Vec<String>,
    merges: Vec<(String, String)>,
    ids: HashMap<String, u32>,
    /// (left, right) -> (rank, merged id)
    ranks: HashMap<(u32, u32), (usize, u32)>,
}

impl PartialEq for TokenizerModel {
    fn eq(&self, other: &Self) -> bool {
        self.vocab == other.vocab && self.merges == other.merges
    }
}

fn word_symbols(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let n = chars.len();
    chars
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            if i + 1 == n {
                format!("{c}{END_OF_WORD}")
            } else {
                c.to_string()
            }
        })
        .collect()
}

impl TokenizerModel {
    fn from_parts(vocab: Vec<String>, merges: Vec<(String, String)>) -> Result<Self> {
        if vocab.len() < SPECIAL_TOKENS.len()
            || vocab.iter().zip(SPECIAL_TOKENS).any(|(v, s)| v != s)
        {
            return Err(Error::Tokenizer(format!(
                "vocabulary must start with {SPECIAL_TOKENS:?}"
            )));
        }
        let mut ids = HashMap::with_capacity(vocab.len());
        for (i, tok) in vocab.iter().enumerate() {
            if ids.insert(tok.clone(), i as u32).is_some() {
                return Err(Error::Tokenizer(format!("duplicate vocabulary entry `{tok}`")));
            }
        }
        let mut ranks = HashMap::with_capacity(merges.len());
        for (rank, (a, b)) in merges.iter().enumerate() {
            let lookup = |s: &str| {
                ids.get(s)
                    .copied()
                    .ok_or_else(|| Error::Tokenizer(format!("merge references unknown token `{s}`")))
            };
            let key = (lookup(a)?, lookup(b)?);
            let merged = lookup(&format!("{a}{b}"))?;
            ranks.entry(key).or_insert((rank, merged));
        }
        Ok(TokenizerModel { vocab, merges, ids, ranks })
    }

    /// Learns merges until the vocabulary reaches `vocab_size` or no
    /// adjacent pair is left. Ties in pair frequency go to the
    /// lexicographically smallest `(left, right)` pair.
    pub fn train<'a, I>(lines: I, vocab_size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut word_freqs: BTreeMap<&str, usize> = BTreeMap::new();
        for line in lines {
            for w in line.split_whitespace() {
                *word_freqs.entry(w).or_default() += 1;
            }
        }
        if word_freqs.is_empty() {
            return Err(Error::Tokenizer("training corpus is empty".into()));
        }

        let alphabet: BTreeSet<String> = word_freqs.keys().flat_map(|w| word_symbols(w)).collect();
        let base = SPECIAL_TOKENS.len() + alphabet.len();
        if vocab_size < base {
            return Err(Error::Tokenizer(format!(
                "vocab_size {vocab_size} is smaller than specials + alphabet ({base})"
            )));
        }

        let mut vocab: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        vocab.extend(alphabet);
        let mut ids: HashMap<String, u32> =
            vocab.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();

        let mut words: Vec<(Vec<u32>, usize)> = word_freqs
            .iter()
            .map(|(w, &f)| (word_symbols(w).iter().map(|s| ids[s]).collect(), f))
            .collect();

        let mut merges = Vec::new();
        while vocab.len() < vocab_size {
            let mut counts: HashMap<(u32, u32), usize> = HashMap::new();
            for (syms, f) in &words {
                for pair in syms.windows(2) {
                    *counts.entry((pair[0], pair[1])).or_default() += f;
                }
            }
            let best = counts.into_iter().max_by(|(pa, ca), (pb, cb)| {
                ca.cmp(cb).then_with(|| {
                    let ka = (&vocab[pa.0 as usize], &vocab[pa.1 as usize]);
                    let kb = (&vocab[pb.0 as usize], &vocab[pb.1 as usize]);
                    kb.cmp(&ka)
                })
            });
            let Some(((left, right), _)) = best else { break };

            let merged_str = format!("{}{}", vocab[left as usize], vocab[right as usize]);
            let merged = match ids.get(&merged_str) {
                Some(&id) => id,
                None => {
                    let id = vocab.len() as u32;
                    vocab.push(merged_str.clone());
                    ids.insert(merged_str, id);
                    id
                }
            };
            merges.push((vocab[left as usize].clone(), vocab[right as usize].clone()));
            for (syms, _) in &mut words {
                merge_in_place(syms, left, right, merged);
            }
        }
        TokenizerModel::from_parts(vocab, merges)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.vocab.get(id as usize).map(String::as_str)
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    fn encode_word(&self, word: &str, out: &mut Vec<u32>) {
        let mut syms: Vec<u32> = word_symbols(word)
            .iter()
            .map(|s| self.ids.get(s).copied().unwrap_or(UNK_ID))
            .collect();
        loop {
            let best = syms
                .windows(2)
                .filter_map(|p| self.ranks.get(&(p[0], p[1])).map(|&(r, m)| (r, p[0], p[1], m)))
                .min_by_key(|&(r, ..)| r);
            match best {
                Some((_, a, b, m)) => merge_in_place(&mut syms, a, b, m),
                None => break,
            }
        }
        out.extend(syms);
    }

    pub fn encode(&self, text: &str) -> TokenizedSentence {
        let words: Vec<&str> = text.split_whitespace().collect();
        self.encode_words(&words)
    }

    /// Encodes pre-split words; each word is treated as one whitespace token.
    pub fn encode_words<S: AsRef<str>>(&self, words: &[S]) -> TokenizedSentence {
        let mut out = TokenizedSentence::default();
        for (wi, w) in words.iter().enumerate() {
            let before = out.token_ids.len();
            self.encode_word(w.as_ref(), &mut out.token_ids);
            out.word_index.resize(out.token_ids.len(), wi);
            debug_assert!(out.token_ids.len() > before);
        }
        out
    }

    pub fn decode(&self, token_ids: &[u32]) -> Result<String> {
        let mut s = String::new();
        for &id in token_ids {
            let tok = self
                .vocab
                .get(id as usize)
                .ok_or_else(|| Error::OutOfRange(format!("token id {id} >= {}", self.vocab.len())))?;
            if !is_special(id) {
                s.push_str(tok);
            }
        }
        Ok(crate::corpus::normalize_whitespace(&s.replace(END_OF_WORD, " ")))
    }

    pub fn to_json(&self) -> String {
        let ser = SerializedTokenizer {
            vocab: self.vocab.clone(),
            merges: self.merges.iter().map(|(a, b)| [a.clone(), b.clone()]).collect(),
        };
        serde_json::to_string(&ser).expect("tokenizer serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let ser: SerializedTokenizer = serde_json::from_str(json)?;
        let merges = ser.merges.into_iter().map(|[a, b]| (a, b)).collect();
        TokenizerModel::from_parts(ser.vocab, merges)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        TokenizerModel::from_json(&std::fs::read_to_string(path)?)
    }

    /// Hex SHA-256 of the serialized model; stored in checkpoints.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn merge_in_place(syms: &mut Vec<u32>, left: u32, right: u32, merged: u32) {
    if syms.len() < 2 {
        return;
    }
    let mut out = Vec::with_capacity(syms.len());
    let mut i = 0;
    while i < syms.len() {
        if i + 1 < syms.len() && syms[i] == left && syms[i + 1] == right {
            out.push(merged);
            i += 2;
        } else {
            out.push(syms[i]);
            i += 1;
        }
    }
    *syms = out;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_merge_is_most_frequent_pair() {
        // symbols a a a b</w>, three times: (a,a) occurs 6 times, (a,b</w>) 3.
        let corpus = ["aaab aaab aaab"];
        let alphabet = 2;
        let tok = TokenizerModel::train(corpus, SPECIAL_TOKENS.len() + alphabet + 1).unwrap();
        assert_eq!(tok.merges()[0], ("a".to_string(), "a".to_string()));
    }

    #[test]
    fn lexicographic_tie_break() {
        // "ab" and "cd" each once: pairs (a,b</w>) and (c,d</w>) tie.
        let tok = TokenizerModel::train(["ab cd"], SPECIAL_TOKENS.len() + 4 + 1).unwrap();
        assert_eq!(tok.merges()[0], ("a".to_string(), "b</w>".to_string()));
    }

    #[test]
    fn no_merge_budget_gives_character_tokenizer() {
        let corpus = ["the dog", "a cat"];
        // t h e</w> d o g</w> a</w> c a t</w>
        let alphabet = 10;
        let tok = TokenizerModel::train(corpus, SPECIAL_TOKENS.len() + alphabet).unwrap();
        assert!(tok.merges().is_empty());
        assert_eq!(tok.encode("dog").len(), 3);
        assert!(TokenizerModel::train(corpus, SPECIAL_TOKENS.len() + alphabet - 1).is_err());
    }

    #[test]
    fn deterministic_training() {
        let corpus = ["the dog runs", "the dogs run", "a ball", "the ball rolls"];
        let a = TokenizerModel::train(corpus, 40).unwrap();
        let b = TokenizerModel::train(corpus, 40).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn word_index_for_split_word() {
        // "the" is frequent enough to become one token; "dog" appears once
        // and stops at two pieces under this budget.
        let corpus = ["the the the the dog"];
        let tok = TokenizerModel::train(corpus, SPECIAL_TOKENS.len() + 6 + 3).unwrap();
        let enc = tok.encode("the dog");
        assert_eq!(enc.word_index, vec![0, 1, 1]);
        assert_eq!(tok.decode(&enc.token_ids).unwrap(), "the dog");
    }

    #[test]
    fn empty_and_specials() {
        let tok = TokenizerModel::train(["x y"], 20).unwrap();
        assert!(tok.encode("").is_empty());
        assert_eq!(tok.decode(&[]).unwrap(), "");
        let mut ids = tok.encode("x y").token_ids;
        ids.insert(0, PAD_ID);
        ids.push(EOS_ID);
        ids.push(PAD_ID);
        assert_eq!(tok.decode(&ids).unwrap(), "x y");
        assert!(tok.decode(&[999]).is_err());
    }

    #[test]
    fn unknown_characters_map_to_unk() {
        let tok = TokenizerModel::train(["ab"], 20).unwrap();
        let enc = tok.encode("az");
        assert!(enc.token_ids.contains(&UNK_ID));
    }

    #[test]
    fn json_round_trip() {
        let tok = TokenizerModel::train(["the dog runs", "dogs run"], 30).unwrap();
        let back = TokenizerModel::from_json(&tok.to_json()).unwrap();
        assert_eq!(tok, back);
        assert_eq!(back.encode("the dogs"), tok.encode("the dogs"));
    }
}
