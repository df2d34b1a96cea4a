use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::Inputs;
use crate::tagging::{align_tags_to_subwords, TagVocabulary, TaggedSentence, TokenTags};
use crate::tokenizer::{is_special, TokenizerModel, EOS_ID};

/// Subword ids of one sentence with the tags of the word each came from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaggedTokens {
    pub ids: Vec<u32>,
    pub tags: Vec<TokenTags>,
}

impl TaggedTokens {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub fn tokenize_tagged(
    sentences: &[TaggedSentence],
    tokenizer: &TokenizerModel,
    vocab: &TagVocabulary,
) -> Result<Vec<TaggedTokens>> {
    sentences
        .iter()
        .map(|s| {
            let tok = tokenizer.encode_words(&s.surfaces());
            let tags = align_tags_to_subwords(s, &tok, vocab)?;
            Ok(TaggedTokens { ids: tok.token_ids, tags })
        })
        .collect()
}

/// Greedy packing in stream order. Every sentence is followed by EOS; a
/// sentence that does not fit in the open sequence starts a new one, and a
/// sentence longer than `max_seq_len` is cut into full-length chunks with
/// the remainder left open.
pub fn pack_sequences(stream: &[TaggedTokens], max_seq_len: usize) -> Vec<TaggedTokens> {
    assert!(max_seq_len > 0, "max_seq_len must be positive");
    let mut out = Vec::new();
    let mut cur = TaggedTokens::default();
    for sent in stream {
        let need = sent.len() + 1;
        if cur.len() + need > max_seq_len && !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        let ids = sent.ids.iter().copied().chain([EOS_ID]);
        let tags = sent.tags.iter().copied().chain([TokenTags::default()]);
        for (id, t) in ids.zip(tags) {
            if cur.len() == max_seq_len {
                out.push(std::mem::take(&mut cur));
            }
            cur.ids.push(id);
            cur.tags.push(t);
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// One training batch, padded to its longest sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Inputs,
    /// Per-position tags (PAD positions carry the empty tag).
    pub tags: Vec<TokenTags>,
    /// Positions eligible for masking: real, non-special tokens.
    pub maskable: Vec<bool>,
}

impl Batch {
    pub fn from_sequences(seqs: &[&TaggedTokens]) -> Self {
        let inputs = Inputs::from_rows(&seqs.iter().map(|s| s.ids.as_slice()).collect::<Vec<_>>());
        let mut tags = Vec::with_capacity(inputs.n_positions());
        for s in seqs {
            tags.extend_from_slice(&s.tags);
            tags.resize(tags.len() + inputs.seq_len - s.len(), TokenTags::default());
        }
        let maskable = inputs
            .ids
            .iter()
            .zip(&inputs.attend)
            .map(|(&id, &a)| a && !is_special(id))
            .collect();
        Batch { inputs, tags, maskable }
    }

    pub fn n_tokens(&self) -> usize {
        self.inputs.attend.iter().filter(|&&a| a).count()
    }
}

/// Packed sequences grouped into fixed batches and cycled by step.
#[derive(Debug, Clone)]
pub struct BatchCycle {
    sequences: Vec<TaggedTokens>,
    batch_size: usize,
    shuffle_seed: Option<u64>,
}

impl BatchCycle {
    pub fn new(sequences: Vec<TaggedTokens>, batch_size: usize, shuffle_seed: Option<u64>) -> Self {
        assert!(batch_size > 0);
        BatchCycle { sequences, batch_size, shuffle_seed }
    }

    pub fn n_sequences(&self) -> usize {
        self.sequences.len()
    }

    pub fn n_batches(&self) -> usize {
        self.sequences.len().div_ceil(self.batch_size)
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn epoch(&self, step: usize) -> usize {
        step / self.n_batches()
    }

    fn batch_index(&self, step: usize) -> usize {
        let n = self.n_batches();
        let pos = step % n;
        match self.shuffle_seed {
            None => pos,
            Some(seed) => {
                let mut order: Vec<usize> = (0..n).collect();
                let epoch = self.epoch(step) as u64;
                order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
                order[pos]
            }
        }
    }

    /// The batch consumed at `step` (panics on an empty cycle).
    pub fn batch(&self, step: usize) -> Batch {
        let b = self.batch_index(step);
        let end = ((b + 1) * self.batch_size).min(self.sequences.len());
        let seqs: Vec<&TaggedTokens> = self.sequences[b * self.batch_size..end].iter().collect();
        Batch::from_sequences(&seqs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sent(n: usize) -> TaggedTokens {
        TaggedTokens { ids: vec![7; n], tags: vec![TokenTags { upos: 1, sem: 0 }; n] }
    }

    fn lens(p: &[TaggedTokens]) -> Vec<usize> {
        p.iter().map(TaggedTokens::len).collect()
    }

    #[test]
    fn greedy_packing() {
        assert_eq!(lens(&pack_sequences(&[sent(60), sent(60), sent(60)], 128)), vec![122, 61]);
        assert_eq!(lens(&pack_sequences(&[sent(300)], 128)), vec![128, 128, 45]);
        assert!(pack_sequences(&[], 128).is_empty());
        let p = pack_sequences(&[sent(2), sent(1)], 128);
        assert_eq!(p[0].ids, vec![7, 7, EOS_ID, 7, EOS_ID]);
        assert_eq!(p[0].tags[2], TokenTags::default());
    }

    #[test]
    fn long_sentence_remainder_stays_open() {
        assert_eq!(lens(&pack_sequences(&[sent(9), sent(1)], 4)), vec![4, 4, 4]);
        assert_eq!(lens(&pack_sequences(&[sent(9), sent(2)], 4)), vec![4, 4, 2, 3]);
    }

    #[test]
    fn batches_cycle_in_order() {
        let seqs: Vec<TaggedTokens> = (1..=5).map(sent).collect();
        let cycle = BatchCycle::new(seqs, 2, None);
        assert_eq!(cycle.n_batches(), 3);
        let b = cycle.batch(4);
        assert_eq!((b.inputs.batch, b.inputs.seq_len), (2, 4));
        assert_eq!(b.maskable.iter().filter(|&&m| m).count(), 7);
        assert_eq!(cycle.batch(5).inputs.batch, 1);
        assert_eq!(cycle.epoch(5), 1);
        assert_eq!(cycle.batch(0), cycle.batch(3));
    }

    #[test]
    fn shuffled_epochs_are_permutations() {
        let seqs: Vec<TaggedTokens> = (1..=8).map(sent).collect();
        let cycle = BatchCycle::new(seqs, 1, Some(3));
        let mut seen: Vec<usize> = (8..16).map(|s| cycle.batch(s).n_tokens()).collect();
        seen.sort();
        assert_eq!(seen, (1..=8).collect::<Vec<_>>());
    }
}
