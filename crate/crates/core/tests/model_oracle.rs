//! The encoder checked against a plain-loop reimplementation.

mod common;

use std::collections::BTreeSet;

use ndarray::Axis;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use curriculum_lm::eval::{pll_token_scores, slor_from_parts};
use curriculum_lm::model::{backward, forward, Inputs, LossSpec};
use curriculum_lm::tokenizer::{EOS_ID, MASK_ID};

use common::reference::{brute_force_pll, log_softmax, reference_logits, toy};

#[test]
fn forward_matches_straight_line_computation() {
    let p = toy(1, 1, 4, 2, 8);
    let ids = [5u32, 1, 7, 6, 4];
    let (logits, tags) = forward(&p, &Inputs::from_rows(&[ids])).unwrap();
    assert_eq!(logits.shape(), &[1, 5, 8]);
    assert_eq!(tags.shape(), &[1, 5, 3]);
    let reference = reference_logits(&p, &ids);
    for t in 0..5 {
        for v in 0..8 {
            assert!((logits[[0, t, v]] - reference[t][v]).abs() < 1e-12);
        }
    }
}

#[test]
fn forward_matches_reference_two_layers() {
    let p = toy(2, 2, 8, 2, 10);
    let ids = [9u32, 5, 6, 1, 7, 8, 4];
    let (logits, _) = forward(&p, &Inputs::from_rows(&[ids])).unwrap();
    let reference = reference_logits(&p, &ids);
    for (t, row) in reference.iter().enumerate() {
        for (v, r) in row.iter().enumerate() {
            assert!((logits[[0, t, v]] - r).abs() < 1e-11);
        }
    }
}

#[test]
fn batch_permutation_permutes_outputs() {
    let p = toy(3, 2, 8, 2, 10);
    let rows = [vec![5u32, 6, 7, 8], vec![9, 1, 6], vec![7, 7, 7, 7]];
    let (a, _) = forward(&p, &Inputs::from_rows(&rows)).unwrap();
    let perm = [2usize, 0, 1];
    let permuted: Vec<Vec<u32>> = perm.iter().map(|&i| rows[i].clone()).collect();
    let (b, _) = forward(&p, &Inputs::from_rows(&permuted)).unwrap();
    for (new, &old) in perm.iter().enumerate() {
        assert_eq!(b.index_axis(Axis(0), new), a.index_axis(Axis(0), old));
    }
}

#[test]
fn padding_changes_no_loss() {
    let p = toy(4, 2, 8, 2, 10);
    let active = BTreeSet::from([1]);
    let spec = |seq: usize| {
        let pos = vec![1, 2, seq + 1];
        (pos, vec![6u32, 7, 1], vec![1u32, 2, 1])
    };
    let short = Inputs::from_rows(&[vec![5u32, 1, 1, 8], vec![9, 1, 6]]);
    let (p1, v1, t1) = spec(short.seq_len);
    let l1 = backward(
        &p,
        &short,
        &LossSpec { mask_positions: &p1, vocab_targets: &v1, tag_targets: &t1, active_tag_ids: &active, lambda_tag: 1.0 },
        None,
    )
    .unwrap()
    .0;
    // same rows with three extra PAD columns
    let mut ids = Vec::new();
    let mut attend = Vec::new();
    for r in [vec![5u32, 1, 1, 8], vec![9, 1, 6]] {
        let n = r.len();
        ids.extend(r);
        ids.resize(ids.len() + 7 - n, 0);
        attend.extend((0..7).map(|i| i < n));
    }
    let long = Inputs::new(2, 7, ids, attend).unwrap();
    let (p2, v2, t2) = spec(long.seq_len);
    let l2 = backward(
        &p,
        &long,
        &LossSpec { mask_positions: &p2, vocab_targets: &v2, tag_targets: &t2, active_tag_ids: &active, lambda_tag: 1.0 },
        None,
    )
    .unwrap()
    .0;
    assert!((l1.total - l2.total).abs() < 1e-12, "{} vs {}", l1.total, l2.total);
    assert_eq!((l1.n_masked, l1.n_tag), (l2.n_masked, l2.n_tag));
}

#[test]
fn pll_matches_brute_force_on_random_sentences() {
    let p = toy(5, 1, 8, 2, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..20 {
        let n = rng.random_range(1..=8);
        let tokens: Vec<u32> = (0..n).map(|_| rng.random_range(5..8)).collect();
        let fast: f64 = pll_token_scores(&p, &tokens).unwrap().iter().sum();
        let slow = brute_force_pll(&p, &tokens);
        assert!((fast - slow).abs() < 1e-10, "{tokens:?}: {fast} vs {slow}");
    }
}

#[test]
fn single_token_pll_is_one_log_softmax() {
    let p = toy(6, 1, 4, 2, 8);
    let got = pll_token_scores(&p, &[6]).unwrap()[0];
    let want = log_softmax(&reference_logits(&p, &[MASK_ID, EOS_ID])[0])[6];
    assert!((got - want).abs() < 1e-12);
}

#[test]
fn uniform_model_scores_minus_n_ln_v() {
    let mut p = toy(7, 1, 4, 2, 8);
    p.vocab_w.fill(0.0);
    p.vocab_b.fill(0.0);
    let s: f64 = pll_token_scores(&p, &[5, 6, 7]).unwrap().iter().sum();
    assert!((s + 3.0 * 8f64.ln()).abs() < 1e-12);
}

#[test]
fn pll_is_monotone_in_one_position() {
    // lowering the bias of a token lowers its probability everywhere
    let mut p = toy(8, 1, 8, 2, 8);
    let tokens = [5u32, 6, 7];
    let before: f64 = pll_token_scores(&p, &tokens).unwrap().iter().sum();
    p.vocab_b[7] -= 1.0;
    let after: f64 = pll_token_scores(&p, &tokens).unwrap().iter().sum();
    assert!(after <= before);
}

#[test]
fn slor_fixtures() {
    assert_eq!(slor_from_parts(-8.0, -12.0, 4), 1.0);
    assert_eq!(slor_from_parts(-7.5, -7.5, 3), 0.0);
}
