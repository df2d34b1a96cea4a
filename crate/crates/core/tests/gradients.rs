mod common;

use std::collections::BTreeSet;

use curriculum_lm::model::{backward, init_model, LossSpec, ModelParams};

use common::gradcheck::{check, toy_config, toy_inputs};

#[test]
fn finite_differences_lambda_0() {
    check(0.0, 0.0, 1);
}

#[test]
fn finite_differences_lambda_1() {
    check(1.0, 0.0, 2);
}

#[test]
fn finite_differences_lambda_2() {
    check(2.0, 0.0, 3);
}

#[test]
fn finite_differences_with_fixed_dropout_mask() {
    check(1.0, 0.3, 4);
}

#[test]
fn doubling_lambda_doubles_tag_head_gradient() {
    let cfg = toy_config(0.0);
    let params: ModelParams<f64> = init_model(&cfg, 9);
    let inputs = toy_inputs();
    let active = BTreeSet::from([1, 2, 3]);
    let spec = |lambda_tag| LossSpec {
        mask_positions: &[0, 3, 6],
        vocab_targets: &[5, 9, 8],
        tag_targets: &[1, 2, 3],
        active_tag_ids: &active,
        lambda_tag,
    };
    let (_, g1) = backward(&params, &inputs, &spec(1.0), None).unwrap();
    let (_, g2) = backward(&params, &inputs, &spec(2.0), None).unwrap();
    assert_eq!(g2.tag_w, &g1.tag_w * 2.0);
    assert_eq!(g2.tag_b, &g1.tag_b * 2.0);
    assert_eq!(g2.vocab_w, g1.vocab_w);
}

#[test]
fn padded_positions_get_no_gradient() {
    let cfg = toy_config(0.0);
    let params: ModelParams<f64> = init_model(&cfg, 5);
    let inputs = toy_inputs();
    let active = BTreeSet::new();
    let spec = LossSpec {
        mask_positions: &[1, 6],
        vocab_targets: &[3, 8],
        tag_targets: &[0, 0],
        active_tag_ids: &active,
        lambda_tag: 1.0,
    };
    let (_, g) = backward(&params, &inputs, &spec, None).unwrap();
    // PAD only appears at padded positions; token 10 never occurs
    assert!(g.tok_emb.row(0).iter().all(|&x| x == 0.0));
    assert!(g.tok_emb.row(10).iter().all(|&x| x == 0.0));
    assert!(g.tag_w.iter().all(|&x| x == 0.0));
}
