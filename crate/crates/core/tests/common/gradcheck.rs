//! Central-difference gradient check over every scalar parameter.

use std::collections::BTreeSet;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use curriculum_lm::model::{backward, init_model, Inputs, LossSpec, ModelConfig, ModelParams};

pub fn toy_config(dropout: f64) -> ModelConfig {
    ModelConfig {
        n_layers: 2,
        n_heads: 2,
        hidden: 8,
        ffn_mult: 2,
        vocab_size: 11,
        n_tag_labels: 5,
        max_seq_len: 6,
        layer_norm_eps: 1e-5,
        dropout,
    }
}

pub fn toy_inputs() -> Inputs {
    // second row is padded
    Inputs::from_rows(&[vec![5u32, 1, 7, 9, 4], vec![8, 1, 6]])
}

pub fn loss_at(params: &ModelParams<f64>, inputs: &Inputs, spec: &LossSpec<'_>, seed: Option<u64>) -> f64 {
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let dropout = rng.as_mut().map(|r| r as &mut dyn RngCore);
    backward(params, inputs, spec, dropout).unwrap().0.total
}

/// Central differences against the analytic gradient; returns the number
/// of scalars checked.
pub fn check(lambda_tag: f64, dropout: f64, init_seed: u64) -> usize {
    let cfg = toy_config(dropout);
    assert!(cfg.n_params() <= 5000, "{}", cfg.n_params());
    let mut params: ModelParams<f64> = init_model(&cfg, init_seed);
    // spread the weights so no gradient is trivially tiny
    for (_, _, t) in params.tensors_mut() {
        for (i, x) in t.iter_mut().enumerate() {
            *x *= 2.0;
            *x += 0.01 * ((i % 7) as f64 - 3.0);
        }
    }
    let inputs = toy_inputs();
    let active = BTreeSet::from([1, 3]);
    let spec = LossSpec {
        mask_positions: &[1, 2, 7],
        vocab_targets: &[3, 7, 2],
        tag_targets: &[1, 3, 2],
        active_tag_ids: &active,
        lambda_tag,
    };
    let seed = (dropout > 0.0).then_some(11);
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let (value, grads) = backward(&params, &inputs, &spec, rng.as_mut().map(|r| r as &mut dyn RngCore)).unwrap();
    assert_eq!(value.n_masked, 3);
    assert_eq!(value.n_tag, 2);

    let h = 1e-4;
    let analytic: Vec<(String, Vec<f64>)> =
        grads.tensors().into_iter().map(|(n, _, t)| (n, t.to_vec())).collect();
    let n_tensors = analytic.len();
    let mut checked = 0;
    for ti in 0..n_tensors {
        let len = analytic[ti].1.len();
        for j in 0..len {
            let orig = params.tensors()[ti].2[j];
            params.tensors_mut()[ti].2[j] = orig + h;
            let plus = loss_at(&params, &inputs, &spec, seed);
            params.tensors_mut()[ti].2[j] = orig - h;
            let minus = loss_at(&params, &inputs, &spec, seed);
            params.tensors_mut()[ti].2[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[ti].1[j];
            let scale = a.abs().max(numeric.abs());
            let ok = if scale > 1e-7 { (a - numeric).abs() / scale < 1e-3 } else { (a - numeric).abs() < 1e-10 };
            assert!(ok, "{}[{j}]: analytic {a:e} numeric {numeric:e} (lambda {lambda_tag})", analytic[ti].0);
            checked += 1;
        }
    }
    assert_eq!(checked, cfg.n_params());
    checked
}
