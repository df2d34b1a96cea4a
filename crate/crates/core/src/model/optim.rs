use serde::{Deserialize, Serialize};

use super::{Float, ModelParams, ParamKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<F> {
    pub config: AdamWConfig,
    pub m: ModelParams<F>,
    pub v: ModelParams<F>,
    /// Number of updates applied so far.
    pub step: u64,
}

impl<F: Float> OptimizerState<F> {
    pub fn new(params: &ModelParams<F>, config: AdamWConfig) -> Self {
        OptimizerState {
            config,
            m: ModelParams::zeros(&params.config),
            v: ModelParams::zeros(&params.config),
            step: 0,
        }
    }
}

/// One AdamW update with bias-corrected moments. Weight decay is decoupled
/// (`p -= lr * wd * p`) and skips biases and layer-norm parameters.
pub fn adamw_step<F: Float>(
    params: &mut ModelParams<F>,
    grads: &ModelParams<F>,
    state: &mut OptimizerState<F>,
    lr: f64,
) {
    state.step += 1;
    let cfg = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (F::cast_from(cfg.beta1), F::cast_from(cfg.beta2));
    let (one_b1, one_b2) = (F::cast_from(1.0 - cfg.beta1), F::cast_from(1.0 - cfg.beta2));
    let step_size = F::cast_from(lr / bc1);
    let inv_bc2_sqrt = F::cast_from(1.0 / bc2.sqrt());
    let eps = F::cast_from(cfg.eps);
    let decay = F::cast_from(lr * cfg.weight_decay);

    let g_all = grads.tensors();
    let m_all = state.m.tensors_mut();
    let v_all = state.v.tensors_mut();
    for ((((_, kind, p), (_, _, g)), (_, _, m)), (_, _, v)) in
        params.tensors_mut().into_iter().zip(g_all).zip(m_all).zip(v_all)
    {
        let decays = kind == ParamKind::Weight && cfg.weight_decay != 0.0;
        for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            if decays {
                *p -= decay * *p;
            }
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            *p -= step_size * *m / (v.sqrt() * inv_bc2_sqrt + eps);
        }
    }
}

/// Linear warm-up from 0 to `peak` over `warmup` steps, then linear decay
/// to 0 at `max_steps`.
pub fn lr_at(step: usize, max_steps: usize, warmup: usize, peak: f64) -> f64 {
    if step >= max_steps {
        return 0.0;
    }
    if step < warmup {
        return peak * step as f64 / warmup as f64;
    }
    let span = (max_steps - warmup) as f64;
    peak * (max_steps - step) as f64 / span
}
