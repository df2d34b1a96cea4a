use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Float, ModelConfig};

/// Role of a tensor; only `Weight` tensors receive weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    Norm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<F> {
    pub ln1_g: Array1<F>,
    pub ln1_b: Array1<F>,
    pub wq: Array2<F>,
    pub bq: Array1<F>,
    pub wk: Array2<F>,
    pub bk: Array1<F>,
    pub wv: Array2<F>,
    pub bv: Array1<F>,
    pub wo: Array2<F>,
    pub bo: Array1<F>,
    pub ln2_g: Array1<F>,
    pub ln2_b: Array1<F>,
    pub w1: Array2<F>,
    pub b1: Array1<F>,
    pub w2: Array2<F>,
    pub b2: Array1<F>,
}

/// All trainable tensors. Matrices act on row vectors (`y = x W + b`).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    pub config: ModelConfig,
    pub tok_emb: Array2<F>,
    pub pos_emb: Array2<F>,
    pub layers: Vec<LayerParams<F>>,
    pub lnf_g: Array1<F>,
    pub lnf_b: Array1<F>,
    pub vocab_w: Array2<F>,
    pub vocab_b: Array1<F>,
    pub tag_w: Array2<F>,
    pub tag_b: Array1<F>,
}

// Lists every tensor in a fixed order. `$get` turns a field expression into
// the slice form wanted by the caller.
macro_rules! tensor_list {
    ($self:expr, $get:ident, $iter:ident) => {{
        let mut out = Vec::new();
        out.push(("tok_emb".to_string(), ParamKind::Weight, $get!($self.tok_emb)));
        out.push(("pos_emb".to_string(), ParamKind::Weight, $get!($self.pos_emb)));
        for (i, l) in $self.layers.$iter().enumerate() {
            let p = |n: &str| format!("layers.{i}.{n}");
            out.push((p("ln1_g"), ParamKind::Norm, $get!(l.ln1_g)));
            out.push((p("ln1_b"), ParamKind::Norm, $get!(l.ln1_b)));
            out.push((p("wq"), ParamKind::Weight, $get!(l.wq)));
            out.push((p("bq"), ParamKind::Bias, $get!(l.bq)));
            out.push((p("wk"), ParamKind::Weight, $get!(l.wk)));
            out.push((p("bk"), ParamKind::Bias, $get!(l.bk)));
            out.push((p("wv"), ParamKind::Weight, $get!(l.wv)));
            out.push((p("bv"), ParamKind::Bias, $get!(l.bv)));
            out.push((p("wo"), ParamKind::Weight, $get!(l.wo)));
            out.push((p("bo"), ParamKind::Bias, $get!(l.bo)));
            out.push((p("ln2_g"), ParamKind::Norm, $get!(l.ln2_g)));
            out.push((p("ln2_b"), ParamKind::Norm, $get!(l.ln2_b)));
            out.push((p("w1"), ParamKind::Weight, $get!(l.w1)));
            out.push((p("b1"), ParamKind::Bias, $get!(l.b1)));
            out.push((p("w2"), ParamKind::Weight, $get!(l.w2)));
            out.push((p("b2"), ParamKind::Bias, $get!(l.b2)));
        }
        out.push(("lnf_g".to_string(), ParamKind::Norm, $get!($self.lnf_g)));
        out.push(("lnf_b".to_string(), ParamKind::Norm, $get!($self.lnf_b)));
        out.push(("vocab_w".to_string(), ParamKind::Weight, $get!($self.vocab_w)));
        out.push(("vocab_b".to_string(), ParamKind::Bias, $get!($self.vocab_b)));
        out.push(("tag_w".to_string(), ParamKind::Weight, $get!($self.tag_w)));
        out.push(("tag_b".to_string(), ParamKind::Bias, $get!($self.tag_b)));
        out
    }};
}

macro_rules! as_slice {
    ($e:expr) => {
        $e.as_slice().expect("parameters are contiguous")
    };
}

macro_rules! as_slice_mut {
    ($e:expr) => {
        $e.as_slice_mut().expect("parameters are contiguous")
    };
}

impl<F: Float> ModelParams<F> {
    pub fn zeros(config: &ModelConfig) -> Self {
        let (h, f, v, t, s) = (
            config.hidden,
            config.ffn_hidden(),
            config.vocab_size,
            config.n_tag_labels,
            config.max_seq_len,
        );
        let z1 = |n| Array1::<F>::zeros(n);
        let z2 = |r, c| Array2::<F>::zeros((r, c));
        ModelParams {
            config: config.clone(),
            tok_emb: z2(v, h),
            pos_emb: z2(s, h),
            layers: (0..config.n_layers)
                .map(|_| LayerParams {
                    ln1_g: z1(h),
                    ln1_b: z1(h),
                    wq: z2(h, h),
                    bq: z1(h),
                    wk: z2(h, h),
                    bk: z1(h),
                    wv: z2(h, h),
                    bv: z1(h),
                    wo: z2(h, h),
                    bo: z1(h),
                    ln2_g: z1(h),
                    ln2_b: z1(h),
                    w1: z2(h, f),
                    b1: z1(f),
                    w2: z2(f, h),
                    b2: z1(h),
                })
                .collect(),
            lnf_g: z1(h),
            lnf_b: z1(h),
            vocab_w: z2(h, v),
            vocab_b: z1(v),
            tag_w: z2(h, t),
            tag_b: z1(t),
        }
    }

    /// Every tensor as `(name, kind, flat data)` in checkpoint order.
    pub fn tensors(&self) -> Vec<(String, ParamKind, &[F])> {
        tensor_list!(self, as_slice, iter)
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, ParamKind, &mut [F])> {
        tensor_list!(self, as_slice_mut, iter_mut)
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|(_, _, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, t)| t.iter().all(|x| x.is_finite()))
    }

    pub fn cast<G: Float>(&self) -> ModelParams<G> {
        let mut out = ModelParams::<G>::zeros(&self.config);
        for ((_, _, dst), (_, _, src)) in out.tensors_mut().into_iter().zip(self.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = G::cast_from(s.as_f64());
            }
        }
        out
    }
}

/// Normal(0, 0.02) weights, unit layer-norm scales, zero biases and shifts.
/// Deterministic in `seed`.
pub fn init_model<F: Float>(config: &ModelConfig, seed: u64) -> ModelParams<F> {
    let mut params = ModelParams::zeros(config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f64, 0.02).expect("valid std");
    for (name, kind, data) in params.tensors_mut() {
        match kind {
            ParamKind::Weight => data.iter_mut().for_each(|x| *x = F::cast_from(normal.sample(&mut rng))),
            ParamKind::Bias => {}
            ParamKind::Norm => {
                if name.ends_with("_g") {
                    data.fill(F::one());
                }
            }
        }
    }
    params
}
