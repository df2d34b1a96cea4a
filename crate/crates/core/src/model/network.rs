use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use rand::{Rng, RngCore};

use super::loss::{gathered_loss, LossSpec, LossValue};
use super::ops::{
    c, gelu, gelu_backward, layer_norm, layer_norm_backward, linear, linear_backward, log_softmax_rows,
    masked_softmax_row, LayerNormCache,
};
use super::{Float, ModelParams};
use crate::error::{Error, Result};
use crate::tokenizer::PAD_ID;

/// A padded batch of token ids, row-major `[batch, seq_len]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Inputs {
    pub batch: usize,
    pub seq_len: usize,
    pub ids: Vec<u32>,
    /// `false` marks padding; padded keys are invisible to attention.
    pub attend: Vec<bool>,
}

impl Inputs {
    pub fn new(batch: usize, seq_len: usize, ids: Vec<u32>, attend: Vec<bool>) -> Result<Self> {
        if ids.len() != batch * seq_len || attend.len() != ids.len() {
            return Err(Error::Shape(format!(
                "expected {batch}x{seq_len} ids and mask, got {} ids and {} mask entries",
                ids.len(),
                attend.len()
            )));
        }
        Ok(Inputs { batch, seq_len, ids, attend })
    }

    /// Right-pads variable-length rows with PAD.
    pub fn from_rows<R: AsRef<[u32]>>(rows: &[R]) -> Self {
        let seq_len = rows.iter().map(|r| r.as_ref().len()).max().unwrap_or(0);
        let mut ids = Vec::with_capacity(rows.len() * seq_len);
        let mut attend = Vec::with_capacity(rows.len() * seq_len);
        for r in rows {
            let r = r.as_ref();
            ids.extend_from_slice(r);
            ids.extend(std::iter::repeat_n(PAD_ID, seq_len - r.len()));
            attend.extend(std::iter::repeat_n(true, r.len()));
            attend.extend(std::iter::repeat_n(false, seq_len - r.len()));
        }
        Inputs { batch: rows.len(), seq_len, ids, attend }
    }

    pub fn n_positions(&self) -> usize {
        self.ids.len()
    }

    fn check<F: Float>(&self, params: &ModelParams<F>) -> Result<()> {
        let cfg = &params.config;
        if self.ids.len() != self.batch * self.seq_len || self.attend.len() != self.ids.len() {
            return Err(Error::Shape("inputs do not match their declared dimensions".into()));
        }
        if self.seq_len > cfg.max_seq_len {
            return Err(Error::Shape(format!(
                "sequence length {} exceeds max_seq_len {}",
                self.seq_len, cfg.max_seq_len
            )));
        }
        if let Some(&bad) = self.ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
            return Err(Error::Shape(format!("token id {bad} >= vocab size {}", cfg.vocab_size)));
        }
        Ok(())
    }
}

struct LayerCache<F> {
    ln1: LayerNormCache<F>,
    h1: Array2<F>,
    q: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    /// Attention weights per (batch row, head), `[seq, seq]`.
    probs: Vec<Array2<F>>,
    ctx: Array2<F>,
    drop_attn: Option<Array2<F>>,
    ln2: LayerNormCache<F>,
    h2: Array2<F>,
    u: Array2<F>,
    z: Array2<F>,
    drop_ffn: Option<Array2<F>>,
}

struct TrunkCache<F> {
    layers: Vec<LayerCache<F>>,
    lnf: LayerNormCache<F>,
}

fn dropout_mask<F: Float>(rng: &mut dyn RngCore, dim: (usize, usize), rate: f64) -> Array2<F> {
    let keep: F = c(1.0 / (1.0 - rate));
    Array2::from_shape_simple_fn(dim, || if rng.random::<f64>() < rate { F::zero() } else { keep })
}

/// Runs embeddings and all blocks; returns the final normalized hidden
/// states `[batch * seq_len, hidden]`.
fn trunk<F: Float>(
    params: &ModelParams<F>,
    inputs: &Inputs,
    mut dropout: Option<&mut dyn RngCore>,
) -> (Array2<F>, TrunkCache<F>) {
    let cfg = &params.config;
    let (bsz, seq, hid) = (inputs.batch, inputs.seq_len, cfg.hidden);
    let (nh, dh) = (cfg.n_heads, cfg.head_dim());
    let n = bsz * seq;
    let eps = cfg.layer_norm_eps;
    let rate = cfg.dropout;
    let scale: F = c(1.0 / (dh as f64).sqrt());

    let mut x = Array2::<F>::zeros((n, hid));
    for (i, mut row) in x.rows_mut().into_iter().enumerate() {
        row.assign(&params.tok_emb.row(inputs.ids[i] as usize));
        row += &params.pos_emb.row(i % seq);
    }

    let mut caches = Vec::with_capacity(cfg.n_layers);
    for l in &params.layers {
        let (h1, ln1) = layer_norm(&x.view(), &l.ln1_g, &l.ln1_b, eps);
        let q = linear(&h1.view(), &l.wq, &l.bq);
        let k = linear(&h1.view(), &l.wk, &l.bk);
        let v = linear(&h1.view(), &l.wv, &l.bv);
        let mut ctx = Array2::<F>::zeros((n, hid));
        let mut probs = Vec::with_capacity(bsz * nh);
        for b in 0..bsz {
            let rows = b * seq..(b + 1) * seq;
            let valid = &inputs.attend[rows.clone()];
            for h in 0..nh {
                let cols = h * dh..(h + 1) * dh;
                let qh = q.slice(s![rows.clone(), cols.clone()]);
                let kh = k.slice(s![rows.clone(), cols.clone()]);
                let vh = v.slice(s![rows.clone(), cols.clone()]);
                let mut p = qh.dot(&kh.t());
                p *= scale;
                for row in p.rows_mut() {
                    masked_softmax_row(row, valid);
                }
                ctx.slice_mut(s![rows.clone(), cols]).assign(&p.dot(&vh));
                probs.push(p);
            }
        }
        let mut a = linear(&ctx.view(), &l.wo, &l.bo);
        let drop_attn = match dropout.as_deref_mut() {
            Some(rng) if rate > 0.0 => {
                let m = dropout_mask(rng, (n, hid), rate);
                a *= &m;
                Some(m)
            }
            _ => None,
        };
        x += &a;

        let (h2, ln2) = layer_norm(&x.view(), &l.ln2_g, &l.ln2_b, eps);
        let u = linear(&h2.view(), &l.w1, &l.b1);
        let z = gelu(&u);
        let mut f = linear(&z.view(), &l.w2, &l.b2);
        let drop_ffn = match dropout.as_deref_mut() {
            Some(rng) if rate > 0.0 => {
                let m = dropout_mask(rng, (n, hid), rate);
                f *= &m;
                Some(m)
            }
            _ => None,
        };
        x += &f;

        caches.push(LayerCache { ln1, h1, q, k, v, probs, ctx, drop_attn, ln2, h2, u, z, drop_ffn });
    }
    let (hf, lnf) = layer_norm(&x.view(), &params.lnf_g, &params.lnf_b, eps);
    (hf, TrunkCache { layers: caches, lnf })
}

/// Final hidden states `[batch * seq_len, hidden]`, no dropout.
pub fn forward_hidden<F: Float>(params: &ModelParams<F>, inputs: &Inputs) -> Result<Array2<F>> {
    inputs.check(params)?;
    Ok(trunk(params, inputs, None).0)
}

/// Vocabulary and tag logits, `[batch, seq_len, V]` and `[batch, seq_len, T]`.
/// Padded positions get logits too.
pub fn forward<F: Float>(params: &ModelParams<F>, inputs: &Inputs) -> Result<(Array3<F>, Array3<F>)> {
    let hf = forward_hidden(params, inputs)?;
    let cfg = &params.config;
    let shape = |w| (inputs.batch, inputs.seq_len, w);
    let vocab = linear(&hf.view(), &params.vocab_w, &params.vocab_b)
        .into_shape_with_order(shape(cfg.vocab_size))
        .expect("row-major logits");
    let tag = linear(&hf.view(), &params.tag_w, &params.tag_b)
        .into_shape_with_order(shape(cfg.n_tag_labels))
        .expect("row-major logits");
    Ok((vocab, tag))
}

/// Vocabulary log-probabilities at the given flat positions only.
pub fn vocab_log_probs_at<F: Float>(
    params: &ModelParams<F>,
    inputs: &Inputs,
    positions: &[usize],
) -> Result<Array2<F>> {
    let hf = forward_hidden(params, inputs)?;
    let rows = hf.select(Axis(0), positions);
    let logits = linear(&rows.view(), &params.vocab_w, &params.vocab_b);
    Ok(log_softmax_rows(&logits.view()))
}

fn attention_backward<F: Float>(
    cache: &LayerCache<F>,
    dctx: &ArrayView2<F>,
    bsz: usize,
    seq: usize,
    nh: usize,
    dh: usize,
) -> (Array2<F>, Array2<F>, Array2<F>) {
    let scale: F = c(1.0 / (dh as f64).sqrt());
    let mut dq = Array2::<F>::zeros(cache.q.dim());
    let mut dk = Array2::<F>::zeros(cache.k.dim());
    let mut dv = Array2::<F>::zeros(cache.v.dim());
    for b in 0..bsz {
        let rows = b * seq..(b + 1) * seq;
        for h in 0..nh {
            let cols = h * dh..(h + 1) * dh;
            let p = &cache.probs[b * nh + h];
            let dch = dctx.slice(s![rows.clone(), cols.clone()]);
            let qh = cache.q.slice(s![rows.clone(), cols.clone()]);
            let kh = cache.k.slice(s![rows.clone(), cols.clone()]);
            let vh = cache.v.slice(s![rows.clone(), cols.clone()]);

            dv.slice_mut(s![rows.clone(), cols.clone()]).assign(&p.t().dot(&dch));
            let dp = dch.dot(&vh.t());
            let mut ds = p * &dp;
            let row_dot = ds.sum_axis(Axis(1));
            for ((mut r, pr), &rd) in ds.rows_mut().into_iter().zip(p.rows()).zip(&row_dot) {
                r.zip_mut_with(&pr, |d, &pv| *d -= pv * rd);
            }
            ds *= scale;
            dq.slice_mut(s![rows.clone(), cols.clone()]).assign(&ds.dot(&kh));
            dk.slice_mut(s![rows.clone(), cols]).assign(&ds.t().dot(&qh));
        }
    }
    (dq, dk, dv)
}

/// Loss and exact gradients for every parameter. With `dropout` set (and a
/// nonzero dropout rate) the sublayer outputs are dropped using that
/// generator.
pub fn backward<F: Float>(
    params: &ModelParams<F>,
    inputs: &Inputs,
    spec: &LossSpec<'_>,
    dropout: Option<&mut dyn RngCore>,
) -> Result<(LossValue, ModelParams<F>)> {
    inputs.check(params)?;
    let m = spec.mask_positions.len();
    if spec.vocab_targets.len() != m || spec.tag_targets.len() != m {
        return Err(Error::Shape("loss targets must align with mask positions".into()));
    }
    if let Some(&p) = spec.mask_positions.iter().find(|&&p| p >= inputs.n_positions()) {
        return Err(Error::Shape(format!("mask position {p} out of range")));
    }
    let cfg = &params.config;
    let (bsz, seq) = (inputs.batch, inputs.seq_len);
    let (hf, cache) = trunk(params, inputs, dropout);

    let hm = hf.select(Axis(0), spec.mask_positions);
    let vl = linear(&hm.view(), &params.vocab_w, &params.vocab_b);
    let tl = linear(&hm.view(), &params.tag_w, &params.tag_b);
    let (value, lg) = gathered_loss(&vl.view(), &tl.view(), spec);

    let mut g = ModelParams::<F>::zeros(cfg);
    let mut dhm = linear_backward(&hm.view(), &params.vocab_w, &lg.vocab.view(), &mut g.vocab_w, &mut g.vocab_b);
    dhm += &linear_backward(&hm.view(), &params.tag_w, &lg.tag.view(), &mut g.tag_w, &mut g.tag_b);

    let mut dhf = Array2::<F>::zeros(hf.dim());
    for (i, &p) in spec.mask_positions.iter().enumerate() {
        let mut row = dhf.row_mut(p);
        row += &dhm.row(i);
    }
    let mut dx = layer_norm_backward(&dhf.view(), &cache.lnf, &params.lnf_g, &mut g.lnf_g, &mut g.lnf_b);

    for ((l, gl), lc) in params.layers.iter().zip(g.layers.iter_mut()).zip(&cache.layers).rev() {
        let df = match &lc.drop_ffn {
            Some(mask) => &dx * mask,
            None => dx.clone(),
        };
        let dz = linear_backward(&lc.z.view(), &l.w2, &df.view(), &mut gl.w2, &mut gl.b2);
        let du = gelu_backward(&lc.u, &dz);
        let dh2 = linear_backward(&lc.h2.view(), &l.w1, &du.view(), &mut gl.w1, &mut gl.b1);
        dx += &layer_norm_backward(&dh2.view(), &lc.ln2, &l.ln2_g, &mut gl.ln2_g, &mut gl.ln2_b);

        let da = match &lc.drop_attn {
            Some(mask) => &dx * mask,
            None => dx.clone(),
        };
        let dctx = linear_backward(&lc.ctx.view(), &l.wo, &da.view(), &mut gl.wo, &mut gl.bo);
        let (dq, dk, dv) = attention_backward(lc, &dctx.view(), bsz, seq, cfg.n_heads, cfg.head_dim());
        let mut dh1 = linear_backward(&lc.h1.view(), &l.wq, &dq.view(), &mut gl.wq, &mut gl.bq);
        dh1 += &linear_backward(&lc.h1.view(), &l.wk, &dk.view(), &mut gl.wk, &mut gl.bk);
        dh1 += &linear_backward(&lc.h1.view(), &l.wv, &dv.view(), &mut gl.wv, &mut gl.bv);
        dx += &layer_norm_backward(&dh1.view(), &lc.ln1, &l.ln1_g, &mut gl.ln1_g, &mut gl.ln1_b);
    }

    for (i, row) in dx.rows().into_iter().enumerate() {
        let mut t = g.tok_emb.row_mut(inputs.ids[i] as usize);
        t += &row;
        let mut p = g.pos_emb.row_mut(i % seq);
        p += &row;
    }
    Ok((value, g))
}
