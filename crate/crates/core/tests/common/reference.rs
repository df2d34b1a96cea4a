//! Plain-loop encoder forward, sharing no code with the library's matrix
//! routines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use curriculum_lm::model::{init_model, ModelConfig, ModelParams};
use curriculum_lm::tokenizer::{EOS_ID, MASK_ID};

type Mat = Vec<Vec<f64>>;

fn get2(a: &ndarray::Array2<f64>) -> Mat {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

fn affine(x: &[f64], w: &ndarray::Array2<f64>, b: &ndarray::Array1<f64>) -> Vec<f64> {
    let w = get2(w);
    (0..b.len())
        .map(|j| b[j] + x.iter().enumerate().map(|(i, xi)| xi * w[i][j]).sum::<f64>())
        .collect()
}

fn norm(x: &[f64], g: &ndarray::Array1<f64>, b: &ndarray::Array1<f64>, eps: f64) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    x.iter().enumerate().map(|(i, v)| (v - mean) / (var + eps).sqrt() * g[i] + b[i]).collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

/// Vocabulary logits of one unpadded sequence.
pub fn reference_logits(p: &ModelParams<f64>, ids: &[u32]) -> Mat {
    let cfg = &p.config;
    let (h, nh) = (cfg.hidden, cfg.n_heads);
    let dh = h / nh;
    let s = ids.len();
    let mut x: Mat = (0..s)
        .map(|t| (0..h).map(|j| p.tok_emb[[ids[t] as usize, j]] + p.pos_emb[[t, j]]).collect())
        .collect();
    for l in &p.layers {
        let hn: Mat = x.iter().map(|r| norm(r, &l.ln1_g, &l.ln1_b, cfg.layer_norm_eps)).collect();
        let q: Mat = hn.iter().map(|r| affine(r, &l.wq, &l.bq)).collect();
        let k: Mat = hn.iter().map(|r| affine(r, &l.wk, &l.bk)).collect();
        let v: Mat = hn.iter().map(|r| affine(r, &l.wv, &l.bv)).collect();
        let mut ctx = vec![vec![0.0; h]; s];
        for head in 0..nh {
            let c0 = head * dh;
            for i in 0..s {
                let scores: Vec<f64> = (0..s)
                    .map(|j| (0..dh).map(|d| q[i][c0 + d] * k[j][c0 + d]).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = scores.iter().map(|sc| (sc - m).exp()).collect();
                let z: f64 = e.iter().sum();
                for d in 0..dh {
                    ctx[i][c0 + d] = (0..s).map(|j| e[j] / z * v[j][c0 + d]).sum();
                }
            }
        }
        for i in 0..s {
            let a = affine(&ctx[i], &l.wo, &l.bo);
            for j in 0..h {
                x[i][j] += a[j];
            }
            let h2 = norm(&x[i], &l.ln2_g, &l.ln2_b, cfg.layer_norm_eps);
            let u: Vec<f64> = affine(&h2, &l.w1, &l.b1).into_iter().map(gelu).collect();
            let f = affine(&u, &l.w2, &l.b2);
            for j in 0..h {
                x[i][j] += f[j];
            }
        }
    }
    x.iter()
        .map(|r| affine(&norm(r, &p.lnf_g, &p.lnf_b, cfg.layer_norm_eps), &p.vocab_w, &p.vocab_b))
        .collect()
}

pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = row.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m;
    row.iter().map(|v| v - lse).collect()
}

/// PLL by brute force: one separate reference forward per masked position.
pub fn brute_force_pll(p: &ModelParams<f64>, tokens: &[u32]) -> f64 {
    let mut total = 0.0;
    for i in 0..tokens.len() {
        let mut ids = tokens.to_vec();
        ids.push(EOS_ID);
        ids[i] = MASK_ID;
        total += log_softmax(&reference_logits(p, &ids)[i])[tokens[i] as usize];
    }
    total
}

/// Small random model with weights spread by uniform noise.
pub fn toy(seed: u64, n_layers: usize, hidden: usize, heads: usize, vocab: usize) -> ModelParams<f64> {
    let cfg = ModelConfig {
        n_layers,
        n_heads: heads,
        hidden,
        ffn_mult: 4,
        vocab_size: vocab,
        n_tag_labels: 3,
        max_seq_len: 12,
        layer_norm_eps: 1e-5,
        dropout: 0.1,
    };
    let mut p: ModelParams<f64> = init_model(&cfg, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    for (_, _, t) in p.tensors_mut() {
        for x in t.iter_mut() {
            *x += rng.random_range(-0.5..0.5);
        }
    }
    p
}
