use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView2, Axis};

use super::ops::{c, log_softmax_rows};
use super::Float;
use crate::tagging::{TagId, NO_TAG};

/// Targets of the two objectives at the masked positions.
#[derive(Debug, Clone, Copy)]
pub struct LossSpec<'a> {
    /// Flat (`batch * seq_len + pos`) indices of masked, non-pad positions.
    pub mask_positions: &'a [usize],
    /// Original token id at each masked position.
    pub vocab_targets: &'a [u32],
    /// Tag label at each masked position; ids outside `active_tag_ids`
    /// are treated as 0 and skipped.
    pub tag_targets: &'a [TagId],
    pub active_tag_ids: &'a BTreeSet<TagId>,
    pub lambda_tag: f64,
}

impl LossSpec<'_> {
    pub(crate) fn effective_tag(&self, i: usize) -> Option<usize> {
        let t = self.tag_targets[i];
        (t != NO_TAG && self.active_tag_ids.contains(&t)).then_some(t as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossValue {
    pub total: f64,
    pub mlm: f64,
    pub tag: f64,
    pub n_masked: usize,
    pub n_tag: usize,
}

/// Mean cross-entropy over rows with a target, and `softmax - onehot`
/// for those rows (zero elsewhere, not yet divided by the count).
pub(crate) fn xent<F: Float>(logits: &ArrayView2<F>, targets: &[Option<usize>]) -> (F, usize, Array2<F>) {
    let logp = log_softmax_rows(logits);
    let mut grad = Array2::zeros(logits.dim());
    let mut sum = F::zero();
    let mut count = 0;
    for (i, t) in targets.iter().enumerate() {
        let Some(t) = *t else { continue };
        sum -= logp[[i, t]];
        count += 1;
        let mut g = grad.row_mut(i);
        g.assign(&logp.row(i).mapv(|v| v.exp()));
        g[t] -= F::one();
    }
    let mean = if count == 0 { F::zero() } else { sum / c(count as f64) };
    (mean, count, grad)
}

/// `CE_vocab + λ · CE_tag`, each averaged over its own contributing
/// positions. Logits are `[batch * seq_len, classes]`.
pub fn loss<F: Float>(vocab_logits: &ArrayView2<F>, tag_logits: &ArrayView2<F>, spec: &LossSpec<'_>) -> LossValue {
    let rows = ndarray::Array1::from(spec.mask_positions.to_vec());
    let v = vocab_logits.select(Axis(0), rows.as_slice().unwrap());
    let t = tag_logits.select(Axis(0), rows.as_slice().unwrap());
    gathered_loss(&v.view(), &t.view(), spec).0
}

pub(crate) struct LogitGrads<F> {
    pub vocab: Array2<F>,
    pub tag: Array2<F>,
}

/// Loss on logits already gathered at the masked positions (row i belongs
/// to `spec.mask_positions[i]`), plus gradients of the total loss.
pub(crate) fn gathered_loss<F: Float>(
    vocab_logits: &ArrayView2<F>,
    tag_logits: &ArrayView2<F>,
    spec: &LossSpec<'_>,
) -> (LossValue, LogitGrads<F>) {
    let m = spec.mask_positions.len();
    let vt: Vec<Option<usize>> = spec.vocab_targets.iter().map(|&t| Some(t as usize)).collect();
    let tt: Vec<Option<usize>> = (0..m).map(|i| spec.effective_tag(i)).collect();
    let (mlm, n_masked, mut gv) = xent(vocab_logits, &vt);
    let (tag, n_tag, mut gt) = xent(tag_logits, &tt);
    if n_masked > 0 {
        gv /= c::<F>(n_masked as f64);
    }
    if n_tag > 0 {
        gt *= c::<F>(spec.lambda_tag / n_tag as f64);
    }
    let mlm = mlm.as_f64();
    let tag = tag.as_f64();
    let value = LossValue {
        total: mlm + spec.lambda_tag * tag,
        mlm,
        tag,
        n_masked,
        n_tag,
    };
    (value, LogitGrads { vocab: gv, tag: gt })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_logits_give_ln_v() {
        let v = 7;
        let logits = Array2::<f64>::zeros((3, v));
        let tags = Array2::<f64>::zeros((3, 4));
        let active = BTreeSet::from([1]);
        let spec = LossSpec {
            mask_positions: &[0, 2],
            vocab_targets: &[3, 5],
            tag_targets: &[0, 0],
            active_tag_ids: &active,
            lambda_tag: 1.0,
        };
        let l = loss(&logits.view(), &tags.view(), &spec);
        assert!((l.mlm - (v as f64).ln()).abs() < 1e-12);
        assert_eq!(l.n_tag, 0);
        assert_eq!(l.total, l.mlm);
    }

    #[test]
    fn two_class_tag_head_by_hand() {
        // tag logits [0, a, b]: target 1 active, target 2 inactive.
        let vocab = Array2::<f64>::zeros((2, 2));
        let tags = array![[0.0, 1.0, -1.0], [0.5, 2.0, 0.0]];
        let active = BTreeSet::from([1]);
        let spec = LossSpec {
            mask_positions: &[0, 1],
            vocab_targets: &[0, 1],
            tag_targets: &[1, 2],
            active_tag_ids: &active,
            lambda_tag: 2.0,
        };
        let l = loss(&vocab.view(), &tags.view(), &spec);
        let expected = -(1.0f64.exp() / (1.0 + 1.0f64.exp() + (-1.0f64).exp())).ln();
        assert!((l.tag - expected).abs() < 1e-12);
        assert_eq!(l.n_tag, 1);
        assert!((l.total - (2.0f64.ln() + 2.0 * expected)).abs() < 1e-12);

        let zero = LossSpec { lambda_tag: 0.0, ..spec };
        assert_eq!(loss(&vocab.view(), &tags.view(), &zero).total, 2.0f64.ln());
    }

    #[test]
    fn no_masked_positions_is_zero() {
        let z = Array2::<f64>::zeros((4, 3));
        let active = BTreeSet::new();
        let spec = LossSpec {
            mask_positions: &[],
            vocab_targets: &[],
            tag_targets: &[],
            active_tag_ids: &active,
            lambda_tag: 1.0,
        };
        assert_eq!(loss(&z.view(), &z.view(), &spec), LossValue::default());
    }
}
