use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, ArrayViewMut1, Axis, Zip};

use super::Float;

pub(crate) fn c<F: Float>(x: f64) -> F {
    F::cast_from(x)
}

/// `x W + b` over rows.
pub(crate) fn linear<F: Float>(x: &ArrayView2<F>, w: &Array2<F>, b: &Array1<F>) -> Array2<F> {
    let mut y = x.dot(w);
    y += b;
    y
}

/// Accumulates `dW += xᵀ dy`, `db += Σ dy` and returns `dx = dy Wᵀ`.
pub(crate) fn linear_backward<F: Float>(
    x: &ArrayView2<F>,
    w: &Array2<F>,
    dy: &ArrayView2<F>,
    dw: &mut Array2<F>,
    db: &mut Array1<F>,
) -> Array2<F> {
    general_mat_mul(F::one(), &x.t(), dy, F::one(), dw);
    *db += &dy.sum_axis(Axis(0));
    dy.dot(&w.t())
}

pub(crate) struct LayerNormCache<F> {
    pub xhat: Array2<F>,
    pub rstd: Array1<F>,
}

pub(crate) fn layer_norm<F: Float>(
    x: &ArrayView2<F>,
    g: &Array1<F>,
    b: &Array1<F>,
    eps: f64,
) -> (Array2<F>, LayerNormCache<F>) {
    let (n, h) = x.dim();
    let hf: F = c(h as f64);
    let mut xhat = Array2::zeros((n, h));
    let mut rstd = Array1::zeros(n);
    for ((row, mut out), r) in x.rows().into_iter().zip(xhat.rows_mut()).zip(rstd.iter_mut()) {
        let mean = row.sum() / hf;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / hf;
        let inv = F::one() / (var + c(eps)).sqrt();
        *r = inv;
        Zip::from(&mut out).and(&row).for_each(|o, &v| *o = (v - mean) * inv);
    }
    let y = &xhat * g + b;
    (y, LayerNormCache { xhat, rstd })
}

pub(crate) fn layer_norm_backward<F: Float>(
    dy: &ArrayView2<F>,
    cache: &LayerNormCache<F>,
    g: &Array1<F>,
    dg: &mut Array1<F>,
    db: &mut Array1<F>,
) -> Array2<F> {
    *dg += &(dy * &cache.xhat).sum_axis(Axis(0));
    *db += &dy.sum_axis(Axis(0));
    let h = dy.ncols();
    let hf: F = c(h as f64);
    let mut dx = dy * g;
    for ((mut row, xh), &r) in dx.rows_mut().into_iter().zip(cache.xhat.rows()).zip(&cache.rstd) {
        let mean_d = row.sum() / hf;
        let mean_dx = row.iter().zip(xh.iter()).map(|(&d, &x)| d * x).sum::<F>() / hf;
        Zip::from(&mut row).and(&xh).for_each(|d, &x| *d = r * (*d - mean_d - x * mean_dx));
    }
    dx
}

const GELU_K: f64 = 0.044_715;

fn gelu_c<F: Float>() -> F {
    c((2.0 / std::f64::consts::PI).sqrt())
}

/// Tanh approximation of GELU.
pub(crate) fn gelu<F: Float>(u: &Array2<F>) -> Array2<F> {
    let k: F = c(GELU_K);
    let s = gelu_c::<F>();
    let half: F = c(0.5);
    u.mapv(|x| half * x * (F::one() + (s * (x + k * x * x * x)).tanh()))
}

pub(crate) fn gelu_backward<F: Float>(u: &Array2<F>, dz: &Array2<F>) -> Array2<F> {
    let k: F = c(GELU_K);
    let s = gelu_c::<F>();
    let half: F = c(0.5);
    let three: F = c(3.0);
    let mut out = dz.clone();
    Zip::from(&mut out).and(u).for_each(|d, &x| {
        let t = (s * (x + k * x * x * x)).tanh();
        let deriv = half * (F::one() + t) + half * x * (F::one() - t * t) * s * (F::one() + three * k * x * x);
        *d *= deriv;
    });
    out
}

/// In-place softmax over the entries whose `valid` flag is set; others
/// become 0. A row with no valid entry becomes all zeros.
pub(crate) fn masked_softmax_row<F: Float>(mut row: ArrayViewMut1<F>, valid: &[bool]) {
    let mut max = F::neg_infinity();
    for (&v, &ok) in row.iter().zip(valid) {
        if ok && v > max {
            max = v;
        }
    }
    if max == F::neg_infinity() {
        row.fill(F::zero());
        return;
    }
    let mut sum = F::zero();
    for (v, &ok) in row.iter_mut().zip(valid) {
        if ok {
            *v = (*v - max).exp();
            sum += *v;
        } else {
            *v = F::zero();
        }
    }
    row.mapv_inplace(|v| v / sum);
}

/// Row-wise log-softmax with max subtraction.
pub(crate) fn log_softmax_rows<F: Float>(logits: &ArrayView2<F>) -> Array2<F> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
        let lse = row.iter().map(|&v| (v - max).exp()).sum::<F>().ln() + max;
        row.mapv_inplace(|v| v - lse);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softmax_ignores_invalid() {
        let mut r = array![1.0f64, 2.0, 100.0];
        masked_softmax_row(r.view_mut(), &[true, true, false]);
        let e = 1.0f64.exp() + 2.0f64.exp();
        assert!((r[0] - 1.0f64.exp() / e).abs() < 1e-15);
        assert_eq!(r[2], 0.0);
        let mut z = array![1.0f64, 2.0];
        masked_softmax_row(z.view_mut(), &[false, false]);
        assert_eq!(z, array![0.0, 0.0]);
    }

    #[test]
    fn log_softmax_is_stable() {
        let l = array![[1000.0f64, 1000.0], [0.0, -1000.0]];
        let ls = log_softmax_rows(&l.view());
        assert!((ls[[0, 0]] + std::f64::consts::LN_2).abs() < 1e-12);
        assert!(ls.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gelu_derivative_matches_difference() {
        let u = array![[-3.0f64, -0.5, 0.0, 0.7, 2.5]];
        let ones = Array2::ones(u.dim());
        let d = gelu_backward(&u, &ones);
        let h = 1e-6;
        let plus = gelu(&u.mapv(|x| x + h));
        let minus = gelu(&u.mapv(|x| x - h));
        for j in 0..u.ncols() {
            let fd = (plus[[0, j]] - minus[[0, j]]) / (2.0 * h);
            assert!((fd - d[[0, j]]).abs() < 1e-8);
        }
    }
}
