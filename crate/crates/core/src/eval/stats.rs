use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub n: usize,
    pub df: usize,
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub t: f64,
    pub p: f64,
    /// Set when the differences have zero spread but a nonzero mean
    /// (`t` is infinite and `p` is reported as 0).
    pub degenerate: bool,
}

/// Two-sided p-value of a Student-t statistic.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

/// Paired two-sided t-test on `a[i] - b[i]` with `n - 1` degrees of freedom.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(Error::Stats(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Stats(format!("need at least 2 pairs, got {n}")));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();
    let df = n - 1;
    let (t, p, degenerate) = if d.iter().all(|&x| x == 0.0) {
        (0.0, 1.0, false)
    } else if sd == 0.0 {
        (mean.signum() * f64::INFINITY, 0.0, true)
    } else {
        let t = mean / (sd / nf.sqrt());
        (t, student_t_two_sided_p(t, df as f64), false)
    };
    Ok(TTestResult { n, df, mean_diff: mean, sd_diff: sd, t, p, degenerate })
}
