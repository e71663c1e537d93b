use serde::{Deserialize, Serialize};

use crate::dataset::Features;

/// Gaussian naive Bayes with uniform class priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    means: Vec<Vec<f64>>,
    vars: Vec<Vec<f64>>,
    /// Added to every per-class variance.
    pub epsilon: f64,
}

/// Relative variance floor, scaled by the largest feature variance.
pub const VAR_SMOOTHING: f64 = 1e-9;

impl GaussianNb {
    pub fn fit(x: &Features, y: &[u8], k: usize) -> Self {
        let d = x.cols;
        let mut sums = vec![vec![0.0f64; d]; k];
        let mut counts = vec![0usize; k];
        for (i, &c) in y.iter().enumerate() {
            counts[c as usize] += 1;
            for (s, &v) in sums[c as usize].iter_mut().zip(x.row(i)) {
                *s += v as f64;
            }
        }
        let means: Vec<Vec<f64>> = sums
            .iter()
            .zip(&counts)
            .map(|(s, &n)| s.iter().map(|v| v / n as f64).collect())
            .collect();
        let mut vars = vec![vec![0.0f64; d]; k];
        for (i, &c) in y.iter().enumerate() {
            let (m, v) = (&means[c as usize], &mut vars[c as usize]);
            for j in 0..d {
                let e = x.row(i)[j] as f64 - m[j];
                v[j] += e * e;
            }
        }
        for (v, &n) in vars.iter_mut().zip(&counts) {
            v.iter_mut().for_each(|s| *s /= n as f64);
        }

        let n = y.len() as f64;
        let mut max_var = 0.0f64;
        for j in 0..d {
            let mean = (0..x.rows).map(|i| x.row(i)[j] as f64).sum::<f64>() / n;
            let var = (0..x.rows).map(|i| (x.row(i)[j] as f64 - mean).powi(2)).sum::<f64>() / n;
            max_var = max_var.max(var);
        }
        let epsilon = VAR_SMOOTHING * max_var;
        for v in vars.iter_mut().flatten() {
            *v += epsilon;
        }
        GaussianNb { means, vars, epsilon }
    }

    pub fn n_features(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn n_classes(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<f64>] {
        &self.vars
    }

    /// Per-class log likelihood; the uniform prior is a shared constant and
    /// is dropped.
    pub fn joint_log_likelihood(&self, row: &[f32]) -> Vec<f64> {
        let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        self.means
            .iter()
            .zip(&self.vars)
            .map(|(m, v)| {
                let mut ll = 0.0;
                for j in 0..row.len() {
                    let e = row[j] as f64 - m[j];
                    ll -= half_ln_2pi + 0.5 * v[j].ln() + e * e / (2.0 * v[j]);
                }
                ll
            })
            .collect()
    }

    pub fn proba_row(&self, row: &[f32]) -> Vec<f64> {
        let ll = self.joint_log_likelihood(row);
        let max = ll.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = ll.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        exp.into_iter().map(|v| v / z).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::super::{argmax, testdata::*};
    use super::*;

    fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
        (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    #[test]
    fn separable_clouds_are_fit_exactly() {
        let (x, y) = blobs(30, 3, 4, 0.05, 21);
        let m = GaussianNb::fit(&x, &y, 3);
        let pred: Vec<u8> = (0..x.rows).map(|i| argmax(&m.proba_row(x.row(i)))).collect();
        assert_eq!(accuracy(&pred, &y), 1.0);
    }

    #[test]
    fn posterior_matches_bayes_rule() {
        // class 0: {0, 2}, mean 1, var 1. class 1: {4, 8}, mean 6, var 4.
        let x = Features::new(4, 1, vec![0.0, 2.0, 4.0, 8.0]);
        let m = GaussianNb::fit(&x, &[0, 0, 1, 1], 2);
        // overall variance of {0,2,4,8} is 8.75
        assert!((m.epsilon - 8.75e-9).abs() < 1e-20);
        for q in [-1.0f64, 1.5, 3.0, 5.0, 9.0] {
            let (a, b) = (normal_pdf(q, 1.0, 1.0 + m.epsilon), normal_pdf(q, 6.0, 4.0 + m.epsilon));
            let want = [a / (a + b), b / (a + b)];
            let got = m.proba_row(&[q as f32]);
            for c in 0..2 {
                assert!((got[c] - want[c]).abs() < 1e-12, "x={q}: {got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn symmetric_midpoint_goes_to_smaller_class() {
        let x = Features::new(4, 1, vec![0.0, 2.0, 4.0, 6.0]);
        let m = GaussianNb::fit(&x, &[0, 0, 1, 1], 2);
        let p = m.proba_row(&[3.0]);
        assert_eq!(p[0], p[1]);
        assert_eq!(argmax(&p), 0);
    }

    #[test]
    fn constant_features_do_not_break_the_fit() {
        let x = Features::new(4, 2, vec![0.0, 1.0, 0.0, 1.0, 0.0, 5.0, 0.0, 6.0]);
        let m = GaussianNb::fit(&x, &[0, 0, 1, 1], 2);
        let p = m.proba_row(&[0.0, 1.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert_eq!(argmax(&p), 0);
    }
}
