use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{CnnError, Real};
use crate::seed;
use crate::{CANVAS_SIDE, NUM_CLASSES};

/// Nonlinearity after each conv and hidden dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    /// No nonlinearity; the whole net is then piecewise linear only through
    /// max-pooling.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnArch {
    /// Square single-channel input.
    pub input_side: usize,
    /// Output channels of each 3×3 conv stage; each stage halves the side.
    pub filters: Vec<usize>,
    /// Dense widths; the last one is the number of classes.
    pub dense: Vec<usize>,
    pub dropout: f64,
    pub l2_lambda: f64,
    pub activation: Activation,
}

impl CnnArch {
    /// 56×56 input, filters 16/32/64, dense 128/64/11, dropout 0.5, L2 1e-4.
    pub fn standard() -> Self {
        CnnArch {
            input_side: CANVAS_SIDE,
            filters: vec![16, 32, 64],
            dense: vec![128, 64, NUM_CLASSES],
            dropout: 0.5,
            l2_lambda: 1e-4,
            activation: Activation::Relu,
        }
    }

    /// Small network for gradient checks: filters 8/8/8, dense 16/16/11.
    pub fn reduced(input_side: usize) -> Self {
        CnnArch {
            input_side,
            filters: vec![8, 8, 8],
            dense: vec![16, 16, NUM_CLASSES],
            ..Self::standard()
        }
    }

    pub fn validate(&self) -> Result<(), CnnError> {
        let bad = |m: String| Err(CnnError::InvalidArch(m));
        if self.filters.is_empty() || self.dense.is_empty() {
            return bad("need at least one conv stage and one dense layer".into());
        }
        if self.filters.iter().chain(&self.dense).any(|&w| w == 0) {
            return bad("layer widths must be positive".into());
        }
        let div = 1usize << self.filters.len();
        if self.input_side == 0 || self.input_side % div != 0 {
            return bad(format!(
                "input side {} is not divisible by {div} ({} pooling stages)",
                self.input_side,
                self.filters.len()
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return bad("l2_lambda must be non-negative".into());
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        *self.dense.last().expect("validated")
    }

    /// Side length after conv stage `i` has pooled.
    pub fn side_after(&self, i: usize) -> usize {
        self.input_side >> (i + 1)
    }

    pub fn flatten_size(&self) -> usize {
        let s = self.side_after(self.filters.len() - 1);
        s * s * self.filters.last().expect("validated")
    }

    /// `(name, shape, fan_in, fan_out, decays)` for every tensor, in storage order.
    pub(crate) fn layout(&self) -> Vec<(String, Vec<usize>, usize, usize, bool)> {
        let mut out = Vec::new();
        let mut cin = 1;
        for (i, &cout) in self.filters.iter().enumerate() {
            out.push((format!("conv{i}.weight"), vec![cout, cin, 3, 3], cin * 9, cout * 9, true));
            out.push((format!("conv{i}.bias"), vec![cout], 0, 0, false));
            cin = cout;
        }
        let mut din = self.flatten_size();
        for (j, &dout) in self.dense.iter().enumerate() {
            out.push((format!("dense{j}.weight"), vec![dout, din], din, dout, true));
            out.push((format!("dense{j}.bias"), vec![dout], 0, 0, false));
            din = dout;
        }
        out
    }
}

/// One named tensor. `decay` marks weights that carry the L2 penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<R> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<R>,
    pub decay: bool,
}

/// All weights and biases of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnParams<R> {
    pub arch: CnnArch,
    /// conv weights and biases, then dense weights and biases, alternating.
    pub tensors: Vec<Param<R>>,
}

impl<R: Real> CnnParams<R> {
    /// Glorot-uniform weights, zero biases.
    pub fn init(arch: &CnnArch, seed_: u64) -> Result<Self, CnnError> {
        arch.validate()?;
        let tensors = arch
            .layout()
            .into_iter()
            .enumerate()
            .map(|(t, (name, shape, fan_in, fan_out, decay))| {
                let n: usize = shape.iter().product();
                let data = if decay {
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    let mut rng = seed::child_rng(seed_, t as u64);
                    (0..n).map(|_| R::from_f64(rng.gen_range(-limit..=limit))).collect()
                } else {
                    vec![R::ZERO; n]
                };
                Param {
                    name,
                    shape,
                    data,
                    decay,
                }
            })
            .collect();
        Ok(CnnParams {
            arch: arch.clone(),
            tensors,
        })
    }

    pub fn zeros_like(&self) -> Self {
        CnnParams {
            arch: self.arch.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|p| Param {
                    data: vec![R::ZERO; p.data.len()],
                    ..p.clone()
                })
                .collect(),
        }
    }

    pub fn cast<S: Real>(&self) -> CnnParams<S> {
        CnnParams {
            arch: self.arch.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: p.data.iter().map(|v| S::from_f64(v.to_f64())).collect(),
                    decay: p.decay,
                })
                .collect(),
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(|p| p.data.len()).sum()
    }

    pub(crate) fn conv_w(&self, i: usize) -> &[R] {
        &self.tensors[2 * i].data
    }

    pub(crate) fn conv_b(&self, i: usize) -> &[R] {
        &self.tensors[2 * i + 1].data
    }

    pub(crate) fn dense_w(&self, j: usize) -> &[R] {
        &self.tensors[2 * (self.arch.filters.len() + j)].data
    }

    pub(crate) fn dense_b(&self, j: usize) -> &[R] {
        &self.tensors[2 * (self.arch.filters.len() + j) + 1].data
    }

    /// Sum of squared decaying weights.
    pub fn l2_norm_sq(&self) -> f64 {
        self.tensors
            .iter()
            .filter(|p| p.decay)
            .flat_map(|p| p.data.iter())
            .map(|v| v.to_f64() * v.to_f64())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_spatial_flow() {
        let a = CnnArch::standard();
        a.validate().unwrap();
        assert_eq!((0..3).map(|i| a.side_after(i)).collect::<Vec<_>>(), vec![28, 14, 7]);
        assert_eq!(a.flatten_size(), 7 * 7 * 64);
        assert_eq!(a.n_classes(), 11);
    }

    #[test]
    fn invalid_archs() {
        let mut a = CnnArch::standard();
        a.input_side = 50;
        assert!(a.validate().is_err());
        let mut a = CnnArch::standard();
        a.dropout = 1.0;
        assert!(a.validate().is_err());
    }

    #[test]
    fn glorot_limits_and_zero_biases() {
        let arch = CnnArch {
            input_side: 8,
            filters: vec![4],
            dense: vec![7, 11],
            ..CnnArch::standard()
        };
        let p = CnnParams::<f64>::init(&arch, 3).unwrap();
        // the 7 -> 11 layer
        let w = &p.tensors[4];
        assert_eq!(w.shape, vec![11, 7]);
        let limit = (1.0f64 / 3.0).sqrt();
        assert!(w.data.iter().all(|v| v.abs() <= limit));
        assert!(w.data.iter().any(|v| v.abs() > 0.5 * limit));
        // conv: fan_in 9, fan_out 36
        let cw = &p.tensors[0];
        assert!(cw.data.iter().all(|v| v.abs() <= (6.0f64 / 45.0).sqrt()));
        for b in [&p.tensors[1], &p.tensors[3], &p.tensors[5]] {
            assert!(b.data.iter().all(|&v| v == 0.0));
        }
        assert_eq!(CnnParams::<f64>::init(&arch, 3).unwrap(), p);
        assert_ne!(CnnParams::<f64>::init(&arch, 4).unwrap(), p);
    }

    #[test]
    fn glorot_mean_is_near_zero() {
        // 7*7*64 -> 128 has ~4e5 weights; the mean of U(-l, l) has standard
        // error l / sqrt(3n)
        let p = CnnParams::<f64>::init(&CnnArch::standard(), 11).unwrap();
        let w = &p.tensors[6].data;
        let n = w.len() as f64;
        let limit = (6.0f64 / (3136.0 + 128.0)).sqrt();
        let mean = w.iter().sum::<f64>() / n;
        assert!(mean.abs() < 3.0 * limit / (3.0 * n).sqrt(), "{mean}");
    }
}
