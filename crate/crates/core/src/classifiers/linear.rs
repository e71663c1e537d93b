//! One-vs-rest linear classifiers trained by plain SGD.
//!
//! Each class gets its own binary model (`+1` for the class, `-1` otherwise).
//! All binary models walk the same per-epoch shuffle. Step size decays as
//! `learning_rate / sqrt(t)`; the passive-aggressive loss uses its own
//! closed-form step instead. The bias is never penalised.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Features;
use crate::seed;

use super::{argmax, ClassifierError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Hinge,
    Log,
    Perceptron,
    ModifiedHuber,
    /// PA-I; `c` caps the step.
    PassiveAggressive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    None,
    L1,
    L2,
    ElasticNet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConfig {
    pub loss: Loss,
    pub penalty: Penalty,
    /// Penalty strength. Ignored when `c` is set for a penalised model.
    pub alpha: f64,
    /// Inverse strength: `alpha = 1 / (c * N)`. For the passive-aggressive
    /// loss this is the aggressiveness cap instead.
    pub c: Option<f64>,
    pub l1_ratio: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub shuffle: bool,
}

pub const DEFAULT_ALPHA: f64 = 1e-4;
pub const DEFAULT_EPOCHS: usize = 30;
pub const DEFAULT_LEARNING_RATE: f64 = 0.01;
pub const DEFAULT_L1_RATIO: f64 = 0.15;

impl LinearConfig {
    pub fn sgd(loss: Loss, penalty: Penalty) -> Self {
        LinearConfig {
            loss,
            penalty,
            alpha: DEFAULT_ALPHA,
            c: None,
            l1_ratio: DEFAULT_L1_RATIO,
            epochs: DEFAULT_EPOCHS,
            learning_rate: DEFAULT_LEARNING_RATE,
            shuffle: true,
        }
    }

    pub fn logistic_regression(c: f64, penalty: Penalty) -> Self {
        LinearConfig {
            c: Some(c),
            ..Self::sgd(Loss::Log, penalty)
        }
    }

    pub fn passive_aggressive(c: f64) -> Self {
        LinearConfig {
            c: Some(c),
            ..Self::sgd(Loss::PassiveAggressive, Penalty::None)
        }
    }

    pub fn perceptron(penalty: Penalty) -> Self {
        Self::sgd(Loss::Perceptron, penalty)
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidSpec(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.l1_ratio) {
            return bad("l1_ratio must lie in [0, 1]");
        }
        if let Some(c) = self.c {
            if !(c > 0.0 && c.is_finite()) {
                return bad("C must be positive");
            }
        }
        if self.loss == Loss::PassiveAggressive && self.c.is_none() {
            return bad("passive-aggressive needs C");
        }
        Ok(())
    }

    /// Penalty strength used for a training set of `n` samples.
    pub fn effective_alpha(&self, n: usize) -> f64 {
        match (self.loss, self.c) {
            (Loss::PassiveAggressive, _) => 0.0,
            (_, Some(c)) => 1.0 / (c * n as f64),
            (_, None) => self.alpha,
        }
    }

    /// L1 and L2 shares of the penalty.
    fn penalty_split(&self) -> (f64, f64) {
        match self.penalty {
            Penalty::None => (0.0, 0.0),
            Penalty::L1 => (1.0, 0.0),
            Penalty::L2 => (0.0, 1.0),
            Penalty::ElasticNet => (self.l1_ratio, 1.0 - self.l1_ratio),
        }
    }
}

/// Per-sample loss of margin `yz = y * z`.
pub fn loss_value(loss: Loss, yz: f64) -> f64 {
    match loss {
        Loss::Hinge | Loss::PassiveAggressive => (1.0 - yz).max(0.0),
        Loss::Log => ln_1p_exp(-yz),
        Loss::Perceptron => (-yz).max(0.0),
        Loss::ModifiedHuber => {
            if yz >= 1.0 {
                0.0
            } else if yz >= -1.0 {
                (1.0 - yz).powi(2)
            } else {
                -4.0 * yz
            }
        }
    }
}

/// Derivative of the loss with respect to `z`, for label `y = ±1`.
pub fn loss_dz(loss: Loss, y: f64, z: f64) -> f64 {
    let yz = y * z;
    match loss {
        Loss::Hinge | Loss::PassiveAggressive => {
            if yz < 1.0 {
                -y
            } else {
                0.0
            }
        }
        Loss::Log => -y * sigmoid(-yz),
        Loss::Perceptron => {
            if yz <= 0.0 {
                -y
            } else {
                0.0
            }
        }
        Loss::ModifiedHuber => {
            if yz >= 1.0 {
                0.0
            } else if yz >= -1.0 {
                -2.0 * y * (1.0 - yz)
            } else {
                -4.0 * y
            }
        }
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn ln_1p_exp(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

/// Weights kept as `scale * w` so L2 shrinkage costs O(1) per step.
struct Binary {
    w: Vec<f64>,
    scale: f64,
    b: f64,
}

impl Binary {
    fn new(d: usize) -> Self {
        Binary {
            w: vec![0.0; d],
            scale: 1.0,
            b: 0.0,
        }
    }

    fn z(&self, x: &[f32]) -> f64 {
        let dot: f64 = self.w.iter().zip(x).map(|(w, &v)| w * v as f64).sum();
        self.scale * dot + self.b
    }

    fn renormalize(&mut self) {
        let s = self.scale;
        self.w.iter_mut().for_each(|w| *w *= s);
        self.scale = 1.0;
    }

    fn weights(mut self) -> (Vec<f64>, f64) {
        self.renormalize();
        (self.w, self.b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub config: LinearConfig,
    /// One row of weights per class.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl LinearModel {
    pub fn fit(x: &Features, y: &[u8], k: usize, config: &LinearConfig, seed_: u64) -> Self {
        Self::train(x, y, k, config, seed_, false).0
    }

    /// Also returns the penalised training objective after every epoch,
    /// summed over the one-vs-rest problems.
    pub fn fit_traced(x: &Features, y: &[u8], k: usize, config: &LinearConfig, seed_: u64) -> (Self, Vec<f64>) {
        Self::train(x, y, k, config, seed_, true)
    }

    fn train(x: &Features, y: &[u8], k: usize, config: &LinearConfig, seed_: u64, traced: bool) -> (Self, Vec<f64>) {
        let n = x.rows;
        let orders: Vec<Vec<usize>> = (0..config.epochs)
            .map(|e| {
                let mut order: Vec<usize> = (0..n).collect();
                if config.shuffle {
                    order.shuffle(&mut seed::child_rng(seed_, e as u64));
                }
                order
            })
            .collect();
        let alpha = config.effective_alpha(n);
        let norms: Vec<f64> = (0..n)
            .map(|i| x.row(i).iter().map(|&v| (v as f64) * (v as f64)).sum())
            .collect();

        let per_class: Vec<(Vec<f64>, f64, Vec<f64>)> = (0..k)
            .into_par_iter()
            .map(|c| {
                let target = |i: usize| if y[i] as usize == c { 1.0 } else { -1.0 };
                let mut m = Binary::new(x.cols);
                let mut trace = Vec::with_capacity(orders.len());
                let mut t = 0u64;
                for order in &orders {
                    for &i in order {
                        t += 1;
                        step(&mut m, config, alpha, x.row(i), norms[i], target(i), t);
                    }
                    if traced {
                        trace.push(binary_objective(&m, x, &target, config, alpha));
                    }
                }
                let (w, b) = m.weights();
                (w, b, trace)
            })
            .collect();

        let mut trace = vec![0.0; if traced { config.epochs } else { 0 }];
        let mut weights = Vec::with_capacity(k);
        let mut bias = Vec::with_capacity(k);
        for (w, b, tr) in per_class {
            for (acc, v) in trace.iter_mut().zip(tr) {
                *acc += v;
            }
            weights.push(w);
            bias.push(b);
        }
        (
            LinearModel {
                config: config.clone(),
                weights,
                bias,
            },
            trace,
        )
    }

    pub fn n_features(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn n_classes(&self) -> usize {
        self.weights.len()
    }

    pub fn decision_row(&self, row: &[f32]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| w.iter().zip(row).map(|(w, &v)| w * v as f64).sum::<f64>() + b)
            .collect()
    }

    pub fn predict_row(&self, row: &[f32]) -> u8 {
        argmax(&self.decision_row(row))
    }

    /// One-vs-rest sigmoids, normalised to sum to one.
    pub fn proba_row(&self, row: &[f32]) -> Vec<f64> {
        let p: Vec<f64> = self.decision_row(row).into_iter().map(sigmoid).collect();
        let z: f64 = p.iter().sum();
        if z == 0.0 {
            return vec![1.0 / p.len() as f64; p.len()];
        }
        p.into_iter().map(|v| v / z).collect()
    }
}

fn step(m: &mut Binary, cfg: &LinearConfig, alpha: f64, x: &[f32], norm2: f64, y: f64, t: u64) {
    let z = m.z(x);
    if cfg.loss == Loss::PassiveAggressive {
        let loss = loss_value(Loss::PassiveAggressive, y * z);
        if loss > 0.0 {
            // the bias acts as a constant feature of value 1
            let tau = cfg.c.expect("validated").min(loss / (norm2 + 1.0));
            let u = tau * y / m.scale;
            m.w.iter_mut().zip(x).for_each(|(w, &v)| *w += u * v as f64);
            m.b += tau * y;
        }
        return;
    }

    let eta = cfg.learning_rate / (t as f64).sqrt();
    let g = loss_dz(cfg.loss, y, z);
    let (l1, l2) = cfg.penalty_split();
    if l2 > 0.0 {
        m.scale *= (1.0 - eta * alpha * l2).max(1e-12);
        if m.scale < 1e-9 {
            m.renormalize();
        }
    }
    if g != 0.0 {
        let u = -eta * g / m.scale;
        m.w.iter_mut().zip(x).for_each(|(w, &v)| *w += u * v as f64);
        m.b -= eta * g;
    }
    if l1 > 0.0 {
        let cut = eta * alpha * l1 / m.scale;
        for w in m.w.iter_mut() {
            *w = if *w > cut {
                *w - cut
            } else if *w < -cut {
                *w + cut
            } else {
                0.0
            };
        }
    }
}

fn binary_objective(m: &Binary, x: &Features, target: &dyn Fn(usize) -> f64, cfg: &LinearConfig, alpha: f64) -> f64 {
    let n = x.rows;
    let data: f64 = (0..n).map(|i| loss_value(cfg.loss, target(i) * m.z(x.row(i)))).sum::<f64>() / n as f64;
    let (l1, l2) = cfg.penalty_split();
    let sq: f64 = m.w.iter().map(|w| (w * m.scale).powi(2)).sum();
    let abs: f64 = m.w.iter().map(|w| (w * m.scale).abs()).sum();
    data + alpha * (0.5 * l2 * sq + l1 * abs)
}

#[cfg(test)]
mod tests {
    use super::super::testdata::accuracy;
    use super::*;
    use crate::seed;
    use rand::Rng;

    /// Random points labelled by a random hyperplane through their mean.
    fn separable(n: usize, d: usize, seed_: u64) -> (Features, Vec<u8>) {
        let mut rng = seed::rng(seed_);
        let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let data: Vec<f32> = (0..n * d).map(|_| rng.gen_range(0.0f32..1.0)).collect();
        let x = Features::new(n, d, data);
        let score = |i: usize| -> f64 { x.row(i).iter().zip(&w).map(|(&v, w)| (v as f64 - 0.5) * w).sum() };
        let y = (0..n).map(|i| (score(i) > 0.0) as u8).collect();
        (x, y)
    }

    /// Full-batch gradient descent on the L2-penalised logistic objective
    /// of the binary problem "class 1 vs class 0".
    fn gd_oracle(x: &Features, y: &[u8], alpha: f64, lr: f64, iters: usize) -> (Vec<f64>, f64) {
        let (n, d) = (x.rows, x.cols);
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        for _ in 0..iters {
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for i in 0..n {
                let t = if y[i] == 1 { 1.0 } else { -1.0 };
                let z: f64 = x.row(i).iter().zip(&w).map(|(&v, w)| v as f64 * w).sum::<f64>() + b;
                let g = -t / (1.0 + (t * z).exp());
                for j in 0..d {
                    gw[j] += g * x.row(i)[j] as f64 / n as f64;
                }
                gb += g / n as f64;
            }
            for j in 0..d {
                w[j] -= lr * (gw[j] + alpha * w[j]);
            }
            b -= lr * gb;
        }
        (w, b)
    }

    #[test]
    fn logistic_sgd_matches_gradient_descent_oracle() {
        let (x, y) = separable(200, 20, 31);
        let cfg = LinearConfig::sgd(Loss::Log, Penalty::L2).with_epochs(50).with_learning_rate(5.0);
        let m = LinearModel::fit(&x, &y, 2, &cfg, 5);
        let pred: Vec<u8> = (0..x.rows).map(|i| m.predict_row(x.row(i))).collect();
        assert!(accuracy(&pred, &y) >= 0.95, "{}", accuracy(&pred, &y));

        let (w, b) = gd_oracle(&x, &y, cfg.alpha, 0.5, 3000);
        let oracle: Vec<u8> = (0..x.rows)
            .map(|i| {
                let z: f64 = x.row(i).iter().zip(&w).map(|(&v, w)| v as f64 * w).sum::<f64>() + b;
                (z > 0.0) as u8
            })
            .collect();
        assert!(accuracy(&oracle, &y) >= 0.95);
        // both converge toward the same separator
        assert!(accuracy(&pred, &oracle) >= 0.95);
    }

    #[test]
    fn l2_objective_decreases_with_small_steps() {
        let (x, y) = separable(40, 5, 32);
        // per-sample smoothness is below (|x|^2 + 1) / 4 + alpha < 2; with
        // n * lr well under 1 each epoch is a short, stable descent
        let cfg = LinearConfig {
            shuffle: false,
            ..LinearConfig::sgd(Loss::Log, Penalty::L2)
                .with_epochs(25)
                .with_learning_rate(0.01)
        };
        let (_, trace) = LinearModel::fit_traced(&x, &y, 2, &cfg, 0);
        for pair in trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "{trace:?}");
        }
    }

    #[test]
    fn loss_derivatives_match_finite_differences() {
        for loss in [Loss::Log, Loss::ModifiedHuber] {
            for &z in &[-2.5, -0.3, 0.4, 0.9, 1.7] {
                for y in [-1.0, 1.0] {
                    let h = 1e-6;
                    let num = (loss_value(loss, y * (z + h)) - loss_value(loss, y * (z - h))) / (2.0 * h);
                    assert!((num - loss_dz(loss, y, z)).abs() < 1e-6, "{loss:?} z={z} y={y}");
                }
            }
        }
    }

    #[test]
    fn passive_aggressive_step_closes_the_margin() {
        let cfg = LinearConfig::passive_aggressive(100.0);
        let mut m = Binary::new(2);
        let x = [1.0f32, 2.0];
        step(&mut m, &cfg, 0.0, &x, 5.0, 1.0, 1);
        // tau = 1 / (5 + 1): the margin lands exactly on 1
        assert!((m.z(&x) - 1.0).abs() < 1e-12);
        let mut capped = Binary::new(2);
        step(&mut capped, &LinearConfig::passive_aggressive(0.01), 0.0, &x, 5.0, 1.0, 1);
        assert!((capped.z(&x) - 0.06).abs() < 1e-12);
    }

    #[test]
    fn l1_penalty_zeroes_useless_weights() {
        let (x, y) = separable(100, 6, 33);
        let mut data = Vec::new();
        for i in 0..x.rows {
            data.extend_from_slice(x.row(i));
            data.push(0.5);
        }
        let x = Features::new(100, 7, data);
        let cfg = LinearConfig {
            alpha: 0.05,
            ..LinearConfig::sgd(Loss::Hinge, Penalty::L1)
        };
        let m = LinearModel::fit(&x, &y, 2, &cfg, 1);
        assert!(m.weights.iter().all(|w| w[6].abs() < 1e-2), "{:?}", m.weights);
    }

    #[test]
    fn c_maps_to_alpha() {
        let cfg = LinearConfig::logistic_regression(2.0, Penalty::L2);
        assert_eq!(cfg.effective_alpha(500), 1.0 / 1000.0);
        assert_eq!(LinearConfig::sgd(Loss::Hinge, Penalty::L2).effective_alpha(500), DEFAULT_ALPHA);
        assert!(LinearConfig::sgd(Loss::Log, Penalty::L2).with_learning_rate(0.0).validate().is_err());
    }
}
