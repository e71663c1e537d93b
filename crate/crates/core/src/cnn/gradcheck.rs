use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::arch::{CnnArch, CnnParams};
use super::net::{forward, loss_and_grads, Batch, ForwardOutput, Mode};
use super::CnnError;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    /// Max over checked coordinates of `|a - n| / max(|a|, |n|, 1e-12)`.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose ±eps probes changed a ReLU or pooling decision;
    /// the finite difference there straddles a kink and says nothing.
    pub skipped: usize,
    /// Tensor name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
}

/// `L(w + eps) - L(w - eps)` from the two sets of logits, written so the
/// large common part of the log-sum-exp cancels analytically:
/// `lse(zp) - lse(zm) = ln(1 + sum_i softmax(zm)_i * expm1(zp_i - zm_i))`.
/// The weight-decay part is `lambda * ((w + eps)^2 - (w - eps)^2)` for the one
/// perturbed coordinate.
fn loss_difference(plus: &ForwardOutput<f64>, minus: &ForwardOutput<f64>, labels: &[u8], l2: f64) -> f64 {
    let k = plus.n_classes;
    let ce: f64 = plus
        .logits
        .chunks(k)
        .zip(minus.logits.chunks(k))
        .zip(minus.probs.chunks(k))
        .zip(labels)
        .map(|(((zp, zm), pm), &y)| {
            let ratio: f64 = zp.iter().zip(zm).zip(pm).map(|((a, b), p)| p * (a - b).exp_m1()).sum();
            ratio.ln_1p() - (zp[y as usize] - zm[y as usize])
        })
        .sum();
    ce / labels.len() as f64 + l2
}

/// Compares backprop against central differences on every parameter of a
/// freshly initialised `arch`, in double precision, on a random 2-sample
/// batch. Dropout (if any) uses the same mask for every evaluation.
pub fn grad_check(arch: &CnnArch, eps: f64, seed_: u64) -> Result<GradCheckReport, CnnError> {
    let mut params = CnnParams::<f64>::init(arch, seed_)?;
    // nonzero biases so bias gradients are exercised away from symmetry
    let mut rng = seed::child_rng(seed_, 1_000);
    for t in params.tensors.iter_mut().filter(|t| !t.decay) {
        t.data.iter_mut().for_each(|v| *v = rng.gen_range(-0.05..0.05));
    }
    let side = arch.input_side;
    let batch = Batch::new(2, side, (0..2 * side * side).map(|_| rng.gen::<f64>()).collect())?;
    let k = arch.n_classes() as u8;
    let labels = [rng.gen_range(0..k), rng.gen_range(0..k)];
    let drop_seed = seed::derive_seed(seed_, 2_000);

    let eval = |p: &CnnParams<f64>| -> Result<ForwardOutput<f64>, CnnError> {
        forward(p, &batch, Mode::Train(&mut seed::rng(drop_seed)))
    };
    let (_, grads) = loss_and_grads(&params, &batch, &labels, Mode::Train(&mut seed::rng(drop_seed)))?;
    let base_sig = eval(&params)?.signature();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
        worst: None,
    };
    for t in 0..params.tensors.len() {
        for i in 0..params.tensors[t].data.len() {
            let w = params.tensors[t].data[i];
            params.tensors[t].data[i] = w + eps;
            let plus = eval(&params)?;
            params.tensors[t].data[i] = w - eps;
            let minus = eval(&params)?;
            params.tensors[t].data[i] = w;
            if plus.signature() != base_sig || minus.signature() != base_sig {
                report.skipped += 1;
                continue;
            }
            let l2 = if params.tensors[t].decay {
                arch.l2_lambda * ((w + eps).powi(2) - (w - eps).powi(2))
            } else {
                0.0
            };
            let numeric = loss_difference(&plus, &minus, &labels, l2) / (2.0 * eps);
            let analytic = grads.tensors[t].data[i];
            let denom = analytic.abs().max(numeric.abs()).max(1e-12);
            let err = (analytic - numeric).abs() / denom;
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((params.tensors[t].name.clone(), i));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::super::arch::Activation;
    use super::*;

    fn small(activation: Activation, dropout: f64) -> CnnArch {
        CnnArch {
            input_side: 8,
            filters: vec![2, 3],
            dense: vec![5, 4],
            dropout,
            l2_lambda: 1e-3,
            activation,
        }
    }

    #[test]
    fn stable_difference_matches_direct_difference() {
        let arch = small(Activation::Relu, 0.0);
        let mut p = CnnParams::<f64>::init(&arch, 4).unwrap();
        let batch = Batch::new(2, 8, (0..128).map(|i| (i as f64 * 0.3).sin().abs()).collect()).unwrap();
        let labels = [3u8, 1];
        let (base, _) = loss_and_grads(&p, &batch, &labels, Mode::Eval).unwrap();
        let minus = forward(&p, &batch, Mode::Eval).unwrap();
        let w = p.tensors[6].data[0];
        p.tensors[6].data[0] = w + 0.25;
        let (moved, _) = loss_and_grads(&p, &batch, &labels, Mode::Eval).unwrap();
        let plus = forward(&p, &batch, Mode::Eval).unwrap();
        let l2 = arch.l2_lambda * ((w + 0.25).powi(2) - w * w);
        let d = loss_difference(&plus, &minus, &labels, l2);
        assert!((d - (moved - base)).abs() < 1e-12, "{d} vs {}", moved - base);
    }

    #[test]
    fn reduced_standard_net_passes() {
        let r = grad_check(&CnnArch::reduced(16), 1e-5, 3).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn linear_net_gradients_are_exact() {
        let r = grad_check(&small(Activation::Identity, 0.0), 1e-5, 1).unwrap();
        assert!(r.max_rel_error < 1e-7, "{r:?}");
        assert!(r.checked > 0);
    }

    #[test]
    fn relu_net_with_dropout_passes() {
        let r = grad_check(&small(Activation::Relu, 0.5), 1e-5, 2).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
        assert!(r.checked > r.skipped);
    }
}
