use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::Rng as _;

use super::arch::{Activation, CnnParams};
use super::layers::{col2im, im2col, maxpool, maxpool_backward};
use super::{gemm, CnnError, Real};
use crate::seed::Rng;

/// `n` single-channel square images, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<R> {
    pub n: usize,
    pub side: usize,
    pub data: Vec<R>,
}

impl<R: Real> Batch<R> {
    pub fn new(n: usize, side: usize, data: Vec<R>) -> Result<Self, CnnError> {
        if data.len() != n * side * side {
            return Err(CnnError::ShapeMismatch {
                expected: n * side * side,
                got: data.len(),
            });
        }
        Ok(Batch { n, side, data })
    }
}

/// Dropout is drawn from the RNG in training mode and skipped in eval mode.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut Rng),
}

struct ConvCache<R> {
    cin: usize,
    cout: usize,
    side: usize,
    cols: Vec<R>,
    pre: Vec<R>,
    pool_idx: Vec<u32>,
}

struct DenseCache<R> {
    input: Vec<R>,
    pre: Vec<R>,
}

pub struct ForwardOutput<R> {
    pub logits: Vec<R>,
    pub probs: Vec<R>,
    pub n_classes: usize,
    convs: Vec<ConvCache<R>>,
    drop_mask: Option<Vec<R>>,
    dense: Vec<DenseCache<R>>,
}

impl<R: Real> ForwardOutput<R> {
    /// Hash of every activation pattern (ReLU on/off, pooling winners).
    /// Two inputs with equal signatures sit on the same linear piece.
    pub fn signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for c in &self.convs {
            c.pool_idx.hash(&mut h);
            for v in &c.pre {
                (*v > R::ZERO).hash(&mut h);
            }
        }
        for d in &self.dense {
            for v in &d.pre {
                (*v > R::ZERO).hash(&mut h);
            }
        }
        h.finish()
    }

    pub fn predictions(&self) -> Vec<u8> {
        self.probs
            .chunks(self.n_classes)
            .map(|row| {
                let mut best = 0;
                for (i, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = i;
                    }
                }
                best as u8
            })
            .collect()
    }
}

fn activate<R: Real>(act: Activation, z: &[R]) -> Vec<R> {
    match act {
        Activation::Relu => z.iter().map(|&v| if v > R::ZERO { v } else { R::ZERO }).collect(),
        Activation::Identity => z.to_vec(),
    }
}

fn activation_backward<R: Real>(act: Activation, pre: &[R], grad: &mut [R]) {
    if act == Activation::Relu {
        for (g, &z) in grad.iter_mut().zip(pre) {
            if z <= R::ZERO {
                *g = R::ZERO;
            }
        }
    }
}

fn softmax_rows<R: Real>(logits: &[R], k: usize) -> Vec<R> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(k) {
        let max = row.iter().copied().fold(row[0], |a, b| if b > a { b } else { a });
        let e: Vec<R> = row.iter().map(|&v| (v - max).exp()).collect();
        let mut z = R::ZERO;
        for &v in &e {
            z += v;
        }
        out.extend(e.into_iter().map(|v| v / z));
    }
    out
}

pub fn forward<R: Real>(params: &CnnParams<R>, batch: &Batch<R>, mode: Mode) -> Result<ForwardOutput<R>, CnnError> {
    let arch = &params.arch;
    if batch.side != arch.input_side || batch.data.len() != batch.n * batch.side * batch.side {
        return Err(CnnError::ShapeMismatch {
            expected: batch.n * arch.input_side * arch.input_side,
            got: batch.data.len(),
        });
    }
    let b = batch.n;
    let mut x = batch.data.clone();
    let (mut cin, mut side) = (1usize, arch.input_side);
    let mut convs = Vec::with_capacity(arch.filters.len());
    for (i, &cout) in arch.filters.iter().enumerate() {
        let n = b * side * side;
        let mut cols = Vec::new();
        im2col(&x, cin, b, side, &mut cols);
        let mut pre = vec![R::ZERO; cout * n];
        gemm(false, false, cout, n, cin * 9, R::ONE, params.conv_w(i), &cols, R::ZERO, &mut pre);
        for (row, &bias) in pre.chunks_mut(n).zip(params.conv_b(i)) {
            row.iter_mut().for_each(|v| *v += bias);
        }
        let a = activate(arch.activation, &pre);
        let (pooled, pool_idx) = maxpool(&a, cout * b, side);
        convs.push(ConvCache {
            cin,
            cout,
            side,
            cols,
            pre,
            pool_idx,
        });
        x = pooled;
        cin = cout;
        side /= 2;
    }

    // [C, B, h, w] -> [B, C*h*w]
    let hw = side * side;
    let f = cin * hw;
    let mut h = vec![R::ZERO; b * f];
    for c in 0..cin {
        for bi in 0..b {
            h[bi * f + c * hw..][..hw].copy_from_slice(&x[(c * b + bi) * hw..][..hw]);
        }
    }
    let drop_mask = match mode {
        Mode::Train(rng) if arch.dropout > 0.0 => {
            let keep = R::from_f64(1.0 / (1.0 - arch.dropout));
            let mask: Vec<R> = (0..h.len())
                .map(|_| if rng.gen::<f64>() < arch.dropout { R::ZERO } else { keep })
                .collect();
            h.iter_mut().zip(&mask).for_each(|(v, &m)| *v *= m);
            Some(mask)
        }
        _ => None,
    };

    let mut dense = Vec::with_capacity(arch.dense.len());
    let mut din = f;
    let last = arch.dense.len() - 1;
    for (j, &dout) in arch.dense.iter().enumerate() {
        let mut pre = vec![R::ZERO; b * dout];
        gemm(false, true, b, dout, din, R::ONE, &h, params.dense_w(j), R::ZERO, &mut pre);
        for row in pre.chunks_mut(dout) {
            row.iter_mut().zip(params.dense_b(j)).for_each(|(v, &bias)| *v += bias);
        }
        let next = if j < last { activate(arch.activation, &pre) } else { pre.clone() };
        dense.push(DenseCache { input: h, pre });
        h = next;
        din = dout;
    }
    let k = arch.n_classes();
    let probs = softmax_rows(&h, k);
    Ok(ForwardOutput {
        logits: h,
        probs,
        n_classes: k,
        convs,
        drop_mask,
        dense,
    })
}

/// Mean cross-entropy plus `l2_lambda * sum(W^2)` over weights (not biases),
/// and its exact gradient.
pub fn loss_and_grads<R: Real>(
    params: &CnnParams<R>,
    batch: &Batch<R>,
    labels: &[u8],
    mode: Mode,
) -> Result<(f64, CnnParams<R>), CnnError> {
    let arch = &params.arch;
    let k = arch.n_classes();
    if labels.len() != batch.n {
        return Err(CnnError::ShapeMismatch {
            expected: batch.n,
            got: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= k) {
        return Err(CnnError::BadLabel(bad));
    }
    let out = forward(params, batch, mode)?;
    let b = batch.n;
    let inv_b = R::from_f64(1.0 / b as f64);

    let mut ce = 0.0f64;
    for (row, &y) in out.logits.chunks(k).zip(labels) {
        let max = row.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v.to_f64() - max).exp()).sum::<f64>().ln();
        ce += lse - row[y as usize].to_f64();
    }
    let loss = ce / b as f64 + arch.l2_lambda * params.l2_norm_sq();

    let mut grads = params.zeros_like();
    let two_lambda = R::from_f64(2.0 * arch.l2_lambda);
    let nconv = arch.filters.len();

    let mut dz = out.probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        dz[i * k + y as usize] -= R::ONE;
    }
    dz.iter_mut().for_each(|v| *v *= inv_b);

    let mut dout = k;
    for j in (0..arch.dense.len()).rev() {
        let cache = &out.dense[j];
        let din = cache.input.len() / b;
        if j < arch.dense.len() - 1 {
            activation_backward(arch.activation, &cache.pre, &mut dz);
        }
        let w = params.dense_w(j);
        let gw = &mut grads.tensors[2 * (nconv + j)].data;
        gemm(true, false, dout, din, b, R::ONE, &dz, &cache.input, R::ZERO, gw);
        gw.iter_mut().zip(w).for_each(|(g, &wv)| *g += two_lambda * wv);
        let gb = &mut grads.tensors[2 * (nconv + j) + 1].data;
        for row in dz.chunks(dout) {
            gb.iter_mut().zip(row).for_each(|(g, &v)| *g += v);
        }
        let mut dh = vec![R::ZERO; b * din];
        gemm(false, false, b, din, dout, R::ONE, &dz, w, R::ZERO, &mut dh);
        dz = dh;
        dout = din;
    }
    if let Some(mask) = &out.drop_mask {
        dz.iter_mut().zip(mask).for_each(|(g, &m)| *g *= m);
    }

    // [B, C*h*w] -> [C, B, h, w]
    let last = out.convs.last().expect("validated arch has convs");
    let (c, s) = (last.cout, last.side / 2);
    let hw = s * s;
    let f = c * hw;
    let mut dx = vec![R::ZERO; b * f];
    for ci in 0..c {
        for bi in 0..b {
            dx[(ci * b + bi) * hw..][..hw].copy_from_slice(&dz[bi * f + ci * hw..][..hw]);
        }
    }

    for i in (0..nconv).rev() {
        let cache = &out.convs[i];
        let n = b * cache.side * cache.side;
        let mut da = maxpool_backward(&dx, &cache.pool_idx, cache.cout * n);
        activation_backward(arch.activation, &cache.pre, &mut da);
        let w = params.conv_w(i);
        let gw = &mut grads.tensors[2 * i].data;
        gemm(false, true, cache.cout, cache.cin * 9, n, R::ONE, &da, &cache.cols, R::ZERO, gw);
        gw.iter_mut().zip(w).for_each(|(g, &wv)| *g += two_lambda * wv);
        let gb = &mut grads.tensors[2 * i + 1].data;
        for (g, row) in gb.iter_mut().zip(da.chunks(n)) {
            let mut s = R::ZERO;
            for &v in row {
                s += v;
            }
            *g = s;
        }
        if i > 0 {
            let mut dcols = vec![R::ZERO; cache.cin * 9 * n];
            gemm(true, false, cache.cin * 9, n, cache.cout, R::ONE, w, &da, R::ZERO, &mut dcols);
            let mut prev = vec![R::ZERO; cache.cin * n];
            col2im(&dcols, cache.cin, b, cache.side, &mut prev);
            dx = prev;
        }
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::super::arch::CnnArch;
    use super::*;
    use crate::seed;

    fn tiny_arch() -> CnnArch {
        CnnArch {
            input_side: 8,
            filters: vec![3, 4],
            dense: vec![6, 11],
            ..CnnArch::standard()
        }
    }

    fn random_batch(n: usize, side: usize, seed_: u64) -> Batch<f64> {
        let mut rng = seed::rng(seed_);
        Batch::new(n, side, (0..n * side * side).map(|_| rng.gen::<f64>()).collect()).unwrap()
    }

    #[test]
    fn zero_weights_give_uniform_probabilities() {
        let p = CnnParams::<f64>::init(&tiny_arch(), 0).unwrap().zeros_like();
        let out = forward(&p, &random_batch(3, 8, 1), Mode::Eval).unwrap();
        assert!(out.probs.iter().all(|&v| (v - 1.0 / 11.0).abs() < 1e-15));
        let mut arch = tiny_arch();
        arch.l2_lambda = 0.0;
        let p = CnnParams::<f64>::init(&arch, 0).unwrap().zeros_like();
        let (loss, _) = loss_and_grads(&p, &random_batch(3, 8, 1), &[0, 5, 10], Mode::Eval).unwrap();
        assert!((loss - 11f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn probabilities_sum_to_one_and_shift_invariant() {
        let p = CnnParams::<f64>::init(&tiny_arch(), 2).unwrap();
        let out = forward(&p, &random_batch(4, 8, 3), Mode::Eval).unwrap();
        for row in out.probs.chunks(11) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let shifted: Vec<f64> = out.logits.iter().map(|v| v + 7.5).collect();
        for (a, b) in softmax_rows(&shifted, 11).iter().zip(&out.probs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dropout_zero_makes_train_equal_eval() {
        let mut arch = tiny_arch();
        arch.dropout = 0.0;
        let p = CnnParams::<f32>::init(&arch, 4).unwrap();
        let batch = Batch::new(2, 8, vec![0.5f32; 128]).unwrap();
        let mut rng = seed::rng(0);
        let a = forward(&p, &batch, Mode::Train(&mut rng)).unwrap();
        let b = forward(&p, &batch, Mode::Eval).unwrap();
        assert_eq!(a.logits, b.logits);
    }

    #[test]
    fn eval_mode_is_deterministic_and_dropout_is_not() {
        let p = CnnParams::<f64>::init(&tiny_arch(), 5).unwrap();
        let batch = random_batch(2, 8, 6);
        let a = forward(&p, &batch, Mode::Eval).unwrap();
        let b = forward(&p, &batch, Mode::Eval).unwrap();
        assert_eq!(a.logits, b.logits);
        let mut rng = seed::rng(1);
        let t = forward(&p, &batch, Mode::Train(&mut rng)).unwrap();
        assert_ne!(t.logits, a.logits);
    }

    #[test]
    fn l2_term_excludes_biases() {
        let mut p = CnnParams::<f64>::init(&tiny_arch(), 7).unwrap().zeros_like();
        for t in p.tensors.iter_mut().filter(|t| !t.decay) {
            t.data.iter_mut().for_each(|v| *v = 1.0);
        }
        assert_eq!(p.l2_norm_sq(), 0.0);
    }

    #[test]
    fn shape_errors() {
        let p = CnnParams::<f64>::init(&tiny_arch(), 0).unwrap();
        assert!(matches!(
            forward(&p, &random_batch(1, 16, 0), Mode::Eval),
            Err(CnnError::ShapeMismatch { .. })
        ));
        assert!(Batch::<f64>::new(2, 8, vec![0.0; 10]).is_err());
        assert!(matches!(
            loss_and_grads(&p, &random_batch(1, 8, 0), &[11], Mode::Eval),
            Err(CnnError::BadLabel(11))
        ));
    }
}
