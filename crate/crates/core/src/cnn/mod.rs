//! The convolutional classifier: three conv + ReLU + max-pool stages, a
//! flatten, dropout, and a dense stack ending in an 11-way softmax.
//!
//! Forward and backward passes are written by hand. Everything is generic
//! over [`Real`] so training runs in `f32` while gradient checks run in `f64`.
//! Activations are stored channel-major (`[C, B, H, W]`), which turns every
//! convolution into one GEMM over an im2col buffer.

mod arch;
mod checkpoint;
mod gradcheck;
mod layers;
mod net;
mod train;

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use thiserror::Error;

pub use arch::{Activation, CnnArch, CnnParams, Param};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, GradCheckReport};
pub use net::{forward, loss_and_grads, Batch, ForwardOutput, Mode};
pub use train::{evaluate, history_jsonl, images_to_batch, predict_proba, train, EpochRecord, TrainHyper};

#[derive(Debug, Error)]
pub enum CnnError {
    #[error("batch has {got} values, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("image is {width}x{height}, network expects {side}x{side}")]
    ImageSize { width: usize, height: usize, side: usize },
    #[error("label {0} is not a class of this network")]
    BadLabel(u8),
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Floating-point element type of the network.
pub trait Real:
    Copy
    + Default
    + Debug
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;

    /// `c = alpha * a · b + beta * c` on strided matrices (`a` is m×k,
    /// `b` is k×n).
    ///
    /// # Safety
    /// Pointers and strides must describe valid, non-aliasing buffers.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn exp(self) -> Self {
        f32::exp(self)
    }
    fn ln(self) -> Self {
        f32::ln(self)
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Row-major GEMM: `c[m×n] = alpha * op(a) · op(b) + beta * c`, where
/// `op(a)` is m×k and `op(b)` is k×n. `ta`/`tb` mean the stored matrix is
/// the transpose.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<R: Real>(
    ta: bool,
    tb: bool,
    m: usize,
    n: usize,
    k: usize,
    alpha: R,
    a: &[R],
    b: &[R],
    beta: R,
    c: &mut [R],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "gemm buffer too small");
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: bounds asserted above; `c` is a distinct mutable borrow.
    unsafe {
        R::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}
