//! im2col / col2im for 3×3 same-padded convolutions and 2×2 max-pooling,
//! all on channel-major `[C, B, H, W]` tensors.

use super::Real;

/// Unfolds `x` (`[c, b, side, side]`) into `[c·9, b·side·side]`.
pub(crate) fn im2col<R: Real>(x: &[R], c: usize, b: usize, side: usize, cols: &mut Vec<R>) {
    let plane = side * side;
    let n = b * plane;
    cols.clear();
    cols.resize(c * 9 * n, R::ZERO);
    for ci in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ci * 9) + ky * 3 + kx) * n..][..n];
                let (x_lo, x_hi) = (1usize.saturating_sub(kx), (side + 1 - kx).min(side));
                for bi in 0..b {
                    let src = &x[(ci * b + bi) * plane..][..plane];
                    for y in 0..side {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= side as isize {
                            continue;
                        }
                        let srow = &src[sy as usize * side..][..side];
                        let drow = &mut row[bi * plane + y * side..][..side];
                        // destination x maps to source x + kx - 1
                        drow[x_lo..x_hi].copy_from_slice(&srow[x_lo + kx - 1..x_hi + kx - 1]);
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: folds `[c·9, b·side·side]` back, summing overlaps.
pub(crate) fn col2im<R: Real>(cols: &[R], c: usize, b: usize, side: usize, x: &mut [R]) {
    let plane = side * side;
    let n = b * plane;
    x.iter_mut().for_each(|v| *v = R::ZERO);
    for ci in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ci * 9) + ky * 3 + kx) * n..][..n];
                let (x_lo, x_hi) = (1usize.saturating_sub(kx), (side + 1 - kx).min(side));
                for bi in 0..b {
                    let dst = &mut x[(ci * b + bi) * plane..][..plane];
                    for y in 0..side {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= side as isize {
                            continue;
                        }
                        let drow = &mut dst[sy as usize * side..][..side];
                        let srow = &row[bi * plane + y * side..][..side];
                        for xx in x_lo..x_hi {
                            drow[xx + kx - 1] += srow[xx];
                        }
                    }
                }
            }
        }
    }
}

/// 2×2 stride-2 max-pool over `planes` square planes of side `side`.
/// Returns the pooled tensor and, per output, the flat input index of the
/// maximum (first one in scan order on ties).
pub(crate) fn maxpool<R: Real>(x: &[R], planes: usize, side: usize) -> (Vec<R>, Vec<u32>) {
    let half = side / 2;
    let mut out = Vec::with_capacity(planes * half * half);
    let mut idx = Vec::with_capacity(planes * half * half);
    for p in 0..planes {
        let base = p * side * side;
        for y in 0..half {
            for xx in 0..half {
                let i0 = base + 2 * y * side + 2 * xx;
                let mut best = i0;
                for cand in [i0 + 1, i0 + side, i0 + side + 1] {
                    if x[cand] > x[best] {
                        best = cand;
                    }
                }
                out.push(x[best]);
                idx.push(best as u32);
            }
        }
    }
    (out, idx)
}

pub(crate) fn maxpool_backward<R: Real>(dout: &[R], idx: &[u32], input_len: usize) -> Vec<R> {
    let mut dx = vec![R::ZERO; input_len];
    for (&g, &i) in dout.iter().zip(idx) {
        dx[i as usize] += g;
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct 3×3 same-padded convolution of one channel, one image.
    fn conv_naive(x: &[f64], side: usize, k: &[f64; 9]) -> Vec<f64> {
        let mut out = vec![0.0; side * side];
        for y in 0..side as isize {
            for xx in 0..side as isize {
                let mut s = 0.0;
                for ky in 0..3isize {
                    for kx in 0..3isize {
                        let (sy, sx) = (y + ky - 1, xx + kx - 1);
                        if sy >= 0 && sx >= 0 && sy < side as isize && sx < side as isize {
                            s += k[(ky * 3 + kx) as usize] * x[(sy * side as isize + sx) as usize];
                        }
                    }
                }
                out[(y * side as isize + xx) as usize] = s;
            }
        }
        out
    }

    #[test]
    fn im2col_rows_reproduce_direct_convolution() {
        let side = 5;
        let x: Vec<f64> = (0..2 * side * side).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let k = [1.0, -2.0, 0.5, 3.0, 0.0, -1.0, 2.0, 1.5, -0.5];
        let mut cols = Vec::new();
        im2col(&x, 1, 2, side, &mut cols);
        let n = 2 * side * side;
        for b in 0..2 {
            let want = conv_naive(&x[b * 25..(b + 1) * 25], side, &k);
            for p in 0..25 {
                let got: f64 = (0..9).map(|r| k[r] * cols[r * n + b * 25 + p]).sum();
                assert!((got - want[p]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn col2im_is_the_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let (c, b, side) = (2, 3, 4);
        let x: Vec<f64> = (0..c * b * side * side).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..c * 9 * b * side * side).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut cols = Vec::new();
        im2col(&x, c, b, side, &mut cols);
        let mut back = vec![0.0; x.len()];
        col2im(&y, c, b, side, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn maxpool_picks_first_maximum() {
        let x = [1.0, 3.0, 3.0, 0.0, 2.0, 2.0, 2.0, 2.0f64];
        // two 2x2 planes stored as one 2-wide plane pair
        let (out, idx) = maxpool(&x, 2, 2);
        assert_eq!(out, vec![3.0, 2.0]);
        assert_eq!(idx, vec![1, 4]);
        let dx = maxpool_backward(&[10.0, 20.0], &idx, 8);
        assert_eq!(dx, vec![0.0, 10.0, 0.0, 0.0, 20.0, 0.0, 0.0, 0.0]);
    }
}
