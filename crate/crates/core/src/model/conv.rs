//! 2D convolution with "same"-style padding via im2col and GEMM.

use super::tensor::Real;

/// Reusable buffers for convolution passes.
#[derive(Debug, Default)]
pub(crate) struct Scratch<T> {
    cols: Vec<T>,
    dcols: Vec<T>,
}

/// Resizes without clearing retained elements; callers overwrite them.
fn set_len<T: Real>(v: &mut Vec<T>, len: usize) {
    if v.len() < len {
        v.resize(len, T::zero());
    } else {
        v.truncate(len);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub stride: usize,
}

impl ConvGeom {
    pub fn padding(&self) -> usize {
        self.dilation * (self.kernel - 1) / 2
    }

    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        let span = self.dilation * (self.kernel - 1) + 1;
        let p = self.padding();
        ((h + 2 * p - span) / self.stride + 1, (w + 2 * p - span) / self.stride + 1)
    }

    #[cfg(test)]
    fn weight_len(&self) -> usize {
        self.out_ch * self.in_ch * self.kernel * self.kernel
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1
    }

    /// Unfolds `input` (in_ch x h x w) into `cols` ((in_ch*k*k) x (ho*wo)).
    /// Every element of `cols` is written, so the buffer is reused as is.
    fn im2col<T: Real>(&self, input: &[T], h: usize, w: usize, cols: &mut Vec<T>) {
        let (ho, wo) = self.out_dims(h, w);
        let k = self.kernel;
        let n = ho * wo;
        set_len(cols, self.in_ch * k * k * n);
        let p = self.padding() as isize;
        let (s, d) = (self.stride as isize, self.dilation as isize);
        for c in 0..self.in_ch {
            let plane = &input[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((c * k + ky) * k + kx) * n..][..n];
                    let dy = ky as isize * d - p;
                    let dx = kx as isize * d - p;
                    for oy in 0..ho {
                        let iy = oy as isize * s + dy;
                        let dst = &mut row[oy * wo..][..wo];
                        if iy < 0 || iy >= h as isize {
                            dst.fill(T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * w..][..w];
                        if s == 1 {
                            let (lo, hi) = valid_range(dx, wo, w);
                            if lo < hi {
                                let start = (lo as isize + dx) as usize;
                                dst[..lo].fill(T::zero());
                                dst[lo..hi].copy_from_slice(&src[start..start + hi - lo]);
                                dst[hi..].fill(T::zero());
                            } else {
                                dst.fill(T::zero());
                            }
                        } else {
                            for (ox, v) in dst.iter_mut().enumerate() {
                                let ix = ox as isize * s + dx;
                                *v = if ix >= 0 && ix < w as isize { src[ix as usize] } else { T::zero() };
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adds the folded `cols` back into `grad_in` (adjoint of `im2col`).
    fn col2im<T: Real>(&self, cols: &[T], h: usize, w: usize, grad_in: &mut [T]) {
        let (ho, wo) = self.out_dims(h, w);
        let k = self.kernel;
        let n = ho * wo;
        let p = self.padding() as isize;
        let (s, d) = (self.stride as isize, self.dilation as isize);
        for c in 0..self.in_ch {
            let plane = &mut grad_in[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((c * k + ky) * k + kx) * n..][..n];
                    let dy = ky as isize * d - p;
                    let dx = kx as isize * d - p;
                    for oy in 0..ho {
                        let iy = oy as isize * s + dy;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..][..w];
                        let src = &row[oy * wo..][..wo];
                        if s == 1 {
                            let (lo, hi) = valid_range(dx, wo, w);
                            if lo < hi {
                                let start = (lo as isize + dx) as usize;
                                for (g, &v) in dst[start..start + hi - lo].iter_mut().zip(&src[lo..hi]) {
                                    *g += v;
                                }
                            }
                        } else {
                            for (ox, &v) in src.iter().enumerate() {
                                let ix = ox as isize * s + dx;
                                if ix >= 0 && ix < w as isize {
                                    dst[ix as usize] += v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// `out` receives out_ch x ho x wo pre-activations.
    pub fn forward<T: Real>(
        &self,
        weight: &[T],
        bias: &[T],
        input: &[T],
        h: usize,
        w: usize,
        scratch: &mut Scratch<T>,
    ) -> Vec<T> {
        let (ho, wo) = self.out_dims(h, w);
        let n = ho * wo;
        let kk = self.in_ch * self.kernel * self.kernel;
        let mut out = vec![T::zero(); self.out_ch * n];
        let cols: &[T] = if self.is_pointwise() {
            &input[..kk * n]
        } else {
            self.im2col(input, h, w, &mut scratch.cols);
            &scratch.cols
        };
        T::gemm(self.out_ch, kk, n, weight, false, cols, false, &mut out, false);
        for (o, row) in out.chunks_exact_mut(n).enumerate() {
            let b = bias[o];
            for v in row {
                *v += b;
            }
        }
        out
    }

    /// Accumulates weight/bias gradients and, when `grad_in` is given, adds
    /// the input gradient into it.
    #[allow(clippy::too_many_arguments)]
    pub fn backward<T: Real>(
        &self,
        weight: &[T],
        input: &[T],
        h: usize,
        w: usize,
        grad_out: &[T],
        grad_weight: &mut [T],
        grad_bias: &mut [T],
        grad_in: Option<&mut [T]>,
        scratch: &mut Scratch<T>,
    ) {
        let (ho, wo) = self.out_dims(h, w);
        let n = ho * wo;
        let kk = self.in_ch * self.kernel * self.kernel;
        for (o, row) in grad_out.chunks_exact(n).enumerate() {
            grad_bias[o] += row.iter().copied().sum::<T>();
        }
        if self.is_pointwise() {
            T::gemm(self.out_ch, n, kk, grad_out, false, &input[..kk * n], true, grad_weight, true);
            if let Some(grad_in) = grad_in {
                T::gemm(kk, self.out_ch, n, weight, true, grad_out, false, &mut grad_in[..kk * n], true);
            }
            return;
        }
        self.im2col(input, h, w, &mut scratch.cols);
        T::gemm(self.out_ch, n, kk, grad_out, false, &scratch.cols, true, grad_weight, true);
        if let Some(grad_in) = grad_in {
            // Overwritten by the GEMM (no accumulation), so stale contents are fine.
            set_len(&mut scratch.dcols, kk * n);
            T::gemm(kk, self.out_ch, n, weight, true, grad_out, false, &mut scratch.dcols, false);
            self.col2im(&scratch.dcols, h, w, grad_in);
        }
    }
}

/// Output columns `[lo, hi)` whose source column `ox + dx` lies in `[0, w)`.
fn valid_range(dx: isize, wo: usize, w: usize) -> (usize, usize) {
    let lo = (-dx).max(0) as usize;
    let hi = (w as isize - dx).clamp(0, wo as isize) as usize;
    (lo.min(wo), hi)
}

/// Nearest-neighbour 2x upsampling of a c x h x w map.
pub(crate) fn upsample2<T: Real>(input: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); c * h2 * w2];
    for ch in 0..c {
        for y in 0..h2 {
            let src = &input[(ch * h + y / 2) * w..][..w];
            let dst = &mut out[(ch * h2 + y) * w2..][..w2];
            for (x, v) in dst.iter_mut().enumerate() {
                *v = src[x / 2];
            }
        }
    }
    out
}

/// Adjoint of [`upsample2`]: sums each 2x2 block of `grad` (c x 2h x 2w).
pub(crate) fn upsample2_backward<T: Real>(grad: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); c * h * w];
    for ch in 0..c {
        for y in 0..h2 {
            let src = &grad[(ch * h2 + y) * w2..][..w2];
            let dst = &mut out[(ch * h + y / 2) * w..][..w];
            for (x, &g) in src.iter().enumerate() {
                dst[x / 2] += g;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct definition of a zero-padded dilated strided convolution.
    fn naive_conv(g: &ConvGeom, wt: &[f64], b: &[f64], x: &[f64], h: usize, w: usize) -> Vec<f64> {
        let (ho, wo) = g.out_dims(h, w);
        let k = g.kernel;
        let p = g.padding() as isize;
        let mut out = vec![0.0; g.out_ch * ho * wo];
        for o in 0..g.out_ch {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b[o];
                    for c in 0..g.in_ch {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * g.stride + ky * g.dilation) as isize - p;
                                let ix = (ox * g.stride + kx * g.dilation) as isize - p;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    acc += wt[((o * g.in_ch + c) * k + ky) * k + kx]
                                        * x[(c * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                    }
                    out[(o * ho + oy) * wo + ox] = acc;
                }
            }
        }
        out
    }

    /// Scratch pre-filled with NaN: any element not rewritten would poison results.
    fn poisoned() -> Scratch<f64> {
        Scratch { cols: vec![f64::NAN; 4096], dcols: vec![f64::NAN; 4096] }
    }

    fn values(n: usize, seed: f64) -> Vec<f64> {
        (0..n).map(|i| ((i as f64 + seed) * 0.913).sin()).collect()
    }

    #[test]
    fn forward_matches_direct_definition() {
        let mut scratch = poisoned();
        for (kernel, dilation, stride) in [(3, 1, 1), (3, 2, 1), (3, 4, 1), (3, 1, 2), (1, 1, 1)] {
            let g = ConvGeom { in_ch: 3, out_ch: 2, kernel, dilation, stride };
            let (h, w) = (6, 8);
            let wt = values(g.weight_len(), 1.0);
            let b = values(2, 2.0);
            let x = values(3 * h * w, 3.0);
            let got = g.forward(&wt, &b, &x, h, w, &mut scratch);
            let expected = naive_conv(&g, &wt, &b, &x, h, w);
            assert_eq!(got.len(), expected.len());
            for (a, e) in got.iter().zip(&expected) {
                assert!((a - e).abs() < 1e-12, "{kernel} {dilation} {stride}");
            }
        }
    }

    #[test]
    fn backward_is_adjoint_of_forward() {
        let mut scratch = poisoned();
        // <grad_out, conv(x)> is linear in x and w; check both gradients
        // against the direct definition via the adjoint identity.
        for (kernel, dilation, stride) in [(3, 1, 1), (3, 4, 1), (3, 1, 2), (1, 1, 1)] {
            let g = ConvGeom { in_ch: 2, out_ch: 3, kernel, dilation, stride };
            let (h, w) = (4, 6);
            let (ho, wo) = g.out_dims(h, w);
            let wt = values(g.weight_len(), 0.5);
            let x = values(2 * h * w, 1.5);
            let go = values(3 * ho * wo, 4.5);
            let zero_b = vec![0.0; 3];
            let mut gw = vec![0.0; g.weight_len()];
            let mut gb = vec![0.0; 3];
            let mut gx = vec![0.0; x.len()];
            g.backward(&wt, &x, h, w, &go, &mut gw, &mut gb, Some(&mut gx), &mut scratch);
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
            // linear in x: <go, conv(x)> = <gx, x>
            let y = naive_conv(&g, &wt, &zero_b, &x, h, w);
            assert!((dot(&go, &y) - dot(&gx, &x)).abs() < 1e-10);
            // linear in w: <go, conv_w(x)> = <gw, w>
            assert!((dot(&go, &y) - dot(&gw, &wt)).abs() < 1e-10);
            let sum: f64 = go[..ho * wo].iter().sum();
            assert!((gb[0] - sum).abs() < 1e-12);
        }
    }

    #[test]
    fn upsample_adjoint() {
        let x = values(2 * 3 * 2, 0.0);
        let up = upsample2(&x, 2, 3, 2);
        assert_eq!(up.len(), 2 * 6 * 4);
        assert_eq!(up[0], x[0]);
        assert_eq!(up[5], x[0]);
        let g = values(up.len(), 7.0);
        let back = upsample2_backward(&g, 2, 3, 2);
        let lhs: f64 = up.iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
