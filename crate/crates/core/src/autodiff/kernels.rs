//! Numeric forward kernels. These never build graph nodes; `graph.rs` wires
//! them together and provides the backward rules.

use alloc::vec;
use alloc::vec::Vec;

use super::{Array, Scalar};
use crate::error::{invalid, Error, Result};

/// Symmetric zero padding, stride and dilation of a 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    pub pad: usize,
    pub dilation: usize,
}

impl ConvSpec {
    pub const fn new(stride: usize, pad: usize, dilation: usize) -> Self {
        Self { stride, pad, dilation }
    }

    /// Stride 1 with padding that preserves the spatial size for odd kernels.
    pub const fn same(kernel: usize, dilation: usize) -> Self {
        Self { stride: 1, pad: dilation * (kernel - 1) / 2, dilation }
    }

    /// Stride 2, padding `(k - 1) / 2`: halves even sizes.
    pub const fn down(kernel: usize) -> Self {
        Self { stride: 2, pad: (kernel - 1) / 2, dilation: 1 }
    }

    /// Output size of the forward convolution along one axis.
    pub fn out_dim(&self, input: usize, kernel: usize) -> Option<usize> {
        let span = self.dilation * (kernel - 1) + 1;
        let padded = input + 2 * self.pad;
        if self.stride == 0 || kernel == 0 || padded < span {
            None
        } else {
            Some((padded - span) / self.stride + 1)
        }
    }
}

pub(crate) fn shape4(a: &[usize], ctx: &'static str) -> Result<[usize; 4]> {
    if a.len() != 4 {
        return Err(Error::Shape { context: ctx, left: a.to_vec(), right: vec![0, 0, 0, 0] });
    }
    Ok([a[0], a[1], a[2], a[3]])
}

struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    spec: ConvSpec,
}

impl Geometry {
    fn k(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.ho * self.wo
    }
}

fn im2col<T: Scalar>(x: &[T], g: &Geometry, cols: &mut [T]) {
    let p = g.p();
    let s = g.spec;
    for ci in 0..g.c {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = ((ci * g.kh + ki) * g.kw + kj) * p;
                let out = &mut cols[row..row + p];
                for oy in 0..g.ho {
                    let iy = (oy * s.stride + ki * s.dilation) as isize - s.pad as isize;
                    let dst = &mut out[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * s.stride + kj * s.dilation) as isize - s.pad as isize;
                        *d = if ix < 0 || ix >= g.w as isize { T::zero() } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], g: &Geometry, x: &mut [T]) {
    let p = g.p();
    let s = g.spec;
    for ci in 0..g.c {
        let plane = &mut x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = ((ci * g.kh + ki) * g.kw + kj) * p;
                let src = &cols[row..row + p];
                for oy in 0..g.ho {
                    let iy = (oy * s.stride + ki * s.dilation) as isize - s.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * s.stride + kj * s.dilation) as isize - s.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

fn geometry(x_chw: [usize; 3], kh: usize, kw: usize, spec: ConvSpec) -> Result<Geometry> {
    let [c, h, w] = x_chw;
    let ho = spec.out_dim(h, kh).ok_or_else(|| invalid("convolution kernel larger than padded input"))?;
    let wo = spec.out_dim(w, kw).ok_or_else(|| invalid("convolution kernel larger than padded input"))?;
    Ok(Geometry { c, h, w, kh, kw, ho, wo, spec })
}

/// Safe strided gemm over slices; `c = a * b (+ c)`.
#[allow(clippy::too_many_arguments)]
fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    (rsa, csa): (usize, usize),
    b: &[T],
    (rsb, csb): (usize, usize),
    c: &mut [T],
    rsc: usize,
    accumulate: bool,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.fill(T::zero());
        }
        return;
    }
    assert!((m - 1) * rsa + (k - 1) * csa < a.len());
    assert!((k - 1) * rsb + (n - 1) * csb < b.len());
    assert!((m - 1) * rsc + n - 1 < c.len());
    // SAFETY: bounds asserted above; `c` is a distinct mutable borrow.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            c.as_mut_ptr(),
            rsc as isize,
            1,
            accumulate,
        );
    }
}

/// Cross-correlation `y[n, o] = sum_c w[o, c] * x[n, c]` over kernel taps.
pub(crate) fn conv2d<T: Scalar>(x: &Array<T>, w: &Array<T>, spec: ConvSpec) -> Result<Array<T>> {
    let [n, c, h, wd] = shape4(x.shape(), "conv2d input")?;
    let [co, ci, kh, kw] = shape4(w.shape(), "conv2d weight")?;
    if ci != c {
        return Err(Error::Shape { context: "conv2d input channels", left: x.shape().to_vec(), right: w.shape().to_vec() });
    }
    let g = geometry([c, h, wd], kh, kw, spec)?;
    let (k, p) = (g.k(), g.p());
    let mut cols = vec![T::zero(); k * p];
    let mut out = vec![T::zero(); n * co * p];
    for b in 0..n {
        im2col(&x.data()[b * c * h * wd..(b + 1) * c * h * wd], &g, &mut cols);
        gemm(co, k, p, w.data(), (k, 1), &cols, (p, 1), &mut out[b * co * p..(b + 1) * co * p], p, false);
    }
    Array::new(vec![n, co, g.ho, g.wo], out)
}

/// Gradient of `conv2d` with respect to its input; also the transposed
/// convolution. `hw` is the spatial size of the (conv) input to recover.
pub(crate) fn conv2d_bwd_data<T: Scalar>(
    gy: &Array<T>,
    w: &Array<T>,
    spec: ConvSpec,
    hw: (usize, usize),
) -> Result<Array<T>> {
    let [n, co, ho, wo] = shape4(gy.shape(), "conv2d_bwd_data grad")?;
    let [wco, ci, kh, kw] = shape4(w.shape(), "conv2d_bwd_data weight")?;
    if wco != co {
        return Err(Error::Shape { context: "conv2d_bwd_data channels", left: gy.shape().to_vec(), right: w.shape().to_vec() });
    }
    let g = geometry([ci, hw.0, hw.1], kh, kw, spec)?;
    if g.ho != ho || g.wo != wo {
        return Err(Error::Shape {
            context: "conv2d_bwd_data spatial size",
            left: gy.shape().to_vec(),
            right: vec![n, co, g.ho, g.wo],
        });
    }
    let (k, p) = (g.k(), g.p());
    let plane = ci * hw.0 * hw.1;
    let mut cols = vec![T::zero(); k * p];
    let mut out = vec![T::zero(); n * plane];
    for b in 0..n {
        // cols[K, P] = W^T[K, Co] * gy_b[Co, P]
        gemm(k, co, p, w.data(), (1, k), &gy.data()[b * co * p..(b + 1) * co * p], (p, 1), &mut cols, p, false);
        col2im(&cols, &g, &mut out[b * plane..(b + 1) * plane]);
    }
    Array::new(vec![n, ci, hw.0, hw.1], out)
}

/// Gradient of `conv2d` with respect to its weight.
pub(crate) fn conv2d_bwd_filter<T: Scalar>(
    x: &Array<T>,
    gy: &Array<T>,
    spec: ConvSpec,
    kernel: (usize, usize),
) -> Result<Array<T>> {
    let [n, c, h, wd] = shape4(x.shape(), "conv2d_bwd_filter input")?;
    let [gn, co, ho, wo] = shape4(gy.shape(), "conv2d_bwd_filter grad")?;
    let g = geometry([c, h, wd], kernel.0, kernel.1, spec)?;
    if gn != n || g.ho != ho || g.wo != wo {
        return Err(Error::Shape { context: "conv2d_bwd_filter", left: x.shape().to_vec(), right: gy.shape().to_vec() });
    }
    let (k, p) = (g.k(), g.p());
    let mut cols = vec![T::zero(); k * p];
    let mut out = vec![T::zero(); co * k];
    for b in 0..n {
        im2col(&x.data()[b * c * h * wd..(b + 1) * c * h * wd], &g, &mut cols);
        // dW[Co, K] += gy_b[Co, P] * cols^T[P, K]
        gemm(co, p, k, &gy.data()[b * co * p..(b + 1) * co * p], (p, 1), &cols, (1, p), &mut out, k, b > 0);
    }
    Array::new(vec![co, c, kernel.0, kernel.1], out)
}

pub(crate) fn matmul<T: Scalar>(a: &Array<T>, b: &Array<T>) -> Result<Array<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
        return Err(Error::Shape { context: "matmul", left: sa.to_vec(), right: sb.to_vec() });
    }
    let (m, k, n) = (sa[0], sa[1], sb[1]);
    let mut out = vec![T::zero(); m * n];
    gemm(m, k, n, a.data(), (k, 1), b.data(), (n, 1), &mut out, n, false);
    Array::new(vec![m, n], out)
}

pub(crate) fn transpose<T: Scalar>(a: &Array<T>) -> Result<Array<T>> {
    let s = a.shape();
    if s.len() != 2 {
        return Err(Error::Shape { context: "transpose", left: s.to_vec(), right: vec![0, 0] });
    }
    let (r, c) = (s[0], s[1]);
    let mut out = Vec::with_capacity(r * c);
    for j in 0..c {
        for i in 0..r {
            out.push(a.data()[i * c + j]);
        }
    }
    Array::new(vec![c, r], out)
}

/// Dimensions as `[N, C, inner]`.
pub(crate) fn nc_inner(s: &[usize]) -> Result<(usize, usize, usize)> {
    if s.len() < 2 {
        return Err(Error::Shape { context: "expected at least [N, C]", left: s.to_vec(), right: vec![0, 0] });
    }
    Ok((s[0], s[1], s[2..].iter().product()))
}

pub(crate) fn concat_channels<T: Scalar>(parts: &[&Array<T>]) -> Result<Array<T>> {
    let first = parts.first().ok_or_else(|| invalid("concat of zero tensors"))?;
    let (n, _, inner) = nc_inner(first.shape())?;
    let mut total = 0;
    for p in parts {
        let (pn, pc, pi) = nc_inner(p.shape())?;
        if pn != n || pi != inner || p.shape()[2..] != first.shape()[2..] {
            return Err(Error::Shape { context: "concat", left: first.shape().to_vec(), right: p.shape().to_vec() });
        }
        total += pc;
    }
    let mut out = Vec::with_capacity(n * total * inner);
    for b in 0..n {
        for p in parts {
            let pc = p.shape()[1];
            out.extend_from_slice(&p.data()[b * pc * inner..(b + 1) * pc * inner]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[1] = total;
    Array::new(shape, out)
}

pub(crate) fn slice_channels<T: Scalar>(x: &Array<T>, offset: usize, len: usize) -> Result<Array<T>> {
    let (n, c, inner) = nc_inner(x.shape())?;
    if offset + len > c {
        return Err(invalid("channel slice out of range"));
    }
    let mut out = Vec::with_capacity(n * len * inner);
    for b in 0..n {
        let base = (b * c + offset) * inner;
        out.extend_from_slice(&x.data()[base..base + len * inner]);
    }
    let mut shape = x.shape().to_vec();
    shape[1] = len;
    Array::new(shape, out)
}

pub(crate) fn pad_channels<T: Scalar>(x: &Array<T>, offset: usize, total: usize) -> Result<Array<T>> {
    let (n, c, inner) = nc_inner(x.shape())?;
    if offset + c > total {
        return Err(invalid("channel padding out of range"));
    }
    let mut out = vec![T::zero(); n * total * inner];
    for b in 0..n {
        let dst = (b * total + offset) * inner;
        out[dst..dst + c * inner].copy_from_slice(&x.data()[b * c * inner..(b + 1) * c * inner]);
    }
    let mut shape = x.shape().to_vec();
    shape[1] = total;
    Array::new(shape, out)
}

/// Per-sample spatial crop; `boxes[n] = (y0, x0)`.
pub(crate) fn crop<T: Scalar>(x: &Array<T>, boxes: &[(usize, usize)], h: usize, w: usize) -> Result<Array<T>> {
    let [n, c, hh, ww] = shape4(x.shape(), "crop input")?;
    if boxes.len() != n {
        return Err(invalid("one crop box per sample required"));
    }
    if boxes.iter().any(|(y0, x0)| y0 + h > hh || x0 + w > ww) {
        return Err(invalid("crop box outside the feature map"));
    }
    let mut out = Vec::with_capacity(n * c * h * w);
    for (b, (y0, x0)) in boxes.iter().enumerate() {
        for ch in 0..c {
            let plane = (b * c + ch) * hh * ww;
            for y in *y0..y0 + h {
                let row = plane + y * ww + x0;
                out.extend_from_slice(&x.data()[row..row + w]);
            }
        }
    }
    Array::new(vec![n, c, h, w], out)
}

pub(crate) fn uncrop<T: Scalar>(x: &Array<T>, boxes: &[(usize, usize)], hh: usize, ww: usize) -> Result<Array<T>> {
    let [n, c, h, w] = shape4(x.shape(), "uncrop input")?;
    if boxes.len() != n || boxes.iter().any(|(y0, x0)| y0 + h > hh || x0 + w > ww) {
        return Err(invalid("uncrop box outside the feature map"));
    }
    let mut out = vec![T::zero(); n * c * hh * ww];
    for (b, (y0, x0)) in boxes.iter().enumerate() {
        for ch in 0..c {
            let plane = (b * c + ch) * hh * ww;
            let src = (b * c + ch) * h * w;
            for y in 0..h {
                let row = plane + (y0 + y) * ww + x0;
                out[row..row + w].copy_from_slice(&x.data()[src + y * w..src + (y + 1) * w]);
            }
        }
    }
    Array::new(vec![n, c, hh, ww], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_conv(x: &Array<f64>, w: &Array<f64>, s: ConvSpec) -> Array<f64> {
        let [n, c, h, wd] = shape4(x.shape(), "").unwrap();
        let [co, _, kh, kw] = shape4(w.shape(), "").unwrap();
        let ho = s.out_dim(h, kh).unwrap();
        let wo = s.out_dim(wd, kw).unwrap();
        let mut out = vec![0.0; n * co * ho * wo];
        for b in 0..n {
            for o in 0..co {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = 0.0;
                        for ci in 0..c {
                            for ki in 0..kh {
                                for kj in 0..kw {
                                    let iy = (oy * s.stride + ki * s.dilation) as isize - s.pad as isize;
                                    let ix = (ox * s.stride + kj * s.dilation) as isize - s.pad as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                        acc += w.data()[((o * c + ci) * kh + ki) * kw + kj]
                                            * x.data()[((b * c + ci) * h + iy as usize) * wd + ix as usize];
                                    }
                                }
                            }
                        }
                        out[((b * co + o) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        Array::new(vec![n, co, ho, wo], out).unwrap()
    }

    fn ramp(shape: &[usize], k: f64) -> Array<f64> {
        let n: usize = shape.iter().product();
        Array::new(shape.to_vec(), (0..n).map(|i| (i as f64 * k).sin()).collect()).unwrap()
    }

    #[test]
    fn conv_matches_direct_correlation() {
        for spec in [ConvSpec::same(3, 1), ConvSpec::down(3), ConvSpec::same(3, 2), ConvSpec::new(1, 0, 1)] {
            let x = ramp(&[2, 3, 7, 6], 0.37);
            let w = ramp(&[4, 3, 3, 3], 1.3);
            let a = conv2d(&x, &w, spec).unwrap();
            let b = direct_conv(&x, &w, spec);
            assert_eq!(a.shape(), b.shape());
            for (p, q) in a.data().iter().zip(b.data()) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_kernel() {
        let x = ramp(&[1, 1, 4, 5], 0.9);
        let w = Array::new(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        assert_eq!(conv2d(&x, &w, ConvSpec::new(1, 0, 1)).unwrap(), x);
    }

    #[test]
    fn dilated_kernel_on_delta_gives_footprint() {
        let mut x = Array::<f64>::zeros(&[1, 1, 9, 9]);
        x.data_mut()[4 * 9 + 4] = 1.0;
        let w = ramp(&[1, 1, 3, 3], 0.7);
        let y = conv2d(&x, &w, ConvSpec::same(3, 2)).unwrap();
        for oy in 0..9 {
            for ox in 0..9 {
                // y[o] = sum_k w[k] x[o + 2(k-1)], so the delta at 4 lands on o = 4 - 2(k-1).
                let (dy, dx) = (4 - oy as isize, 4 - ox as isize);
                let expect = if dy % 2 == 0 && dx % 2 == 0 && dy.abs() <= 2 && dx.abs() <= 2 {
                    let (ki, kj) = ((dy / 2 + 1) as usize, (dx / 2 + 1) as usize);
                    w.data()[ki * 3 + kj]
                } else {
                    0.0
                };
                assert_eq!(y.data()[oy * 9 + ox], expect, "at {oy},{ox}");
            }
        }
    }

    #[test]
    fn transposed_conv_doubles_spatial_size() {
        let g = ramp(&[2, 4, 5, 3], 0.2);
        let w = ramp(&[4, 6, 3, 3], 0.5);
        let up = conv2d_bwd_data(&g, &w, ConvSpec::down(3), (10, 6)).unwrap();
        assert_eq!(up.shape(), &[2, 6, 10, 6]);
        assert!(conv2d_bwd_data(&g, &w, ConvSpec::down(3), (12, 6)).is_err());
    }

    #[test]
    fn adjoint_identities() {
        // <conv(x, w), g> == <x, bwd_data(g, w)> == <w, bwd_filter(x, g)>
        let spec = ConvSpec::new(2, 1, 2);
        let x = ramp(&[2, 3, 9, 8], 0.31);
        let w = ramp(&[5, 3, 3, 3], 0.77);
        let y = conv2d(&x, &w, spec).unwrap();
        let g = ramp(y.shape(), 0.13);
        let dot = |a: &Array<f64>, b: &Array<f64>| a.data().iter().zip(b.data()).map(|(p, q)| p * q).sum::<f64>();
        let lhs = dot(&y, &g);
        let dx = conv2d_bwd_data(&g, &w, spec, (9, 8)).unwrap();
        let dw = conv2d_bwd_filter(&x, &g, spec, (3, 3)).unwrap();
        assert!((lhs - dot(&x, &dx)).abs() < 1e-9);
        assert!((lhs - dot(&w, &dw)).abs() < 1e-9);
    }
}
