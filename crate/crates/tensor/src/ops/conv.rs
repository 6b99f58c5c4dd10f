//! 2-D convolution (cross-correlation) over NCHW tensors.
//!
//! Three kernels back the public ops:
//! * depthwise planes (one filter per channel), direct loops;
//! * everything else via im2col + gemm, with 1×1/stride-1 convolutions skipping im2col;
//! * per-sample dynamic depthwise convolution, which reuses the depthwise plane loops
//!   with a different kernel per (sample, channel).

use crate::element::Element;
use crate::error::{invalid, Result, TensorError};
use crate::ops::{ensure_rank, wants};
use crate::profile;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dOptions {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub groups: usize,
}

impl Default for Conv2dOptions {
    fn default() -> Self {
        Self { stride: 1, padding: 0, dilation: 1, groups: 1 }
    }
}

impl Conv2dOptions {
    pub fn new(stride: usize, padding: usize, dilation: usize, groups: usize) -> Self {
        Self { stride, padding, dilation, groups }
    }

    /// Output extent along one axis, `None` when the kernel does not fit.
    pub fn output_size(&self, input: usize, kernel: usize) -> Option<usize> {
        let span = self.dilation * (kernel.checked_sub(1)?) + 1;
        let padded = input + 2 * self.padding;
        if self.stride == 0 || padded < span {
            return None;
        }
        Some((padded - span) / self.stride + 1)
    }
}

#[derive(Clone, Copy, Debug)]
struct Geom {
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
    dil: usize,
}

impl Geom {
    fn new(h: usize, w: usize, kh: usize, kw: usize, opts: &Conv2dOptions) -> Option<Self> {
        Some(Self {
            h,
            w,
            kh,
            kw,
            oh: opts.output_size(h, kh)?,
            ow: opts.output_size(w, kw)?,
            stride: opts.stride,
            pad: opts.padding,
            dil: opts.dilation,
        })
    }

    fn in_plane(&self) -> usize {
        self.h * self.w
    }

    fn out_plane(&self) -> usize {
        self.oh * self.ow
    }

    /// Input offset of tap `k` relative to `o * stride`.
    fn offset(&self, k: usize) -> isize {
        (k * self.dil) as isize - self.pad as isize
    }

    /// Output positions `lo..hi` whose tap with offset `off` lands inside `0..len`.
    fn valid_range(&self, off: isize, len: usize, out_len: usize) -> (usize, usize) {
        let s = self.stride as isize;
        let lo = if off >= 0 { 0 } else { (-off + s - 1) / s };
        let hi_incl = (len as isize - 1 - off).div_euclid(s);
        let hi = (hi_incl + 1).clamp(0, out_len as isize);
        let lo = lo.min(hi);
        (lo as usize, hi as usize)
    }

    fn input_row(&self, oy: usize, ky: usize) -> Option<usize> {
        let iy = (oy * self.stride) as isize + self.offset(ky);
        (iy >= 0 && (iy as usize) < self.h).then_some(iy as usize)
    }
}

/// `out += x ⋆ k` for one channel plane.
fn dw_plane_forward<T: Element>(x: &[T], k: &[T], out: &mut [T], g: &Geom) {
    for kx in 0..g.kw {
        let off = g.offset(kx);
        let (lo, hi) = g.valid_range(off, g.w, g.ow);
        if lo >= hi {
            continue;
        }
        for ky in 0..g.kh {
            let wv = k[ky * g.kw + kx];
            for oy in 0..g.oh {
                let Some(iy) = g.input_row(oy, ky) else { continue };
                let xrow = &x[iy * g.w..(iy + 1) * g.w];
                let orow = &mut out[oy * g.ow + lo..oy * g.ow + hi];
                if g.stride == 1 {
                    let start = (lo as isize + off) as usize;
                    for (o, &xv) in orow.iter_mut().zip(&xrow[start..start + (hi - lo)]) {
                        *o += wv * xv;
                    }
                } else {
                    for (j, o) in orow.iter_mut().enumerate() {
                        let ix = (((lo + j) * g.stride) as isize + off) as usize;
                        *o += wv * xrow[ix];
                    }
                }
            }
        }
    }
}

/// Accumulates the input and/or kernel gradient of one depthwise plane.
fn dw_plane_backward<T: Element>(
    x: &[T],
    k: &[T],
    dy: &[T],
    mut dx: Option<&mut [T]>,
    mut dk: Option<&mut [T]>,
    g: &Geom,
) {
    for kx in 0..g.kw {
        let off = g.offset(kx);
        let (lo, hi) = g.valid_range(off, g.w, g.ow);
        if lo >= hi {
            continue;
        }
        for ky in 0..g.kh {
            let tap = ky * g.kw + kx;
            let wv = k[tap];
            let mut acc = T::zero();
            for oy in 0..g.oh {
                let Some(iy) = g.input_row(oy, ky) else { continue };
                let dyrow = &dy[oy * g.ow + lo..oy * g.ow + hi];
                for (j, &d) in dyrow.iter().enumerate() {
                    let ix = (((lo + j) * g.stride) as isize + off) as usize;
                    let idx = iy * g.w + ix;
                    if let Some(dx) = dx.as_deref_mut() {
                        dx[idx] += wv * d;
                    }
                    acc += d * x[idx];
                }
            }
            if let Some(dk) = dk.as_deref_mut() {
                dk[tap] += acc;
            }
        }
    }
}

/// Unfolds `cin` input planes into a `(cin·kh·kw) × (oh·ow)` matrix.
fn im2col<T: Element>(x: &[T], cin: usize, g: &Geom, cols: &mut [T]) {
    let ohw = g.out_plane();
    cols.fill(T::zero());
    for c in 0..cin {
        let plane = &x[c * g.in_plane()..(c + 1) * g.in_plane()];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * ohw..(row + 1) * ohw];
                let off = g.offset(kx);
                let (lo, hi) = g.valid_range(off, g.w, g.ow);
                for oy in 0..g.oh {
                    let Some(iy) = g.input_row(oy, ky) else { continue };
                    for ox in lo..hi {
                        let ix = ((ox * g.stride) as isize + off) as usize;
                        dst[oy * g.ow + ox] = plane[iy * g.w + ix];
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto input planes.
fn col2im<T: Element>(cols: &[T], cin: usize, g: &Geom, dx: &mut [T]) {
    let ohw = g.out_plane();
    for c in 0..cin {
        let plane = &mut dx[c * g.in_plane()..(c + 1) * g.in_plane()];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &cols[row * ohw..(row + 1) * ohw];
                let off = g.offset(kx);
                let (lo, hi) = g.valid_range(off, g.w, g.ow);
                for oy in 0..g.oh {
                    let Some(iy) = g.input_row(oy, ky) else { continue };
                    for ox in lo..hi {
                        let ix = ((ox * g.stride) as isize + off) as usize;
                        plane[iy * g.w + ix] += src[oy * g.ow + ox];
                    }
                }
            }
        }
    }
}

struct ConvShape {
    n: usize,
    cin: usize,
    cout: usize,
    groups: usize,
    geom: Geom,
}

impl ConvShape {
    fn cin_g(&self) -> usize {
        self.cin / self.groups
    }
    fn cout_g(&self) -> usize {
        self.cout / self.groups
    }
    fn k_len(&self) -> usize {
        self.cin_g() * self.geom.kh * self.geom.kw
    }
    fn is_depthwise(&self) -> bool {
        self.groups == self.cin && self.cout == self.cin
    }
    fn is_pointwise(&self) -> bool {
        let g = &self.geom;
        g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0
    }
}

fn conv_forward<T: Element>(x: &[T], w: &[T], s: &ConvShape) -> Vec<T> {
    let g = &s.geom;
    let (ihw, ohw) = (g.in_plane(), g.out_plane());
    let mut out = vec![T::zero(); s.n * s.cout * ohw];
    if s.is_depthwise() {
        let klen = g.kh * g.kw;
        for n in 0..s.n {
            for c in 0..s.cin {
                let p = n * s.cin + c;
                dw_plane_forward(
                    &x[p * ihw..(p + 1) * ihw],
                    &w[c * klen..(c + 1) * klen],
                    &mut out[p * ohw..(p + 1) * ohw],
                    g,
                );
            }
        }
        return out;
    }
    let (cin_g, cout_g, k) = (s.cin_g(), s.cout_g(), s.k_len());
    let mut cols = if s.is_pointwise() { Vec::new() } else { vec![T::zero(); k * ohw] };
    for n in 0..s.n {
        for grp in 0..s.groups {
            let xs = &x[(n * s.cin + grp * cin_g) * ihw..(n * s.cin + (grp + 1) * cin_g) * ihw];
            let rhs: &[T] = if s.is_pointwise() {
                xs
            } else {
                im2col(xs, cin_g, g, &mut cols);
                &cols
            };
            let ws = &w[grp * cout_g * k..(grp + 1) * cout_g * k];
            let os = &mut out[(n * s.cout + grp * cout_g) * ohw..(n * s.cout + (grp + 1) * cout_g) * ohw];
            T::gemm(cout_g, k, ohw, T::one(), ws, (k as isize, 1), rhs, (ohw as isize, 1), T::zero(), os, (ohw as isize, 1));
        }
    }
    out
}

fn conv_backward<T: Element>(x: &[T], w: &[T], dy: &[T], s: &ConvShape, want_x: bool, want_w: bool) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let g = &s.geom;
    let (ihw, ohw) = (g.in_plane(), g.out_plane());
    let mut dx = want_x.then(|| vec![T::zero(); x.len()]);
    let mut dw = want_w.then(|| vec![T::zero(); w.len()]);
    if s.is_depthwise() {
        let klen = g.kh * g.kw;
        for n in 0..s.n {
            for c in 0..s.cin {
                let p = n * s.cin + c;
                dw_plane_backward(
                    &x[p * ihw..(p + 1) * ihw],
                    &w[c * klen..(c + 1) * klen],
                    &dy[p * ohw..(p + 1) * ohw],
                    dx.as_mut().map(|d| &mut d[p * ihw..(p + 1) * ihw]),
                    dw.as_mut().map(|d| &mut d[c * klen..(c + 1) * klen]),
                    g,
                );
            }
        }
        return (dx, dw);
    }
    let (cin_g, cout_g, k) = (s.cin_g(), s.cout_g(), s.k_len());
    let pointwise = s.is_pointwise();
    let mut cols = if pointwise { Vec::new() } else { vec![T::zero(); k * ohw] };
    let mut dcols = if pointwise { Vec::new() } else { vec![T::zero(); k * ohw] };
    for n in 0..s.n {
        for grp in 0..s.groups {
            let x_range = (n * s.cin + grp * cin_g) * ihw..(n * s.cin + (grp + 1) * cin_g) * ihw;
            let dys = &dy[(n * s.cout + grp * cout_g) * ohw..(n * s.cout + (grp + 1) * cout_g) * ohw];
            let w_range = grp * cout_g * k..(grp + 1) * cout_g * k;
            if let Some(dw) = dw.as_mut() {
                let rhs: &[T] = if pointwise {
                    &x[x_range.clone()]
                } else {
                    im2col(&x[x_range.clone()], cin_g, g, &mut cols);
                    &cols
                };
                // dW_g += dY_g · colsᵀ
                T::gemm(cout_g, ohw, k, T::one(), dys, (ohw as isize, 1), rhs, (1, ohw as isize), T::one(), &mut dw[w_range.clone()], (k as isize, 1));
            }
            if let Some(dx) = dx.as_mut() {
                let ws = &w[w_range];
                if pointwise {
                    T::gemm(k, cout_g, ohw, T::one(), ws, (1, k as isize), dys, (ohw as isize, 1), T::one(), &mut dx[x_range], (ohw as isize, 1));
                } else {
                    T::gemm(k, cout_g, ohw, T::one(), ws, (1, k as isize), dys, (ohw as isize, 1), T::zero(), &mut dcols, (ohw as isize, 1));
                    col2im(&dcols, cin_g, g, &mut dx[x_range]);
                }
            }
        }
    }
    (dx, dw)
}

impl<T: Element> Tensor<T> {
    /// Grouped, strided, dilated 2-D cross-correlation.
    ///
    /// `self`: `(N, C_in, H, W)`; `weight`: `(C_out, C_in / groups, kh, kw)`; `bias`: `(C_out)`.
    pub fn conv2d(&self, weight: &Tensor<T>, bias: Option<&Tensor<T>>, opts: Conv2dOptions) -> Result<Tensor<T>> {
        ensure_rank("conv2d", self, 4)?;
        ensure_rank("conv2d", weight, 4)?;
        let [n, cin, h, w] = self.dims4()?;
        let [cout, cin_g, kh, kw] = weight.dims4()?;
        let groups = opts.groups;
        if groups == 0 || cin % groups != 0 || cout % groups != 0 || cin / groups != cin_g {
            return Err(TensorError::ShapeMismatch { op: "conv2d", lhs: self.shape().to_vec(), rhs: weight.shape().to_vec() });
        }
        if let Some(b) = bias {
            if b.shape() != [cout] {
                return Err(TensorError::ShapeMismatch { op: "conv2d bias", lhs: vec![cout], rhs: b.shape().to_vec() });
            }
        }
        let geom = Geom::new(h, w, kh, kw, &opts)
            .ok_or_else(|| invalid("conv2d", format!("kernel {kh}x{kw} with {opts:?} does not fit input {h}x{w}")))?;
        let shape = ConvShape { n, cin, cout, groups, geom };
        let ohw = geom.out_plane();
        let mut out = conv_forward(self.data(), weight.data(), &shape);
        profile::record(n * cout * ohw * shape.k_len());
        if let Some(b) = bias {
            for (i, chunk) in out.chunks_mut(ohw).enumerate() {
                let bv = b.data()[i % cout];
                chunk.iter_mut().for_each(|v| *v += bv);
            }
            profile::record(n * cout * ohw);
        }

        let (xd, wd) = (self.data_rc(), weight.data_rc());
        let (wx, ww, wb) = (wants(self), wants(weight), bias.is_some_and(wants));
        let has_bias = bias.is_some();
        let mut inputs = vec![self, weight];
        inputs.extend(bias);
        Ok(Tensor::from_op(out, vec![n, cout, geom.oh, geom.ow], "conv2d", &inputs, move |dy| {
            let (dx, dw) = conv_backward(&xd, &wd, dy, &shape, wx, ww);
            let db = wb.then(|| {
                let mut db = vec![T::zero(); shape.cout];
                for (i, chunk) in dy.chunks(ohw).enumerate() {
                    db[i % shape.cout] += chunk.iter().copied().sum();
                }
                db
            });
            let mut grads = vec![dx, dw];
            if has_bias {
                grads.push(db);
            }
            grads
        }))
    }

    /// Per-sample dynamic depthwise convolution.
    ///
    /// `self`: `(N, C, H, W)`; `kernels`: `(N, C, kh, kw)`, one filter per (sample, channel).
    /// Stride 1, no bias; output spatial size follows `padding` and `dilation`.
    pub fn dynamic_depthwise_conv2d(&self, kernels: &Tensor<T>, padding: usize, dilation: usize) -> Result<Tensor<T>> {
        ensure_rank("dynamic_depthwise_conv2d", self, 4)?;
        ensure_rank("dynamic_depthwise_conv2d", kernels, 4)?;
        let [n, c, h, w] = self.dims4()?;
        let [kn, kc, kh, kw] = kernels.dims4()?;
        if kn != n || kc != c {
            return Err(TensorError::ShapeMismatch {
                op: "dynamic_depthwise_conv2d",
                lhs: self.shape().to_vec(),
                rhs: kernels.shape().to_vec(),
            });
        }
        let opts = Conv2dOptions { stride: 1, padding, dilation, groups: c };
        let geom = Geom::new(h, w, kh, kw, &opts)
            .ok_or_else(|| invalid("dynamic_depthwise_conv2d", format!("kernel {kh}x{kw} does not fit input {h}x{w}")))?;
        let (ihw, ohw, klen) = (geom.in_plane(), geom.out_plane(), kh * kw);
        let mut out = vec![T::zero(); n * c * ohw];
        for p in 0..n * c {
            dw_plane_forward(
                &self.data()[p * ihw..(p + 1) * ihw],
                &kernels.data()[p * klen..(p + 1) * klen],
                &mut out[p * ohw..(p + 1) * ohw],
                &geom,
            );
        }
        profile::record(n * c * ohw * klen);
        let (xd, kd) = (self.data_rc(), kernels.data_rc());
        let (wx, wk) = (wants(self), wants(kernels));
        Ok(Tensor::from_op(out, vec![n, c, geom.oh, geom.ow], "dynamic_depthwise_conv2d", &[self, kernels], move |dy| {
            let mut dx = wx.then(|| vec![T::zero(); xd.len()]);
            let mut dk = wk.then(|| vec![T::zero(); kd.len()]);
            for p in 0..n * c {
                dw_plane_backward(
                    &xd[p * ihw..(p + 1) * ihw],
                    &kd[p * klen..(p + 1) * klen],
                    &dy[p * ohw..(p + 1) * ohw],
                    dx.as_mut().map(|d| &mut d[p * ihw..(p + 1) * ihw]),
                    dk.as_mut().map(|d| &mut d[p * klen..(p + 1) * klen]),
                    &geom,
                );
            }
            vec![dx, dk]
        }))
    }
}
