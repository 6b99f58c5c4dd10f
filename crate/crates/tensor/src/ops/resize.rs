//! Bilinear resampling with half-pixel centres (`align_corners = false`).

use crate::element::Element;
use crate::error::{invalid, Result};
use crate::ops::ensure_rank;
use crate::profile;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
struct Tap {
    i0: usize,
    i1: usize,
    w0: f64,
    w1: f64,
}

fn axis_taps(input: usize, output: usize) -> Vec<Tap> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            let w1 = src - i0 as f64;
            Tap { i0, i1, w0: 1.0 - w1, w1 }
        })
        .collect()
}

struct Plan<T> {
    ys: Vec<(usize, usize, T, T)>,
    xs: Vec<(usize, usize, T, T)>,
}

impl<T: Element> Plan<T> {
    fn new(h: usize, w: usize, oh: usize, ow: usize) -> Self {
        let cast = |t: Tap| (t.i0, t.i1, T::of(t.w0), T::of(t.w1));
        Self {
            ys: axis_taps(h, oh).into_iter().map(cast).collect(),
            xs: axis_taps(w, ow).into_iter().map(cast).collect(),
        }
    }

    fn forward(&self, src: &[T], w: usize, dst: &mut [T]) {
        let ow = self.xs.len();
        for (oy, &(y0, y1, wy0, wy1)) in self.ys.iter().enumerate() {
            let (r0, r1) = (&src[y0 * w..(y0 + 1) * w], &src[y1 * w..(y1 + 1) * w]);
            for (ox, &(x0, x1, wx0, wx1)) in self.xs.iter().enumerate() {
                dst[oy * ow + ox] = wy0 * (wx0 * r0[x0] + wx1 * r0[x1]) + wy1 * (wx0 * r1[x0] + wx1 * r1[x1]);
            }
        }
    }

    fn backward(&self, g: &[T], w: usize, dsrc: &mut [T]) {
        let ow = self.xs.len();
        for (oy, &(y0, y1, wy0, wy1)) in self.ys.iter().enumerate() {
            for (ox, &(x0, x1, wx0, wx1)) in self.xs.iter().enumerate() {
                let gv = g[oy * ow + ox];
                dsrc[y0 * w + x0] += gv * wy0 * wx0;
                dsrc[y0 * w + x1] += gv * wy0 * wx1;
                dsrc[y1 * w + x0] += gv * wy1 * wx0;
                dsrc[y1 * w + x1] += gv * wy1 * wx1;
            }
        }
    }
}

/// Resamples one `h×w` plane to `oh×ow` without autodiff.
pub fn resize_bilinear_plane<T: Element>(src: &[T], h: usize, w: usize, oh: usize, ow: usize) -> Vec<T> {
    assert_eq!(src.len(), h * w, "plane length does not match {h}x{w}");
    let mut out = vec![T::zero(); oh * ow];
    Plan::new(h, w, oh, ow).forward(src, w, &mut out);
    out
}

impl<T: Element> Tensor<T> {
    /// Bilinear resize of the two trailing axes of an NCHW tensor.
    pub fn resize_bilinear(&self, oh: usize, ow: usize) -> Result<Tensor<T>> {
        ensure_rank("resize_bilinear", self, 4)?;
        let [n, c, h, w] = self.dims4()?;
        if h == 0 || w == 0 || oh == 0 || ow == 0 {
            return Err(invalid("resize_bilinear", format!("cannot resize {h}x{w} to {oh}x{ow}")));
        }
        let plan = Plan::<T>::new(h, w, oh, ow);
        let mut out = vec![T::zero(); n * c * oh * ow];
        for (src, dst) in self.data().chunks(h * w).zip(out.chunks_mut(oh * ow)) {
            plan.forward(src, w, dst);
        }
        profile::record(out.len() * 4);
        Ok(Tensor::from_op(out, vec![n, c, oh, ow], "resize_bilinear", &[self], move |g| {
            let mut d = vec![T::zero(); n * c * h * w];
            for (gp, dp) in g.chunks(oh * ow).zip(d.chunks_mut(h * w)) {
                plan.backward(gp, w, dp);
            }
            vec![Some(d)]
        }))
    }

    /// Integer-factor bilinear upsampling.
    pub fn upsample_bilinear(&self, factor: usize) -> Result<Tensor<T>> {
        let [_, _, h, w] = self.dims4()?;
        self.resize_bilinear(h * factor, w * factor)
    }
}
