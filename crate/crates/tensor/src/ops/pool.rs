use crate::element::Element;
use crate::error::{invalid, Result};
use crate::ops::ensure_rank;
use crate::profile;
use crate::tensor::Tensor;

/// Zero-padded box sum along one axis of a `rows × cols` plane, window `2r+1`.
fn box_sum_rows<T: Element>(src: &[T], dst: &mut [T], rows: usize, cols: usize, r: usize) {
    for y in 0..rows {
        let row = &src[y * cols..(y + 1) * cols];
        let out = &mut dst[y * cols..(y + 1) * cols];
        for (x, o) in out.iter_mut().enumerate() {
            let lo = x.saturating_sub(r);
            let hi = (x + r + 1).min(cols);
            *o = row[lo..hi].iter().copied().sum();
        }
    }
}

fn box_sum_cols<T: Element>(src: &[T], dst: &mut [T], rows: usize, cols: usize, r: usize) {
    dst.fill(T::zero());
    for y in 0..rows {
        let lo = y.saturating_sub(r);
        let hi = (y + r + 1).min(rows);
        let out = &mut dst[y * cols..(y + 1) * cols];
        for yy in lo..hi {
            for (o, &v) in out.iter_mut().zip(&src[yy * cols..(yy + 1) * cols]) {
                *o += v;
            }
        }
    }
}

/// `k×k` mean with stride 1 and zero padding, always dividing by `k²`.
fn box_mean_planes<T: Element>(x: &[T], planes: usize, h: usize, w: usize, k: usize) -> Vec<T> {
    let r = k / 2;
    let scale = T::one() / T::of((k * k) as f64);
    let mut tmp = vec![T::zero(); h * w];
    let mut out = vec![T::zero(); x.len()];
    for p in 0..planes {
        let range = p * h * w..(p + 1) * h * w;
        box_sum_rows(&x[range.clone()], &mut tmp, h, w, r);
        box_sum_cols(&tmp, &mut out[range.clone()], h, w, r);
        out[range].iter_mut().for_each(|v| *v *= scale);
    }
    out
}

/// Pooling window `[start, end)` for output index `i` of an adaptive pool.
fn adaptive_window(i: usize, input: usize, output: usize) -> (usize, usize) {
    let start = i * input / output;
    let end = ((i + 1) * input).div_ceil(output);
    (start, end)
}

impl<T: Element> Tensor<T> {
    /// Odd `k×k` average pool, stride 1, zero padding `k/2`, divisor `k²`
    /// (padding counts toward the mean).
    pub fn avg_pool_same(&self, k: usize) -> Result<Tensor<T>> {
        ensure_rank("avg_pool_same", self, 4)?;
        if k % 2 == 0 {
            return Err(invalid("avg_pool_same", format!("window {k} must be odd")));
        }
        let [n, c, h, w] = self.dims4()?;
        let out = box_mean_planes(self.data(), n * c, h, w, k);
        profile::record(out.len() * k * k);
        // A zero-padded symmetric box filter is its own adjoint.
        Ok(Tensor::from_op(out, self.shape().to_vec(), "avg_pool_same", &[self], move |g| {
            vec![Some(box_mean_planes(g, n * c, h, w, k))]
        }))
    }

    /// Adaptive average pool to `(oh, ow)` using the usual floor/ceil window bounds.
    pub fn adaptive_avg_pool2d(&self, oh: usize, ow: usize) -> Result<Tensor<T>> {
        ensure_rank("adaptive_avg_pool2d", self, 4)?;
        let [n, c, h, w] = self.dims4()?;
        if oh == 0 || ow == 0 || h == 0 || w == 0 {
            return Err(invalid("adaptive_avg_pool2d", format!("cannot pool {h}x{w} to {oh}x{ow}")));
        }
        let windows: Vec<(usize, usize, usize, usize)> = (0..oh)
            .flat_map(|oy| (0..ow).map(move |ox| (oy, ox)))
            .map(|(oy, ox)| {
                let (y0, y1) = adaptive_window(oy, h, oh);
                let (x0, x1) = adaptive_window(ox, w, ow);
                (y0, y1, x0, x1)
            })
            .collect();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut macs = 0;
        for plane in self.data().chunks(h * w) {
            for &(y0, y1, x0, x1) in &windows {
                let mut acc = T::zero();
                for y in y0..y1 {
                    acc += plane[y * w + x0..y * w + x1].iter().copied().sum();
                }
                let count = (y1 - y0) * (x1 - x0);
                macs += count;
                out.push(acc / T::of(count as f64));
            }
        }
        profile::record(macs);
        Ok(Tensor::from_op(out, vec![n, c, oh, ow], "adaptive_avg_pool2d", &[self], move |g| {
            let mut d = vec![T::zero(); n * c * h * w];
            for (p, plane) in d.chunks_mut(h * w).enumerate() {
                for (j, &(y0, y1, x0, x1)) in windows.iter().enumerate() {
                    let share = g[p * oh * ow + j] / T::of(((y1 - y0) * (x1 - x0)) as f64);
                    for y in y0..y1 {
                        plane[y * w + x0..y * w + x1].iter_mut().for_each(|v| *v += share);
                    }
                }
            }
            vec![Some(d)]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_mean_counts_padding() {
        let x = Tensor::<f64>::full(&[1, 1, 3, 3], 9.0);
        let y = x.avg_pool_same(3).unwrap();
        assert_eq!(y.data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn adaptive_windows_overlap_like_reference() {
        assert_eq!(adaptive_window(0, 9, 5), (0, 2));
        assert_eq!(adaptive_window(1, 9, 5), (1, 4));
        assert_eq!(adaptive_window(4, 9, 5), (7, 9));
        let x = Tensor::<f64>::from_vec((0..9).map(f64::from).collect(), &[1, 1, 1, 9]).unwrap();
        let y = x.adaptive_avg_pool2d(1, 5).unwrap();
        assert_eq!(y.data(), &[0.5, 2.0, 4.0, 6.0, 7.5]);
    }

    #[test]
    fn adaptive_identity_when_sizes_match() {
        let x = Tensor::<f64>::from_vec((0..6).map(f64::from).collect(), &[1, 1, 2, 3]).unwrap();
        assert_eq!(x.adaptive_avg_pool2d(2, 3).unwrap().data(), x.data());
    }
}
