//! Per-channel batch normalization over NCHW tensors.

use std::rc::Rc;

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::ops::{ensure_rank, wants};
use crate::profile;
use crate::tensor::Tensor;

/// Batch statistics produced by a training-mode forward pass.
#[derive(Clone, Debug)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Unbiased (`M - 1`) variance, as tracked by running estimates.
    pub var_unbiased: Vec<T>,
}

fn check_affine<T: Element>(x: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>) -> Result<[usize; 4]> {
    ensure_rank("batch_norm", x, 4)?;
    let dims = x.dims4()?;
    for p in [gamma, beta] {
        if p.shape() != [dims[1]] {
            return Err(TensorError::ShapeMismatch { op: "batch_norm", lhs: x.shape().to_vec(), rhs: p.shape().to_vec() });
        }
    }
    Ok(dims)
}

/// Applies `gamma * (x - mean) * inv_std + beta` and returns it with the normalized input.
fn normalize<T: Element>(x: &[T], dims: [usize; 4], mean: &[T], inv_std: &[T], gamma: &[T], beta: &[T]) -> (Vec<T>, Vec<T>) {
    let [_, c, h, w] = dims;
    let hw = h * w;
    let mut xhat = vec![T::zero(); x.len()];
    let mut out = vec![T::zero(); x.len()];
    for (p, (xp, (hp, op))) in x.chunks(hw).zip(xhat.chunks_mut(hw).zip(out.chunks_mut(hw))).enumerate() {
        let ch = p % c;
        for ((&xv, hv), ov) in xp.iter().zip(hp.iter_mut()).zip(op.iter_mut()) {
            *hv = (xv - mean[ch]) * inv_std[ch];
            *ov = gamma[ch] * *hv + beta[ch];
        }
    }
    (out, xhat)
}

/// Per-channel sums of `g` and `g * xhat`.
fn channel_sums<T: Element>(g: &[T], xhat: &[T], c: usize, hw: usize) -> (Vec<T>, Vec<T>) {
    let mut sg = vec![T::zero(); c];
    let mut sgx = vec![T::zero(); c];
    for (p, (gp, hp)) in g.chunks(hw).zip(xhat.chunks(hw)).enumerate() {
        let ch = p % c;
        for (&gv, &hv) in gp.iter().zip(hp) {
            sg[ch] += gv;
            sgx[ch] += gv * hv;
        }
    }
    (sg, sgx)
}

impl<T: Element> Tensor<T> {
    /// Normalizes with the statistics of the current batch.
    pub fn batch_norm_train(&self, gamma: &Tensor<T>, beta: &Tensor<T>, eps: T) -> Result<(Tensor<T>, BatchStats<T>)> {
        let dims @ [n, c, h, w] = check_affine(self, gamma, beta)?;
        let hw = h * w;
        let count = n * hw;
        let x = self.data();
        let mut mean = vec![T::zero(); c];
        for (p, xp) in x.chunks(hw).enumerate() {
            mean[p % c] += xp.iter().copied().sum();
        }
        let m = T::of(count as f64);
        mean.iter_mut().for_each(|v| *v /= m);
        let mut sq = vec![T::zero(); c];
        for (p, xp) in x.chunks(hw).enumerate() {
            let mu = mean[p % c];
            sq[p % c] += xp.iter().map(|&v| (v - mu) * (v - mu)).sum();
        }
        let var_biased: Vec<T> = sq.iter().map(|&s| s / m).collect();
        let var_unbiased: Vec<T> = sq.iter().map(|&s| s / T::of(count.saturating_sub(1).max(1) as f64)).collect();
        let inv_std: Vec<T> = var_biased.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let (out, xhat) = normalize(x, dims, &mean, &inv_std, gamma.data(), beta.data());
        profile::record(out.len());

        let gd = gamma.data_rc();
        let xhat = Rc::new(xhat);
        let (wx, wg, wb) = (wants(self), wants(gamma), wants(beta));
        let y = Tensor::from_op(out, self.shape().to_vec(), "batch_norm_train", &[self, gamma, beta], move |g| {
            let (sg, sgx) = channel_sums(g, &xhat, c, hw);
            let dx = wx.then(|| {
                let mut dx = vec![T::zero(); g.len()];
                for (p, (dp, (gp, hp))) in dx.chunks_mut(hw).zip(g.chunks(hw).zip(xhat.chunks(hw))).enumerate() {
                    let ch = p % c;
                    let k = gd[ch] * inv_std[ch] / m;
                    for ((d, &gv), &hv) in dp.iter_mut().zip(gp).zip(hp) {
                        *d = k * (m * gv - sg[ch] - hv * sgx[ch]);
                    }
                }
                dx
            });
            vec![dx, wg.then(|| sgx.clone()), wb.then(|| sg.clone())]
        });
        Ok((y, BatchStats { mean, var_unbiased }))
    }

    /// Normalizes with fixed (running) statistics.
    pub fn batch_norm_eval(&self, gamma: &Tensor<T>, beta: &Tensor<T>, mean: &[T], var: &[T], eps: T) -> Result<Tensor<T>> {
        let dims @ [_, c, h, w] = check_affine(self, gamma, beta)?;
        if mean.len() != c || var.len() != c {
            return Err(TensorError::ShapeMismatch { op: "batch_norm_eval", lhs: vec![c], rhs: vec![mean.len(), var.len()] });
        }
        let hw = h * w;
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let (out, xhat) = normalize(self.data(), dims, mean, &inv_std, gamma.data(), beta.data());
        profile::record(out.len());

        let gd = gamma.data_rc();
        let xhat = Rc::new(xhat);
        let (wx, wg, wb) = (wants(self), wants(gamma), wants(beta));
        Ok(Tensor::from_op(out, self.shape().to_vec(), "batch_norm_eval", &[self, gamma, beta], move |g| {
            let (sg, sgx) = channel_sums(g, &xhat, c, hw);
            let dx = wx.then(|| {
                let mut dx = g.to_vec();
                for (p, dp) in dx.chunks_mut(hw).enumerate() {
                    let k = gd[p % c] * inv_std[p % c];
                    dp.iter_mut().for_each(|v| *v *= k);
                }
                dx
            });
            vec![dx, wg.then(|| sgx.clone()), wb.then(|| sg.clone())]
        }))
    }
}
