//! Training objective: per-scale BCE + IoU on the three saliency heads, plus the
//! edge self-alignment term between the two edge maps.

use seanet_tensor::{no_grad, resize_bilinear_plane, Element, Tensor};

use crate::decoder::SaliencyOutputs;
use crate::error::{Error, Result};

/// Mean binary cross-entropy computed from logits.
pub fn bce_loss<T: Element>(logits: &Tensor<T>, gt: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(logits.bce_with_logits(gt)?)
}

/// `1 − (ΣSG + ε) / (ΣS + ΣG − ΣSG + ε)` per sample, averaged over the batch.
pub fn iou_loss<T: Element>(s: &Tensor<T>, gt: &Tensor<T>, eps: f64) -> Result<Tensor<T>> {
    if s.shape() != gt.shape() {
        return Err(Error::Shape(format!("iou loss: prediction {:?} vs target {:?}", s.shape(), gt.shape())));
    }
    let eps = T::of(eps);
    let inter = s.mul(gt)?.sum_per_sample()?;
    let union = s.sum_per_sample()?.add(&gt.sum_per_sample()?)?.sub(&inter)?;
    let iou = inter.add_scalar(eps).div(&union.add_scalar(eps))?;
    Ok(iou.rsub_scalar(T::one()).mean())
}

/// `mean((PReLU(e₁) − PReLU(e₂))²)` with one slope shared by both maps.
pub fn edge_align_loss<T: Element>(e1: &Tensor<T>, e2: &Tensor<T>, slope: &Tensor<T>) -> Result<Tensor<T>> {
    if e1.shape() != e2.shape() {
        return Err(Error::Shape(format!("edge alignment: {:?} vs {:?}", e1.shape(), e2.shape())));
    }
    Ok(e1.prelu(slope)?.sub(&e2.prelu(slope)?)?.square().mean())
}

/// Bilinear resize of a `(N, 1, H, W)` mask to `size × size`, re-binarized at 0.5.
pub fn downscale_gt<T: Element>(gt: &Tensor<T>, size: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = gt.dims4()?;
    if c != 1 {
        return Err(Error::Shape(format!("ground truth must have one channel, got {:?}", gt.shape())));
    }
    if (h, w) == (size, size) {
        return Ok(gt.detach());
    }
    let half = T::of(0.5);
    let data = gt.data();
    let mut out = Vec::with_capacity(n * size * size);
    for plane in data.chunks(h * w) {
        out.extend(
            resize_bilinear_plane(plane, h, w, size, size)
                .into_iter()
                .map(|v| if v >= half { T::one() } else { T::zero() }),
        );
    }
    Ok(Tensor::from_vec(out, &[n, 1, size, size])?)
}

/// Loss terms of one batch. Scalars are indexed like the saliency heads (0 is `S¹`).
pub struct LossBundle<T: Element> {
    pub bce: [f64; 3],
    pub iou: [f64; 3],
    /// Unweighted alignment term, 0 when the model produces no edges.
    pub edge_align: f64,
    pub lambda: f64,
    /// Differentiable `Σ(bce + iou) + λ·edge_align`.
    pub total: Tensor<T>,
}

impl<T: Element> LossBundle<T> {
    pub fn total_value(&self) -> f64 {
        self.total.data()[0].to_f64().unwrap_or(f64::NAN)
    }

    pub fn bce_sum(&self) -> f64 {
        self.bce.iter().sum()
    }

    pub fn iou_sum(&self) -> f64 {
        self.iou.iter().sum()
    }
}

fn scalar<T: Element>(t: &Tensor<T>) -> f64 {
    t.data()[0].to_f64().unwrap_or(f64::NAN)
}

/// Full objective for one batch against a full-resolution `(N, 1, H, W)` mask.
///
/// `edges` and `slope` must both be present for the alignment term to contribute.
pub fn total_loss<T: Element>(
    sal: &SaliencyOutputs<T>,
    gt: &Tensor<T>,
    edges: Option<&[Tensor<T>; 2]>,
    slope: Option<&Tensor<T>>,
    lambda: f64,
    eps_iou: f64,
) -> Result<LossBundle<T>> {
    let mut bce = [0.0; 3];
    let mut iou = [0.0; 3];
    let mut total: Option<Tensor<T>> = None;
    for i in 0..3 {
        let [_, _, h, _] = sal.maps[i].dims4()?;
        let g = no_grad(|| downscale_gt(gt, h))?;
        let b = bce_loss(&sal.logits[i], &g)?;
        let u = iou_loss(&sal.maps[i], &g, eps_iou)?;
        bce[i] = scalar(&b);
        iou[i] = scalar(&u);
        let term = b.add(&u)?;
        total = Some(match total {
            Some(t) => t.add(&term)?,
            None => term,
        });
    }
    let mut total = total.expect("three heads");
    let mut edge_align = 0.0;
    if let (Some([e1, e2]), Some(slope)) = (edges, slope) {
        let l = edge_align_loss(e1, e2, slope)?;
        edge_align = scalar(&l);
        if lambda != 0.0 {
            total = total.add(&l.mul_scalar(T::of(lambda)))?;
        }
    }
    Ok(LossBundle { bce, iou, edge_align, lambda, total })
}
