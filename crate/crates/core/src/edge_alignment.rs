//! Edge self-alignment over the two finest encoder levels.
//!
//! Edges come from pooling-subtraction on the aligned features, gate those features
//! through a sigmoid, and are returned raw so the training loss can pull the two
//! streams together. No ground-truth edge map is involved.

use seanet_tensor::{Element, Tensor};

use crate::correlation::Fusion;
use crate::error::{Error, Result};
use crate::nn::{expect_chw, join, Conv2d, Ctx, DsConv, Init, Module, Slot};

/// `f − LocalMean_{k×k}(f)`, zero padded, stride 1.
pub fn extract_edge<T: Element>(f: &Tensor<T>, pool_kernel: usize) -> Result<Tensor<T>> {
    Ok(f.sub(&f.avg_pool_same(pool_kernel)?)?)
}

/// Edge-based enhancement unit: `σ(conv₁ₓ₁(edge)) ⊗ f̂ ⊕ f̂`.
pub struct Eeu<T: Element> {
    pub gate: Conv2d<T>,
    pool_kernel: usize,
}

impl<T: Element> Eeu<T> {
    pub fn new(init: &mut Init, channels: usize, pool_kernel: usize) -> Self {
        Self { gate: Conv2d::new(init, channels, channels, 1, 1, 1, true), pool_kernel }
    }

    /// Returns `(enhanced, edge)`.
    pub fn forward(&self, f_hat: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let edge = extract_edge(f_hat, self.pool_kernel)?;
        let gate = self.gate.forward(&edge)?.sigmoid();
        let enhanced = gate.mul(f_hat)?.add(f_hat)?;
        Ok((enhanced, edge))
    }
}

impl<T: Element> Module<T> for Eeu<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, Slot<'a, T>)) {
        self.gate.visit(&join(prefix, "gate"), f);
    }
}

pub struct EsamOutput<T: Element> {
    /// `f̂_e¹`, `f̂_e²`.
    pub aligned: [Tensor<T>; 2],
    /// Raw edge maps, absent when the enhancement units are ablated.
    pub edges: Option<[Tensor<T>; 2]>,
    pub fused: Tensor<T>,
}

pub struct Esam<T: Element> {
    pub align1: DsConv<T>,
    pub align2: DsConv<T>,
    pub eeu1: Option<Eeu<T>>,
    pub eeu2: Option<Eeu<T>>,
    pub fusion: Fusion<T>,
    channels: [usize; 2],
}

impl<T: Element> Esam<T> {
    /// `channels = [c₁, c₂]`.
    pub fn new(init: &mut Init, channels: [usize; 2], pool_kernel: usize, enhance: bool, correlate: bool) -> Self {
        let [c1, c2] = channels;
        Self {
            align1: DsConv::new(init, c1, c2),
            align2: DsConv::new(init, c2, c2),
            eeu1: enhance.then(|| Eeu::new(init, c2, pool_kernel)),
            eeu2: enhance.then(|| Eeu::new(init, c2, pool_kernel)),
            fusion: Fusion::new(init, c2, correlate),
            channels,
        }
    }

    pub fn out_channels(&self) -> usize {
        2 * self.channels[1]
    }

    /// `f̂_e¹ = DSconv(f1)`, `f̂_e² = Up×2(DSconv(f2))`.
    pub fn align_low(&self, f1: &Tensor<T>, f2: &Tensor<T>, ctx: &Ctx) -> Result<(Tensor<T>, Tensor<T>)> {
        let [c1, c2] = self.channels;
        let [_, _, h1, w1] = f1.dims4()?;
        expect_chw("esam f1", f1, c1, h1, w1)?;
        expect_chw("esam f2", f2, c2, h1 / 2, w1 / 2)?;
        let a1 = self.align1.forward(f1, ctx)?;
        let a2 = self.align2.forward(f2, ctx)?.upsample_bilinear(2)?;
        if a1.shape() != a2.shape() {
            return Err(Error::Shape(format!("esam: aligned shapes differ, {:?} vs {:?}", a1.shape(), a2.shape())));
        }
        Ok((a1, a2))
    }

    pub fn forward(&self, f1: &Tensor<T>, f2: &Tensor<T>, ctx: &Ctx) -> Result<EsamOutput<T>> {
        let (a1, a2) = self.align_low(f1, f2, ctx)?;
        let (x1, x2, edges) = match (&self.eeu1, &self.eeu2) {
            (Some(u1), Some(u2)) => {
                let (x1, e1) = u1.forward(&a1)?;
                let (x2, e2) = u2.forward(&a2)?;
                (x1, x2, Some([e1, e2]))
            }
            _ => (a1.clone(), a2.clone(), None),
        };
        let fused = self.fusion.forward(&x1, &x2, ctx)?;
        Ok(EsamOutput { aligned: [a1, a2], edges, fused })
    }
}

impl<T: Element> Module<T> for Esam<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, Slot<'a, T>)) {
        self.align1.visit(&join(prefix, "align1"), f);
        self.align2.visit(&join(prefix, "align2"), f);
        self.eeu1.visit(&join(prefix, "eeu1"), f);
        self.eeu2.visit(&join(prefix, "eeu2"), f);
        self.fusion.visit(&join(prefix, "ccorr"), f);
    }
}
