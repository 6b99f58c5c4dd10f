//! Channel-wise correlation between two equally shaped feature maps.
//!
//! With `X₁, X₂ ∈ ℝ^{C×HW}` the flattened inputs and `W_m ∈ ℝ^{C×C}` trainable,
//! the affinity is `A = X₂ X₁ᵀ W_m`. Row-softmax `M_r(A)` re-weights `X₁`,
//! column-softmax `M_c(A)` (transposed) re-weights `X₂`; each result is added back to
//! its input and refined by its own DSconv, and the two are concatenated.

use seanet_tensor::{Element, Tensor};

use crate::error::{Error, Result};
use crate::nn::{join, Ctx, DsConv, Init, Module, Param, Slot};

/// Intermediate products of one correlation, exposed for inspection.
pub struct Attention<T: Element> {
    /// `A`, shape `(N, C, C)`.
    pub affinity: Tensor<T>,
    /// Row-normalized `M_r(A)`.
    pub rows: Tensor<T>,
    /// Column-normalized `M_c(A)`.
    pub cols: Tensor<T>,
    /// `M_r(A) X₁` reshaped to `(N, C, H, W)`.
    pub enhanced1: Tensor<T>,
    /// `M_c(A)ᵀ X₂` reshaped to `(N, C, H, W)`.
    pub enhanced2: Tensor<T>,
}

pub struct ChannelCorrelation<T: Element> {
    pub wm: Param<T>,
    pub refine1: DsConv<T>,
    pub refine2: DsConv<T>,
    channels: usize,
}

impl<T: Element> ChannelCorrelation<T> {
    pub fn new(init: &mut Init, channels: usize) -> Self {
        Self {
            wm: init.kaiming(&[channels, channels], channels),
            refine1: DsConv::new(init, channels, channels),
            refine2: DsConv::new(init, channels, channels),
            channels,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    fn check(&self, f1: &Tensor<T>, f2: &Tensor<T>) -> Result<[usize; 4]> {
        let dims = f1.dims4()?;
        if f1.shape() != f2.shape() {
            return Err(Error::Shape(format!("ccorr: inputs differ, {:?} vs {:?}", f1.shape(), f2.shape())));
        }
        if dims[1] != self.channels {
            return Err(Error::Shape(format!("ccorr: expected {} channels, got {:?}", self.channels, f1.shape())));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("ccorr: empty input {:?}", f1.shape())));
        }
        Ok(dims)
    }

    pub fn attend(&self, f1: &Tensor<T>, f2: &Tensor<T>) -> Result<Attention<T>> {
        let [n, c, h, w] = self.check(f1, f2)?;
        let x1 = f1.reshape(&[n, c, h * w])?;
        let x2 = f2.reshape(&[n, c, h * w])?;
        // (X₂ X₁ᵀ) W_m: same product as X₂ (X₁ᵀ W_m) at HW·C² + C³ instead of 2·HW·C².
        let gram = x2.bmm(&x1, false, true)?;
        let affinity = gram.bmm(&self.wm.tensor().reshape(&[1, c, c])?, false, false)?;
        let rows = affinity.softmax(2)?;
        let cols = affinity.softmax(1)?;
        let enhanced1 = rows.bmm(&x1, false, false)?.reshape(&[n, c, h, w])?;
        let enhanced2 = cols.bmm(&x2, true, false)?.reshape(&[n, c, h, w])?;
        Ok(Attention { affinity, rows, cols, enhanced1, enhanced2 })
    }

    /// Residual fusion and refinement of given attention outputs.
    pub fn fuse(&self, f1: &Tensor<T>, f2: &Tensor<T>, enhanced1: &Tensor<T>, enhanced2: &Tensor<T>, ctx: &Ctx) -> Result<Tensor<T>> {
        let s1 = self.refine1.forward(&enhanced1.add(f1)?, ctx)?;
        let s2 = self.refine2.forward(&enhanced2.add(f2)?, ctx)?;
        Ok(Tensor::cat(&[&s1, &s2], 1)?)
    }

    pub fn forward(&self, f1: &Tensor<T>, f2: &Tensor<T>, ctx: &Ctx) -> Result<Tensor<T>> {
        let att = self.attend(f1, f2)?;
        self.fuse(f1, f2, &att.enhanced1, &att.enhanced2, ctx)
    }
}

impl<T: Element> Module<T> for ChannelCorrelation<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, Slot<'a, T>)) {
        f(join(prefix, "wm"), Slot::Param(&self.wm));
        self.refine1.visit(&join(prefix, "refine1"), f);
        self.refine2.visit(&join(prefix, "refine2"), f);
    }
}

/// How two aligned streams are merged: correlation, or plain concatenation when ablated.
pub enum Fusion<T: Element> {
    Correlation(ChannelCorrelation<T>),
    Concat,
}

impl<T: Element> Fusion<T> {
    pub fn new(init: &mut Init, channels: usize, correlate: bool) -> Self {
        if correlate {
            Fusion::Correlation(ChannelCorrelation::new(init, channels))
        } else {
            Fusion::Concat
        }
    }

    pub fn forward(&self, f1: &Tensor<T>, f2: &Tensor<T>, ctx: &Ctx) -> Result<Tensor<T>> {
        match self {
            Fusion::Correlation(c) => c.forward(f1, f2, ctx),
            Fusion::Concat => {
                if f1.shape() != f2.shape() {
                    return Err(Error::Shape(format!("fusion: inputs differ, {:?} vs {:?}", f1.shape(), f2.shape())));
                }
                Ok(Tensor::cat(&[f1, f2], 1)?)
            }
        }
    }
}

impl<T: Element> Module<T> for Fusion<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, Slot<'a, T>)) {
        if let Fusion::Correlation(c) = self {
            c.visit(prefix, f);
        }
    }
}
