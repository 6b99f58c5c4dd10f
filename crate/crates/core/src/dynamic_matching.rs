//! Semantic kernel compression and dynamic semantic matching.
//!
//! The deepest encoder level is squeezed into two per-sample kernel banks that are then
//! slid depthwise over levels 3 and 4 at several dilation rates. The dynamic convolution
//! carries no trained weights of its own.

use seanet_tensor::{Element, Tensor};

use crate::correlation::Fusion;
use crate::error::{Error, Result};
use crate::nn::{expect_chw, join, Conv2d, Ctx, DsConv, Init, Module, Slot};

/// Per-sample kernels `k₃: (N, c₃, k, k)` and `k₄: (N, c₄, k, k)`.
pub struct SemanticKernels<T: Element> {
    pub k3: Tensor<T>,
    pub k4: Tensor<T>,
}

/// Depthwise cross-correlation of `f` with per-sample kernels `k` at dilation `r`,
/// stride 1 and padding `r·(k/2)`, which keeps the spatial size.
pub fn ddconv<T: Element>(f: &Tensor<T>, k: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let [n, c, _, _] = f.dims4()?;
    let [kn, kc, kh, kw] = k.dims4()?;
    if (kn, kc) != (n, c) {
        return Err(Error::Shape(format!("ddconv: kernel {:?} does not match features {:?}", k.shape(), f.shape())));
    }
    if kh != kw || kh % 2 == 0 {
        return Err(Error::Shape(format!("ddconv: kernel must be square and odd, got {kh}x{kw}")));
    }
    if r == 0 {
        return Err(Error::Shape("ddconv: dilation must be positive".into()));
    }
    Ok(f.dynamic_depthwise_conv2d(k, r * (kh / 2), r)?)
}

pub struct Skc<T: Element> {
    pub branch3: DsConv<T>,
    pub branch4: DsConv<T>,
    kernel_size: usize,
}

impl<T: Element> Skc<T> {
    pub fn new(init: &mut Init, c3: usize, c4: usize, c5: usize, kernel_size: usize) -> Self {
        Self { branch3: DsConv::new(init, c5, c3), branch4: DsConv::new(init, c5, c4), kernel_size }
    }

    /// `k_t = AdaptivePool_{k×k}(DSconv_t(f5))` with independent branches.
    pub fn compress(&self, f5: &Tensor<T>, ctx: &Ctx) -> Result<SemanticKernels<T>> {
        let [_, c, _, _] = f5.dims4()?;
        if c != self.branch3.in_channels() {
            return Err(Error::Shape(format!("skc: expected {} channels, got {:?}", self.branch3.in_channels(), f5.shape())));
        }
        let k = self.kernel_size;
        Ok(SemanticKernels {
            k3: self.branch3.forward(f5, ctx)?.adaptive_avg_pool2d(k, k)?,
            k4: self.branch4.forward(f5, ctx)?.adaptive_avg_pool2d(k, k)?,
        })
    }
}

impl<T: Element> Module<T> for Skc<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, Slot<'a, T>)) {
        self.branch3.visit(&join(prefix, "branch3"), f);
        self.branch4.visit(&join(prefix, "branch4"), f);
    }
}

/// `Pconv(Σ_r ddconv(f; k, r))`.
pub struct SemanticMatch<T: Element> {
    pub pointwise: Conv2d<T>,
    dilations: [usize; 3],
}

impl<T: Element> SemanticMatch<T> {
    pub fn new(init: &mut Init, channels: usize, dilations: [usize; 3]) -> Self {
        Self { pointwise: Conv2d::new(init, channels, channels, 1, 1, 1, true), dilations }
    }

    /// The summed dynamic responses before the pointwise fusion.
    pub fn matched_sum(&self, f: &Tensor<T>, k: &Tensor<T>) -> Result<Tensor<T>> {
        let mut acc = ddconv(f, k, self.dilations[0])?;
        for &r in &self.dilations[1..] {
            acc = acc.add(&ddconv(f, k, r)?)?;
        }
        Ok(acc)
    }

    pub fn forward(&self, f: &Tensor<T>, k: &Tensor<T>) -> Result<Tensor<T>> {
        self.pointwise.forward(&self.matched_sum(f, k)?)
    }
}

impl<T: Element> Module<T> for SemanticMatch<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, Slot<'a, T>)) {
        self.pointwise.visit(&join(prefix, "pconv"), f);
    }
}

/// Every intermediate of one DSMM pass.
pub struct DsmmOutput<T: Element> {
    pub kernels: Option<SemanticKernels<T>>,
    /// `f_sm³` and `f_sm⁴` (raw levels when matching is ablated).
    pub matched: [Tensor<T>; 2],
    /// `f̂_sm³`, `f̂_sm⁴`, both `(N, c₄, h₃, w₃)`.
    pub aligned: [Tensor<T>; 2],
    pub fused: Tensor<T>,
}

pub struct Dsmm<T: Element> {
    pub skc: Option<Skc<T>>,
    pub match3: Option<SemanticMatch<T>>,
    pub match4: Option<SemanticMatch<T>>,
    pub lift3: DsConv<T>,
    pub fusion: Fusion<T>,
    channels: [usize; 3],
}

impl<T: Element> Dsmm<T> {
    /// `channels = [c₃, c₄, c₅]`. `matching = false` bypasses SKC and semantic matching.
    pub fn new(init: &mut Init, channels: [usize; 3], kernel_size: usize, dilations: [usize; 3], matching: bool, correlate: bool) -> Self {
        let [c3, c4, c5] = channels;
        Self {
            skc: matching.then(|| Skc::new(init, c3, c4, c5, kernel_size)),
            match3: matching.then(|| SemanticMatch::new(init, c3, dilations)),
            match4: matching.then(|| SemanticMatch::new(init, c4, dilations)),
            lift3: DsConv::new(init, c3, c4),
            fusion: Fusion::new(init, c4, correlate),
            channels,
        }
    }

    pub fn out_channels(&self) -> usize {
        2 * self.channels[1]
    }

    pub fn forward_parts(&self, f3: &Tensor<T>, f4: &Tensor<T>, f5: &Tensor<T>, ctx: &Ctx) -> Result<DsmmOutput<T>> {
        let [c3, c4, c5] = self.channels;
        let [_, _, h3, w3] = f3.dims4()?;
        expect_chw("dsmm f3", f3, c3, h3, w3)?;
        expect_chw("dsmm f4", f4, c4, h3 / 2, w3 / 2)?;
        expect_chw("dsmm f5", f5, c5, h3 / 4, w3 / 4)?;
        let (kernels, matched) = match (&self.skc, &self.match3, &self.match4) {
            (Some(skc), Some(m3), Some(m4)) => {
                let k = skc.compress(f5, ctx)?;
                let matched = [m3.forward(f3, &k.k3)?, m4.forward(f4, &k.k4)?];
                (Some(k), matched)
            }
            _ => (None, [f3.clone(), f4.clone()]),
        };
        let aligned = [self.lift3.forward(&matched[0], ctx)?, matched[1].upsample_bilinear(2)?];
        let fused = self.fusion.forward(&aligned[0], &aligned[1], ctx)?;
        Ok(DsmmOutput { kernels, matched, aligned, fused })
    }

    pub fn forward(&self, f3: &Tensor<T>, f4: &Tensor<T>, f5: &Tensor<T>, ctx: &Ctx) -> Result<Tensor<T>> {
        Ok(self.forward_parts(f3, f4, f5, ctx)?.fused)
    }
}

impl<T: Element> Module<T> for Dsmm<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, Slot<'a, T>)) {
        self.skc.visit(&join(prefix, "skc"), f);
        self.match3.visit(&join(prefix, "match3"), f);
        self.match4.visit(&join(prefix, "match4"), f);
        self.lift3.visit(&join(prefix, "lift3"), f);
        self.fusion.visit(&join(prefix, "ccorr"), f);
    }
}
