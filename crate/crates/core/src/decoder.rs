//! Decoder blocks and saliency heads.
//!
//! | block | layers (DSconv 3×3 unless noted)                      | output           |
//! |-------|-------------------------------------------------------|------------------|
//! | D5    | (c₅→c₅), (c₅→c₅), up ×4, (c₅→2c₄)                     | 2c₄ × h₃ × w₃    |
//! | D34   | (2c₄ + dsmm→2c₄), (2c₄→2c₄), up ×4, (2c₄→2c₂)         | 2c₂ × h₁ × w₁    |
//! | D12   | (2c₂ + esam→2c₂), (2c₂→2c₂), up ×2, (2c₂→2c₂)         | 2c₂ × H × W      |
//!
//! With the stock widths this is 320→320→320→192, 384→192→192→48 and 96→48→48→48.

use seanet_tensor::{Element, Tensor};

use crate::error::{Error, Result};
use crate::nn::{join, Conv2d, Ctx, DsConv, Init, Module, Slot};

pub struct DecoderBlock<T: Element> {
    name: &'static str,
    pub layers: [DsConv<T>; 3],
    upsample: usize,
}

impl<T: Element> DecoderBlock<T> {
    pub fn new(init: &mut Init, name: &'static str, cin: usize, mid: usize, cout: usize, upsample: usize) -> Self {
        Self {
            name,
            layers: [DsConv::new(init, cin, mid), DsConv::new(init, mid, mid), DsConv::new(init, mid, cout)],
            upsample,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].in_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.layers[2].out_channels()
    }

    pub fn upsample(&self) -> usize {
        self.upsample
    }

    pub fn forward(&self, x: &Tensor<T>, ctx: &Ctx) -> Result<Tensor<T>> {
        let [_, c, h, w] = x.dims4()?;
        if c != self.in_channels() {
            return Err(Error::Shape(format!(
                "decoder block {}: expected (N, {}, H, W) input, got (N, {c}, {h}, {w})",
                self.name,
                self.in_channels()
            )));
        }
        let h = self.layers[1].forward(&self.layers[0].forward(x, ctx)?, ctx)?;
        self.layers[2].forward(&h.upsample_bilinear(self.upsample)?, ctx)
    }
}

impl<T: Element> Module<T> for DecoderBlock<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, Slot<'a, T>)) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &i.to_string()), f);
        }
    }
}

/// Dropout, 1×1 convolution to one channel, sigmoid.
pub struct SalHead<T: Element> {
    pub conv: Conv2d<T>,
    dropout_p: f64,
}

impl<T: Element> SalHead<T> {
    pub fn new(init: &mut Init, cin: usize, dropout_p: f64) -> Self {
        Self { conv: Conv2d::new(init, cin, 1, 1, 1, 1, true), dropout_p }
    }

    /// Returns `(logits, saliency)`.
    pub fn forward(&self, f: &Tensor<T>, ctx: &Ctx) -> Result<(Tensor<T>, Tensor<T>)> {
        let x = if ctx.is_training() && self.dropout_p > 0.0 {
            ctx.with_rng(|rng| f.dropout(self.dropout_p, rng))?
        } else {
            f.clone()
        };
        let logits = self.conv.forward(&x)?;
        let s = logits.sigmoid();
        Ok((logits, s))
    }
}

impl<T: Element> Module<T> for SalHead<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, Slot<'a, T>)) {
        self.conv.visit(&join(prefix, "conv"), f);
    }
}

/// Saliency maps finest first: index 0 is `S¹` at input resolution, 2 is `S³`.
pub struct SaliencyOutputs<T: Element> {
    pub logits: [Tensor<T>; 3],
    pub maps: [Tensor<T>; 3],
}

pub struct Decoder<T: Element> {
    pub d5: DecoderBlock<T>,
    pub d34: DecoderBlock<T>,
    pub d12: DecoderBlock<T>,
    /// Heads for `S¹`, `S²`, `S³`.
    pub heads: [SalHead<T>; 3],
}

impl<T: Element> Decoder<T> {
    /// `levels = [c₁..c₅]`; `dsmm`/`esam` are the channel counts concatenated into D34/D12 (0 when absent).
    pub fn new(init: &mut Init, levels: [usize; 5], dsmm: usize, esam: usize, dropout_p: f64) -> Self {
        let [_, c2, _, c4, c5] = levels;
        let d5 = DecoderBlock::new(init, "D5", c5, c5, 2 * c4, 4);
        let d34 = DecoderBlock::new(init, "D34", 2 * c4 + dsmm, 2 * c4, 2 * c2, 4);
        let d12 = DecoderBlock::new(init, "D12", 2 * c2 + esam, 2 * c2, 2 * c2, 2);
        let heads = [
            SalHead::new(init, d12.out_channels(), dropout_p),
            SalHead::new(init, d34.out_channels(), dropout_p),
            SalHead::new(init, d5.out_channels(), dropout_p),
        ];
        Self { d5, d34, d12, heads }
    }

    /// `d5 = D5(f5)`, `d34 = D34([d5; f_dsmm])`, `d12 = D12([d34; f_esam])`, one head per stage.
    pub fn decode(&self, f5: &Tensor<T>, f_dsmm: Option<&Tensor<T>>, f_esam: Option<&Tensor<T>>, ctx: &Ctx) -> Result<SaliencyOutputs<T>> {
        let join_with = |a: &Tensor<T>, b: Option<&Tensor<T>>| -> Result<Tensor<T>> {
            match b {
                Some(b) => Ok(Tensor::cat(&[a, b], 1)?),
                None => Ok(a.clone()),
            }
        };
        let d5 = self.d5.forward(f5, ctx)?;
        let (l3, s3) = self.heads[2].forward(&d5, ctx)?;
        let d34 = self.d34.forward(&join_with(&d5, f_dsmm)?, ctx)?;
        let (l2, s2) = self.heads[1].forward(&d34, ctx)?;
        let d12 = self.d12.forward(&join_with(&d34, f_esam)?, ctx)?;
        let (l1, s1) = self.heads[0].forward(&d12, ctx)?;
        Ok(SaliencyOutputs { logits: [l1, l2, l3], maps: [s1, s2, s3] })
    }
}

impl<T: Element> Module<T> for Decoder<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, Slot<'a, T>)) {
        self.d5.visit(&join(prefix, "d5"), f);
        self.d34.visit(&join(prefix, "d34"), f);
        self.d12.visit(&join(prefix, "d12"), f);
        for (i, h) in self.heads.iter().enumerate() {
            h.visit(&join(prefix, &format!("head{}", i + 1)), f);
        }
    }
}
