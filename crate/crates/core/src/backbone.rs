//! Truncated MobileNet-V2 encoder: stem plus inverted residual bottlenecks 1–17,
//! without the final 1×1 expansion, pooling or classifier.
//!
//! Parameters are named like the reference implementation (`features.<i>.conv.<j>…`)
//! so stock pretrained weights load by name.

use seanet_tensor::{Element, Tensor};

use crate::config::{ChannelPlan, LEVEL_ENDS};
use crate::error::{Error, Result};
use crate::nn::{join, Act, BatchNorm2d, Conv2d, ConvBn, Ctx, Init, Module, Slot};

pub struct InvertedResidual<T: Element> {
    expand: Option<ConvBn<T>>,
    depthwise: ConvBn<T>,
    project: Conv2d<T>,
    project_bn: BatchNorm2d<T>,
    residual: bool,
}

impl<T: Element> InvertedResidual<T> {
    pub fn new(init: &mut Init, cin: usize, cout: usize, expand: usize, stride: usize) -> Self {
        let hidden = cin * expand;
        Self {
            expand: (expand != 1).then(|| ConvBn::new(init, cin, hidden, 1, 1, 1, Act::Relu6)),
            depthwise: ConvBn::new(init, hidden, hidden, 3, stride, hidden, Act::Relu6),
            project: Conv2d::new(init, hidden, cout, 1, 1, 1, false),
            project_bn: BatchNorm2d::new(init, cout),
            residual: stride == 1 && cin == cout,
        }
    }

    pub fn forward(&self, x: &Tensor<T>, ctx: &Ctx) -> Result<Tensor<T>> {
        let mut h = match &self.expand {
            Some(e) => e.forward(x, ctx)?,
            None => x.clone(),
        };
        h = self.depthwise.forward(&h, ctx)?;
        h = self.project_bn.forward(&self.project.forward(&h)?, ctx)?;
        if self.residual {
            h = h.add(x)?;
        }
        Ok(h)
    }
}

impl<T: Element> Module<T> for InvertedResidual<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, Slot<'a, T>)) {
        let conv = join(prefix, "conv");
        let mut idx = 0;
        if let Some(e) = &self.expand {
            e.visit(&join(&conv, "0"), f);
            idx = 1;
        }
        self.depthwise.visit(&join(&conv, &idx.to_string()), f);
        self.project.visit(&join(&conv, &(idx + 1).to_string()), f);
        self.project_bn.visit(&join(&conv, &(idx + 2).to_string()), f);
    }
}

/// Encoder outputs `E¹..E⁵`, finest first.
pub struct FiveLevelFeatures<T: Element> {
    pub levels: [Tensor<T>; 5],
}

impl<T: Element> FiveLevelFeatures<T> {
    /// Level `t ∈ 1..=5`.
    pub fn level(&self, t: usize) -> &Tensor<T> {
        &self.levels[t - 1]
    }
}

pub struct Backbone<T: Element> {
    stem: ConvBn<T>,
    blocks: Vec<InvertedResidual<T>>,
    input_size: usize,
}

impl<T: Element> Backbone<T> {
    /// Randomly initialized encoder; pretrained weights are loaded afterwards by name.
    pub fn new(init: &mut Init, plan: &ChannelPlan, input_size: usize) -> Self {
        let stem = ConvBn::new(init, 3, plan.stem, 3, 2, 1, Act::Relu6);
        let blocks = plan
            .bottlenecks()
            .into_iter()
            .map(|(cin, cout, t, s)| InvertedResidual::new(init, cin, cout, t, s))
            .collect();
        Self { stem, blocks, input_size }
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn encode(&self, image: &Tensor<T>, ctx: &Ctx) -> Result<FiveLevelFeatures<T>> {
        let s = self.input_size;
        match image.shape() {
            &[_, 3, h, w] if h == s && w == s => {}
            other => {
                return Err(Error::Shape(format!("encoder input: expected (N, 3, {s}, {s}), got {other:?}")));
            }
        }
        let mut h = self.stem.forward(image, ctx)?;
        let mut levels = Vec::with_capacity(5);
        let mut next = 0;
        for (i, block) in self.blocks.iter().enumerate() {
            h = block.forward(&h, ctx)?;
            if i + 1 == LEVEL_ENDS[next] {
                levels.push(h.clone());
                next += 1;
            }
        }
        let levels: [Tensor<T>; 5] = levels.try_into().map_err(|_| Error::Shape("encoder produced wrong level count".into()))?;
        Ok(FiveLevelFeatures { levels })
    }
}

impl<T: Element> Module<T> for Backbone<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, Slot<'a, T>)) {
        self.stem.visit(&join(prefix, "0"), f);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&join(prefix, &(i + 1).to_string()), f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{named_params, param_count};

    #[test]
    fn reference_parameter_names() {
        let bb = Backbone::<f32>::new(&mut Init::new(0), &ChannelPlan::full(), 288);
        let names: Vec<String> = named_params(&bb, "features").into_iter().map(|(n, _)| n).collect();
        for expected in [
            "features.0.0.weight",
            "features.0.1.bias",
            "features.1.conv.0.0.weight",
            "features.1.conv.1.weight",
            "features.1.conv.2.weight",
            "features.2.conv.0.0.weight",
            "features.2.conv.1.0.weight",
            "features.2.conv.2.weight",
            "features.17.conv.3.bias",
        ] {
            assert!(names.iter().any(|n| n == expected), "missing {expected}");
        }
        assert!(!names.iter().any(|n| n.starts_with("features.18")));
    }

    #[test]
    fn wrong_input_shape_names_expectation() {
        let plan = ChannelPlan::scaled(0.25);
        let bb = Backbone::<f32>::new(&mut Init::new(0), &plan, 64);
        let err = bb.encode(&Tensor::zeros(&[1, 3, 32, 32]), &Ctx::eval()).err().unwrap();
        assert!(err.to_string().contains("(N, 3, 64, 64)"), "{err}");
        assert!(param_count(&bb) > 0);
    }
}
