//! Full network assembly and ablation rewiring.

use seanet_tensor::profile::count_macs;
use seanet_tensor::{Element, Tensor};

use crate::backbone::Backbone;
use crate::config::ModelConfig;
use crate::decoder::{Decoder, SaliencyOutputs};
use crate::dynamic_matching::Dsmm;
use crate::edge_alignment::Esam;
use crate::error::{Error, Result};
use crate::nn::{join, param_count, Ctx, Init, Module, Param, Slot};

/// Initial slope of the alignment-loss PReLU.
pub const PRELU_INIT: f64 = 0.25;

pub struct ForwardOutput<T: Element> {
    pub saliency: SaliencyOutputs<T>,
    /// Raw edge maps of the two enhancement units, when present.
    pub edges: Option<[Tensor<T>; 2]>,
}

/// Runtime MAC counts per top-level component.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ModuleMacs {
    pub backbone: u64,
    pub dsmm: u64,
    pub esam: u64,
    pub decoder: u64,
}

impl ModuleMacs {
    pub fn total(&self) -> u64 {
        self.backbone + self.dsmm + self.esam + self.decoder
    }
}

pub struct SeaNet<T: Element> {
    config: ModelConfig,
    pub backbone: Backbone<T>,
    pub dsmm: Option<Dsmm<T>>,
    pub esam: Option<Esam<T>>,
    pub decoder: Decoder<T>,
    /// Shared PReLU slope applied to both edge maps in the alignment loss.
    pub align_slope: Option<Param<T>>,
}

impl<T: Element> SeaNet<T> {
    /// Builds the network for square inputs of side `input_size` (a multiple of 32).
    pub fn new(config: &ModelConfig, input_size: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if input_size == 0 || input_size % 32 != 0 {
            return Err(Error::Config(format!("input size must be a positive multiple of 32, got {input_size}")));
        }
        let plan = config.plan();
        let [c1, c2, c3, c4, c5] = plan.levels();
        let ab = config.ablation;
        let mut init = Init::new(seed);
        let backbone = Backbone::new(&mut init, &plan, input_size);
        let dsmm = (!ab.no_dsmm).then(|| {
            Dsmm::new(&mut init, [c3, c4, c5], config.kernel_size, config.effective_dilations(), !ab.no_sm, !ab.no_ccorr1)
        });
        let esam = (!ab.no_esam).then(|| Esam::new(&mut init, [c1, c2], config.pool_kernel, !ab.no_eeu, !ab.no_ccorr2));
        let decoder = Decoder::new(
            &mut init,
            plan.levels(),
            dsmm.as_ref().map_or(0, Dsmm::out_channels),
            esam.as_ref().map_or(0, Esam::out_channels),
            config.dropout_p,
        );
        let align_slope = ab.has_alignment_loss().then(|| init.constant(&[1], PRELU_INIT));
        Ok(Self { config: config.clone(), backbone, dsmm, esam, decoder, align_slope })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn input_size(&self) -> usize {
        self.backbone.input_size()
    }

    pub fn num_params(&self) -> usize {
        param_count(self)
    }

    pub fn forward(&self, image: &Tensor<T>, ctx: &Ctx) -> Result<ForwardOutput<T>> {
        Ok(self.forward_profiled(image, ctx)?.0)
    }

    /// Forward pass that also attributes the recorded MACs to each component.
    pub fn forward_profiled(&self, image: &Tensor<T>, ctx: &Ctx) -> Result<(ForwardOutput<T>, ModuleMacs)> {
        let mut macs = ModuleMacs::default();
        let (feats, m) = count_macs(|| self.backbone.encode(image, ctx));
        macs.backbone = m;
        let feats = feats?;
        let (f_dsmm, m) = count_macs(|| {
            self.dsmm.as_ref().map(|d| d.forward(feats.level(3), feats.level(4), feats.level(5), ctx)).transpose()
        });
        macs.dsmm = m;
        let f_dsmm = f_dsmm?;
        let (esam, m) = count_macs(|| self.esam.as_ref().map(|e| e.forward(feats.level(1), feats.level(2), ctx)).transpose());
        macs.esam = m;
        let esam = esam?;
        let (saliency, m) = count_macs(|| {
            self.decoder.decode(feats.level(5), f_dsmm.as_ref(), esam.as_ref().map(|e| &e.fused), ctx)
        });
        macs.decoder = m;
        let edges = esam.and_then(|e| e.edges);
        Ok((ForwardOutput { saliency: saliency?, edges }, macs))
    }
}

impl<T: Element> Module<T> for SeaNet<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, Slot<'a, T>)) {
        self.backbone.visit(&join(prefix, "features"), f);
        self.dsmm.visit(&join(prefix, "dsmm"), f);
        self.esam.visit(&join(prefix, "esam"), f);
        self.decoder.visit(&join(prefix, "decoder"), f);
        if let Some(p) = &self.align_slope {
            f(join(prefix, "align_prelu.weight"), Slot::Param(p));
        }
    }
}
