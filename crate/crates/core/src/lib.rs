//! SeaNet: a lightweight salient object detector for optical remote sensing images.
//!
//! A truncated MobileNet-V2 encoder feeds two feature-fusion modules, dynamic semantic
//! matching on the deep levels and edge self-alignment on the shallow ones, whose outputs
//! are concatenated into a three-stage depthwise-separable decoder with a saliency head
//! per stage.

pub mod backbone;
pub mod checkpoint;
pub mod complexity;
pub mod config;
pub mod correlation;
pub mod data;
pub mod decoder;
pub mod dynamic_matching;
pub mod edge_alignment;
pub mod error;
pub mod infer;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod train;

pub use config::{Ablation, ChannelPlan, Config, ModelConfig};
pub use error::{Error, Result};
pub use model::{ForwardOutput, ModuleMacs, SeaNet};
pub use seanet_tensor as tensor;
