//! Model, data and training configuration with validated defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One MobileNet-V2 stage: `repeats` inverted residual bottlenecks sharing expansion and width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub expand: usize,
    pub out: usize,
    pub repeats: usize,
    pub stride: usize,
}

/// Every channel count in the network, derived from the encoder stages.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelPlan {
    pub stem: usize,
    pub stages: [Stage; 7],
}

const MOBILENET_V2_STAGES: [(usize, usize, usize, usize); 7] =
    [(1, 16, 1, 1), (6, 24, 2, 2), (6, 32, 3, 2), (6, 64, 4, 2), (6, 96, 3, 1), (6, 160, 3, 2), (6, 320, 1, 1)];

/// Bottleneck index (1-based) closing each encoder level.
pub const LEVEL_ENDS: [usize; 5] = [1, 3, 6, 13, 17];

impl ChannelPlan {
    /// Stock widths; `scaled(1.0)` is the same plan.
    pub fn full() -> Self {
        Self::scaled(1.0)
    }

    /// Every width multiplied by `width` and rounded, at least 1. Topology is unchanged.
    pub fn scaled(width: f64) -> Self {
        let s = |c: usize| ((c as f64 * width).round() as usize).max(1);
        let stages = MOBILENET_V2_STAGES.map(|(expand, out, repeats, stride)| Stage { expand, out: s(out), repeats, stride });
        Self { stem: s(32), stages }
    }

    /// `(in, out, expand, stride)` for bottlenecks 1..=17 in order.
    pub fn bottlenecks(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut cin = self.stem;
        let mut out = Vec::new();
        for st in &self.stages {
            for i in 0..st.repeats {
                out.push((cin, st.out, st.expand, if i == 0 { st.stride } else { 1 }));
                cin = st.out;
            }
        }
        out
    }

    /// Channels of the five encoder levels, `c₁..c₅`.
    pub fn levels(&self) -> [usize; 5] {
        let b = self.bottlenecks();
        LEVEL_ENDS.map(|end| b[end - 1].1)
    }

    /// Stride of each level relative to the input.
    pub fn level_strides(&self) -> [usize; 5] {
        let b = self.bottlenecks();
        let mut stride = 2;
        let mut strides = [0; 5];
        let mut level = 0;
        for (i, &(_, _, _, s)) in b.iter().enumerate() {
            stride *= s;
            if i + 1 == LEVEL_ENDS[level] {
                strides[level] = stride;
                level += 1;
            }
        }
        strides
    }
}

/// Component removals used to build ablation variants.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    pub no_dsmm: bool,
    pub no_esam: bool,
    pub no_sm: bool,
    pub no_dilation: bool,
    pub no_ccorr1: bool,
    pub no_ccorr2: bool,
    pub no_eeu: bool,
    pub no_alignment: bool,
}

impl Ablation {
    pub const FLAGS: [&'static str; 8] =
        ["no_dsmm", "no_esam", "no_sm", "no_dilation", "no_ccorr1", "no_ccorr2", "no_eeu", "no_alignment"];

    pub fn single(flag: &str) -> Result<Self> {
        let mut a = Self::default();
        a.set(flag, true)?;
        Ok(a)
    }

    pub fn set(&mut self, flag: &str, on: bool) -> Result<()> {
        let slot = match flag {
            "no_dsmm" => &mut self.no_dsmm,
            "no_esam" => &mut self.no_esam,
            "no_sm" => &mut self.no_sm,
            "no_dilation" => &mut self.no_dilation,
            "no_ccorr1" => &mut self.no_ccorr1,
            "no_ccorr2" => &mut self.no_ccorr2,
            "no_eeu" => &mut self.no_eeu,
            "no_alignment" => &mut self.no_alignment,
            other => return Err(Error::Config(format!("unknown ablation flag `{other}`"))),
        };
        *slot = on;
        Ok(())
    }

    pub fn active(&self) -> Vec<&'static str> {
        let on = [
            self.no_dsmm,
            self.no_esam,
            self.no_sm,
            self.no_dilation,
            self.no_ccorr1,
            self.no_ccorr2,
            self.no_eeu,
            self.no_alignment,
        ];
        Self::FLAGS.iter().zip(on).filter(|(_, on)| *on).map(|(f, _)| *f).collect()
    }

    /// Rejects flags that modify a component another flag already removed.
    pub fn validate(&self) -> Result<()> {
        let conflicts = [
            (self.no_dsmm && self.no_sm, "no_dsmm", "no_sm"),
            (self.no_dsmm && self.no_dilation, "no_dsmm", "no_dilation"),
            (self.no_dsmm && self.no_ccorr1, "no_dsmm", "no_ccorr1"),
            (self.no_sm && self.no_dilation, "no_sm", "no_dilation"),
            (self.no_esam && self.no_eeu, "no_esam", "no_eeu"),
            (self.no_esam && self.no_ccorr2, "no_esam", "no_ccorr2"),
            (self.no_esam && self.no_alignment, "no_esam", "no_alignment"),
            (self.no_eeu && self.no_alignment, "no_eeu", "no_alignment"),
        ];
        for (clash, a, b) in conflicts {
            if clash {
                return Err(Error::Config(format!("ablation flags `{a}` and `{b}` are inconsistent: `{b}` modifies a component `{a}` removes")));
            }
        }
        Ok(())
    }

    /// Whether the network produces the two edge streams the alignment loss compares.
    pub fn has_edges(&self) -> bool {
        !self.no_esam && !self.no_eeu
    }

    pub fn has_alignment_loss(&self) -> bool {
        self.has_edges() && !self.no_alignment
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Channel width multiplier; 1.0 is the published network.
    pub width: f64,
    pub dropout_p: f64,
    /// Local-mean window for edge extraction.
    pub pool_kernel: usize,
    /// Spatial size of the compressed semantic kernels.
    pub kernel_size: usize,
    pub dilations: [usize; 3],
    pub ablation: Ablation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { width: 1.0, dropout_p: 0.1, pool_kernel: 3, kernel_size: 5, dilations: [1, 2, 3], ablation: Ablation::default() }
    }
}

impl ModelConfig {
    pub fn plan(&self) -> ChannelPlan {
        ChannelPlan::scaled(self.width)
    }

    pub fn effective_dilations(&self) -> [usize; 3] {
        if self.ablation.no_dilation {
            [1, 1, 1]
        } else {
            self.dilations
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::Config(format!("width must be positive, got {}", self.width)));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout_p must lie in [0, 1), got {}", self.dropout_p)));
        }
        if self.pool_kernel % 2 == 0 {
            return Err(Error::Config(format!("pool_kernel must be odd, got {}", self.pool_kernel)));
        }
        if self.kernel_size % 2 == 0 || self.kernel_size == 0 {
            return Err(Error::Config(format!("kernel_size must be odd, got {}", self.kernel_size)));
        }
        if self.dilations.contains(&0) {
            return Err(Error::Config("dilations must be positive".into()));
        }
        self.ablation.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub root: PathBuf,
    pub name: String,
    pub train_split: String,
    pub test_split: String,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { root: PathBuf::from("data/EORSSD"), name: "EORSSD".into(), train_split: "train".into(), test_split: "test".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub hflip: bool,
    pub vflip: bool,
    pub rot90: bool,
    /// Optional extra rotation by a uniform angle in `[-deg, deg]` (bilinear image, nearest mask).
    pub max_rotation_deg: Option<f64>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { hflip: true, vflip: true, rot90: true, max_rotation_deg: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Normalization {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for Normalization {
    /// ImageNet statistics, matching the encoder's pretraining.
    fn default() -> Self {
        Self { mean: [0.485, 0.456, 0.406], std: [0.229, 0.224, 0.225] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub optimizer: String,
    pub base_lr: f64,
    pub lr_decay: f64,
    pub lr_step_epochs: usize,
    pub epochs: usize,
    pub lambda: f64,
    pub eps_iou: f64,
    pub seed: u64,
    /// Encoder weights in safetensors format with torchvision parameter names.
    pub pretrained: Option<PathBuf>,
    pub checkpoint_dir: PathBuf,
    pub log_file: Option<PathBuf>,
    /// Stop after this many optimizer steps (smoke runs).
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            optimizer: "adam".into(),
            base_lr: 1e-4,
            lr_decay: 0.1,
            lr_step_epochs: 30,
            epochs: 50,
            lambda: 0.5,
            eps_iou: 1.0,
            seed: 0,
            pretrained: None,
            checkpoint_dir: PathBuf::from("checkpoints"),
            log_file: None,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    /// Step schedule: `base_lr · decay^(epoch / step)`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.base_lr * self.lr_decay.powi((epoch / self.lr_step_epochs.max(1)) as i32)
    }

    /// Edge-alignment weight after ablations.
    pub fn effective_lambda(&self, ablation: &Ablation) -> f64 {
        if ablation.has_alignment_loss() {
            self.lambda
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub input_size: usize,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub augment: AugmentConfig,
    pub normalization: Normalization,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            input_size: 288,
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            augment: AugmentConfig::default(),
            normalization: Normalization::default(),
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.input_size % 32 != 0 {
            return Err(Error::Config(format!("input_size must be a positive multiple of 32, got {}", self.input_size)));
        }
        let t = &self.train;
        if t.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if t.optimizer != "adam" {
            return Err(Error::Config(format!("unsupported optimizer `{}` (only `adam`)", t.optimizer)));
        }
        if !(t.base_lr > 0.0) || !(t.lr_decay > 0.0) || t.lr_step_epochs == 0 {
            return Err(Error::Config("learning-rate schedule must be positive".into()));
        }
        if !(t.lambda >= 0.0) || !(t.eps_iou > 0.0) {
            return Err(Error::Config("lambda must be non-negative and eps_iou positive".into()));
        }
        if self.normalization.std.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Config("normalization std must be positive".into()));
        }
        self.model.validate()
    }
}
