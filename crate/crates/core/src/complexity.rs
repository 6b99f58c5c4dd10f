//! Static parameter and MAC analysis.
//!
//! Costs are derived from layer shapes alone, without running the network, under the
//! convention below. The runtime counter in the tensor crate records the same quantities
//! op by op, so a forward pass in evaluation mode must agree with [`analyze`] exactly.
//!
//! | op                        | MACs per forward                   |
//! |---------------------------|------------------------------------|
//! | convolution               | `out · cin/g · kh · kw` (+ `out` for bias) |
//! | dynamic depthwise conv    | `out · k²`                         |
//! | batch norm, activation, element-wise, softmax | 1 per element  |
//! | same-size average pool    | `k²` per output                    |
//! | adaptive average pool     | window size per output             |
//! | bilinear resize           | 4 per output                       |
//! | batched matmul            | `B · M · N · K`                    |
//! | reshape, concat, dropout  | 0                                  |
//!
//! One MAC is counted as one FLOP. Batch size is 1.

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{Error, Result};

pub const CONVENTION: &str = "mac: 1 multiply-accumulate = 1 FLOP, batch 1, eval mode";

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartCost {
    pub name: String,
    pub params: u64,
    pub macs: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub convention: String,
    pub input_size: usize,
    pub params_total: u64,
    pub macs_total: u64,
    pub gflops: f64,
    /// `backbone`, `dsmm` (with kernel compression), `esam`, `decoder` (with heads), `alignment`.
    pub parts: Vec<PartCost>,
}

impl ComplexityReport {
    pub fn part(&self, name: &str) -> Option<&PartCost> {
        self.parts.iter().find(|p| p.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Default)]
struct Cost {
    params: u64,
    macs: u64,
}

/// Feature map shape `(C, H, W)` for a single sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Fm {
    c: usize,
    h: usize,
    w: usize,
}

impl Fm {
    fn numel(self) -> u64 {
        (self.c * self.h * self.w) as u64
    }

    fn with_c(self, c: usize) -> Fm {
        Fm { c, ..self }
    }
}

impl Cost {
    #[allow(clippy::too_many_arguments)]
    fn conv(&mut self, x: Fm, cout: usize, k: usize, stride: usize, dilation: usize, groups: usize, bias: bool) -> Fm {
        let pad = dilation * (k / 2);
        let span = dilation * (k - 1) + 1;
        let out = Fm { c: cout, h: (x.h + 2 * pad - span) / stride + 1, w: (x.w + 2 * pad - span) / stride + 1 };
        let per = (x.c / groups * k * k) as u64;
        self.params += cout as u64 * per + if bias { cout as u64 } else { 0 };
        self.macs += out.numel() * per + if bias { out.numel() } else { 0 };
        out
    }

    fn bn(&mut self, x: Fm) {
        self.params += 2 * x.c as u64;
        self.macs += x.numel();
    }

    fn elementwise(&mut self, x: Fm, times: u64) {
        self.macs += times * x.numel();
    }

    fn conv_bn(&mut self, x: Fm, cout: usize, k: usize, stride: usize, groups: usize, act: bool) -> Fm {
        let y = self.conv(x, cout, k, stride, 1, groups, false);
        self.bn(y);
        if act {
            self.elementwise(y, 1);
        }
        y
    }

    fn dsconv(&mut self, x: Fm, cout: usize) -> Fm {
        let y = self.conv_bn(x, x.c, 3, 1, x.c, true);
        self.conv_bn(y, cout, 1, 1, 1, true)
    }

    fn upsample(&mut self, x: Fm, factor: usize) -> Fm {
        let y = Fm { c: x.c, h: x.h * factor, w: x.w * factor };
        self.macs += 4 * y.numel();
        y
    }

    fn adaptive_pool(&mut self, x: Fm, k: usize) -> Fm {
        // Window i spans [⌊i·n/k⌋, ⌈(i+1)·n/k⌉).
        let span = |i: usize, n: usize| ((i + 1) * n).div_ceil(k) - i * n / k;
        let rows: usize = (0..k).map(|i| span(i, x.h)).sum();
        let cols: usize = (0..k).map(|i| span(i, x.w)).sum();
        let per_plane = (rows * cols) as u64;
        self.macs += x.c as u64 * per_plane;
        Fm { c: x.c, h: k, w: k }
    }

    /// Channel correlation of two `x`-shaped streams followed by concatenation.
    fn ccorr(&mut self, x: Fm, correlate: bool) -> Fm {
        if correlate {
            let (c, hw) = (x.c as u64, (x.h * x.w) as u64);
            self.params += c * c;
            self.macs += c * c * hw; // X₂ X₁ᵀ
            self.macs += c * c * c; // · W_m
            self.macs += 2 * c * c; // two softmaxes
            self.macs += 2 * c * hw * c; // M_r X₁, M_cᵀ X₂
            self.elementwise(x, 2); // residual adds
            self.dsconv(x, x.c);
            self.dsconv(x, x.c);
        }
        x.with_c(2 * x.c)
    }
}

fn backbone(cost: &mut Cost, cfg: &ModelConfig, input: usize) -> [Fm; 5] {
    let plan = cfg.plan();
    let mut x = cost.conv_bn(Fm { c: 3, h: input, w: input }, plan.stem, 3, 2, 1, true);
    let ends = crate::config::LEVEL_ENDS;
    let mut levels = [x; 5];
    let mut next = 0;
    for (i, (cin, cout, t, s)) in plan.bottlenecks().into_iter().enumerate() {
        let hidden = cin * t;
        let mut h = x;
        if t != 1 {
            h = cost.conv_bn(h, hidden, 1, 1, 1, true);
        }
        h = cost.conv_bn(h, hidden, 3, s, hidden, true);
        h = cost.conv_bn(h, cout, 1, 1, 1, false);
        if s == 1 && cin == cout {
            cost.elementwise(h, 1);
        }
        x = h;
        if i + 1 == ends[next] {
            levels[next] = x;
            next += 1;
        }
    }
    levels
}

fn dsmm(cost: &mut Cost, cfg: &ModelConfig, [f3, f4, f5]: [Fm; 3]) -> Fm {
    let ab = cfg.ablation;
    let k = cfg.kernel_size;
    let (m3, m4) = if ab.no_sm {
        (f3, f4)
    } else {
        for c in [f3.c, f4.c] {
            let b = cost.dsconv(f5, c);
            cost.adaptive_pool(b, k);
        }
        for f in [f3, f4] {
            cost.macs += 3 * f.numel() * (k * k) as u64; // three dilated ddconvs
            cost.elementwise(f, 2); // summation
            cost.conv(f, f.c, 1, 1, 1, 1, true);
        }
        (f3, f4)
    };
    let a3 = cost.dsconv(m3, f4.c);
    let a4 = cost.upsample(m4, 2);
    debug_assert_eq!(a3, a4);
    cost.ccorr(a3, !ab.no_ccorr1)
}

fn esam(cost: &mut Cost, cfg: &ModelConfig, [f1, f2]: [Fm; 2]) -> Fm {
    let ab = cfg.ablation;
    let a1 = cost.dsconv(f1, f2.c);
    let b = cost.dsconv(f2, f2.c);
    let a2 = cost.upsample(b, 2);
    debug_assert_eq!(a1, a2);
    if !ab.no_eeu {
        let p = cfg.pool_kernel as u64;
        for a in [a1, a2] {
            cost.macs += a.numel() * p * p; // local mean
            cost.elementwise(a, 1); // edge subtraction
            cost.conv(a, a.c, 1, 1, 1, 1, true);
            cost.elementwise(a, 3); // sigmoid, gate product, residual add
        }
    }
    cost.ccorr(a1, !ab.no_ccorr2)
}

fn block(cost: &mut Cost, x: Fm, mid: usize, cout: usize, up: usize) -> Fm {
    let h = cost.dsconv(x, mid);
    let h = cost.dsconv(h, mid);
    let h = cost.upsample(h, up);
    cost.dsconv(h, cout)
}

fn head(cost: &mut Cost, x: Fm) {
    let s = cost.conv(x, 1, 1, 1, 1, 1, true);
    cost.elementwise(s, 1);
}

fn decoder(cost: &mut Cost, levels: [Fm; 5], f_dsmm: Option<Fm>, f_esam: Option<Fm>) {
    let [_, c2, _, c4, c5] = levels.map(|l| l.c);
    let d5 = block(cost, levels[4], c5, 2 * c4, 4);
    head(cost, d5);
    let x = d5.with_c(d5.c + f_dsmm.map_or(0, |f| f.c));
    let d34 = block(cost, x, 2 * c4, 2 * c2, 4);
    head(cost, d34);
    let x = d34.with_c(d34.c + f_esam.map_or(0, |f| f.c));
    let d12 = block(cost, x, 2 * c2, 2 * c2, 2);
    head(cost, d12);
}

/// Static cost of the network described by `cfg` on `input × input` images.
pub fn analyze(cfg: &ModelConfig, input: usize) -> Result<ComplexityReport> {
    cfg.validate()?;
    if input == 0 || input % 32 != 0 {
        return Err(Error::Config(format!("input size must be a positive multiple of 32, got {input}")));
    }
    let ab = cfg.ablation;
    let mut parts = Vec::new();
    let mut push = |name: &str, c: Cost| parts.push(PartCost { name: name.into(), params: c.params, macs: c.macs });

    let mut c = Cost::default();
    let levels = backbone(&mut c, cfg, input);
    push("backbone", c);

    let mut c = Cost::default();
    let f_dsmm = (!ab.no_dsmm).then(|| dsmm(&mut c, cfg, [levels[2], levels[3], levels[4]]));
    push("dsmm", c);

    let mut c = Cost::default();
    let f_esam = (!ab.no_esam).then(|| esam(&mut c, cfg, [levels[0], levels[1]]));
    push("esam", c);

    let mut c = Cost::default();
    decoder(&mut c, levels, f_dsmm, f_esam);
    push("decoder", c);

    // Training-only PReLU slope of the alignment loss.
    push("alignment", Cost { params: u64::from(ab.has_alignment_loss()), macs: 0 });

    let params_total = parts.iter().map(|p| p.params).sum();
    let macs_total: u64 = parts.iter().map(|p| p.macs).sum();
    Ok(ComplexityReport {
        convention: CONVENTION.into(),
        input_size: input,
        params_total,
        macs_total,
        gflops: macs_total as f64 / 1e9,
        parts,
    })
}
