//! Brute-force reference implementations shared by the integration tests.
//!
//! Everything here works on plain nested loops over `f64` slices and deliberately avoids
//! the library's kernels, so agreement is evidence rather than tautology.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seanet_core::nn::{BatchNorm2d, Conv2d, DsConv};
use seanet_core::tensor::Tensor;

pub mod checks;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn tensor(data: Vec<f64>, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_vec(data, shape).unwrap()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-12) || (a - b).abs() <= 1e-12
}

/// Largest relative deviation between two equally long slices, scaled by the larger magnitude.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / scale).fold(0.0, f64::max)
}

fn at(x: &[f64], dims: [usize; 4], n: usize, c: usize, y: isize, xx: isize) -> f64 {
    let [_, cc, h, w] = dims;
    if y < 0 || xx < 0 || y >= h as isize || xx >= w as isize {
        return 0.0;
    }
    x[((n * cc + c) * h + y as usize) * w + xx as usize]
}

/// Per-sample depthwise cross-correlation, padding `r·(k/2)`, stride 1.
pub fn ddconv(f: &[f64], dims: [usize; 4], k: &[f64], ks: usize, r: usize) -> Vec<f64> {
    let [n, c, h, w] = dims;
    let pad = (r * (ks / 2)) as isize;
    let mut out = vec![0.0; f.len()];
    for b in 0..n {
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for i in 0..ks {
                        for j in 0..ks {
                            let yy = y as isize - pad + (r * i) as isize;
                            let xx = x as isize - pad + (r * j) as isize;
                            acc += k[((b * c + ch) * ks + i) * ks + j] * at(f, dims, b, ch, yy, xx);
                        }
                    }
                    out[((b * c + ch) * h + y) * w + x] = acc;
                }
            }
        }
    }
    out
}

/// `f − mean_{k×k}(f)` with zero padding and divisor `k²`.
pub fn extract_edge(f: &[f64], dims: [usize; 4], k: usize) -> Vec<f64> {
    let [n, c, h, w] = dims;
    let half = (k / 2) as isize;
    let mut out = vec![0.0; f.len()];
    for b in 0..n {
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let mut s = 0.0;
                    for dy in -half..=half {
                        for dx in -half..=half {
                            s += at(f, dims, b, ch, y as isize + dy, x as isize + dx);
                        }
                    }
                    let i = ((b * c + ch) * h + y) * w + x;
                    out[i] = f[i] - s / (k * k) as f64;
                }
            }
        }
    }
    out
}

/// Dense convolution with optional bias, stride 1, padding `dilation·(k/2)`.
pub fn conv(x: &[f64], dims: [usize; 4], weight: &[f64], bias: Option<&[f64]>, cout: usize, k: usize, groups: usize) -> Vec<f64> {
    let [n, cin, h, w] = dims;
    let cin_g = cin / groups;
    let cout_g = cout / groups;
    let pad = (k / 2) as isize;
    let mut out = vec![0.0; n * cout * h * w];
    for b in 0..n {
        for o in 0..cout {
            let g = o / cout_g;
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = bias.map_or(0.0, |bb| bb[o]);
                    for ci in 0..cin_g {
                        for i in 0..k {
                            for j in 0..k {
                                let v = at(x, dims, b, g * cin_g + ci, y as isize - pad + i as isize, xx as isize - pad + j as isize);
                                acc += weight[((o * cin_g + ci) * k + i) * k + j] * v;
                            }
                        }
                    }
                    out[((b * cout + o) * h + y) * w + xx] = acc;
                }
            }
        }
    }
    out
}

pub fn conv_layer(x: &[f64], dims: [usize; 4], layer: &Conv2d<f64>) -> Vec<f64> {
    let shape = layer.weight.shape().to_vec();
    let bias = layer.bias.as_ref().map(|b| b.to_vec());
    conv(x, dims, &layer.weight.to_vec(), bias.as_deref(), shape[0], shape[2], layer.opts.groups)
}

/// Evaluation-mode batch norm from the layer's running statistics.
pub fn bn_eval(x: &[f64], dims: [usize; 4], bn: &BatchNorm2d<f64>) -> Vec<f64> {
    let [_, c, h, w] = dims;
    let (g, b, m, v) = (bn.weight.to_vec(), bn.bias.to_vec(), bn.running_mean.to_vec(), bn.running_var.to_vec());
    x.iter()
        .enumerate()
        .map(|(i, &val)| {
            let ch = (i / (h * w)) % c;
            g[ch] * (val - m[ch]) / (v[ch] + 1e-5).sqrt() + b[ch]
        })
        .collect()
}

pub fn relu(x: Vec<f64>) -> Vec<f64> {
    x.into_iter().map(|v| v.max(0.0)).collect()
}

/// Evaluation-mode depthwise separable convolution.
pub fn dsconv_eval(x: &[f64], dims: [usize; 4], ds: &DsConv<f64>) -> Vec<f64> {
    let y = relu(bn_eval(&conv_layer(x, dims, &ds.depthwise.conv), dims, &ds.depthwise.bn));
    let cout = ds.pointwise.conv.out_channels();
    let d2 = [dims[0], cout, dims[2], dims[3]];
    relu(bn_eval(&conv_layer(&y, dims, &ds.pointwise.conv), d2, &ds.pointwise.bn))
}

/// Attention products of channel correlation for one sample stack.
pub struct CcorrRef {
    pub affinity: Vec<f64>,
    pub enhanced1: Vec<f64>,
    pub enhanced2: Vec<f64>,
}

/// `A = X₂ X₁ᵀ W_m`, `M_r` over each row, `M_c` over each column,
/// `enh₁ = M_r X₁`, `enh₂ = M_cᵀ X₂`, evaluated entry by entry.
pub fn ccorr_attention(f1: &[f64], f2: &[f64], dims: [usize; 4], wm: &[f64]) -> CcorrRef {
    let [n, c, h, w] = dims;
    let hw = h * w;
    let mut affinity = vec![0.0; n * c * c];
    let mut enhanced1 = vec![0.0; f1.len()];
    let mut enhanced2 = vec![0.0; f1.len()];
    for b in 0..n {
        let x1 = |ch: usize, p: usize| f1[(b * c + ch) * hw + p];
        let x2 = |ch: usize, p: usize| f2[(b * c + ch) * hw + p];
        let mut a = vec![vec![0.0; c]; c];
        for i in 0..c {
            for j in 0..c {
                // (X₂ X₁ᵀ W_m)[i][j] = Σ_l Σ_p X₂[i][p] X₁[l][p] W_m[l][j]
                let mut s = 0.0;
                for l in 0..c {
                    let dot: f64 = (0..hw).map(|p| x2(i, p) * x1(l, p)).sum();
                    s += dot * wm[l * c + j];
                }
                a[i][j] = s;
                affinity[(b * c + i) * c + j] = s;
            }
        }
        let mut rows = vec![vec![0.0; c]; c];
        let mut cols = vec![vec![0.0; c]; c];
        for i in 0..c {
            let z: f64 = (0..c).map(|j| a[i][j].exp()).sum();
            for j in 0..c {
                rows[i][j] = a[i][j].exp() / z;
            }
        }
        for j in 0..c {
            let z: f64 = (0..c).map(|i| a[i][j].exp()).sum();
            for i in 0..c {
                cols[i][j] = a[i][j].exp() / z;
            }
        }
        for i in 0..c {
            for p in 0..hw {
                enhanced1[(b * c + i) * hw + p] = (0..c).map(|j| rows[i][j] * x1(j, p)).sum();
                enhanced2[(b * c + i) * hw + p] = (0..c).map(|j| cols[j][i] * x2(j, p)).sum();
            }
        }
    }
    CcorrRef { affinity, enhanced1, enhanced2 }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `−mean[G·ln S + (1−G)·ln(1−S)]` with `S = σ(logits)`.
pub fn bce(logits: &[f64], g: &[f64]) -> f64 {
    logits.iter().zip(g).map(|(&x, &t)| -(t * sigmoid(x).ln() + (1.0 - t) * (1.0 - sigmoid(x)).ln())).sum::<f64>() / logits.len() as f64
}

/// Batch mean of the per-sample soft-IoU loss.
pub fn iou(s: &[f64], g: &[f64], batch: usize, eps: f64) -> f64 {
    let per = s.len() / batch;
    (0..batch)
        .map(|b| {
            let (mut inter, mut ss, mut gs) = (0.0, 0.0, 0.0);
            for i in b * per..(b + 1) * per {
                inter += s[i] * g[i];
                ss += s[i];
                gs += g[i];
            }
            1.0 - (inter + eps) / (ss + gs - inter + eps)
        })
        .sum::<f64>()
        / batch as f64
}

pub fn prelu(x: f64, a: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        a * x
    }
}

pub fn edge_align(e1: &[f64], e2: &[f64], a: f64) -> f64 {
    e1.iter().zip(e2).map(|(&x, &y)| (prelu(x, a) - prelu(y, a)).powi(2)).sum::<f64>() / e1.len() as f64
}

/// Half-pixel bilinear resize of one plane, evaluated pointwise.
pub fn bilinear(src: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let coord = |o: usize, n: usize, on: usize| {
        let s = ((o as f64 + 0.5) * n as f64 / on as f64 - 0.5).max(0.0);
        let i0 = (s.floor() as usize).min(n - 1);
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, s - i0 as f64)
    };
    let mut out = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        let (y0, y1, fy) = coord(y, h, oh);
        for x in 0..ow {
            let (x0, x1, fx) = coord(x, w, ow);
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

/// Bilinear resize then re-binarization at 0.5, per sample.
pub fn downscale_gt(g: &[f64], batch: usize, size: usize, out: usize) -> Vec<f64> {
    g.chunks(size * size)
        .take(batch)
        .flat_map(|p| bilinear(p, size, size, out, out).into_iter().map(|v| if v >= 0.5 { 1.0 } else { 0.0 }))
        .collect()
}

// ---- metric references -------------------------------------------------------------

pub const MATLAB_EPS: f64 = f64::EPSILON;

pub fn mae(s: &[f64], g: &[bool]) -> f64 {
    s.iter().zip(g).map(|(&a, &b)| (a - if b { 1.0 } else { 0.0 }).abs()).sum::<f64>() / s.len() as f64
}

/// `(precision, recall, F_β)` at each of 256 levels from a per-pixel confusion count.
pub fn f_curve(s: &[f64], g: &[bool]) -> Vec<(f64, f64, f64)> {
    (0..256)
        .map(|t| {
            let bin: Vec<bool> = s.iter().map(|&v| (v * 255.0).floor() >= t as f64).collect();
            f_at(&bin, g)
        })
        .collect()
}

pub fn f_at(bin: &[bool], g: &[bool]) -> (f64, f64, f64) {
    let tp = bin.iter().zip(g).filter(|(&b, &gg)| b && gg).count() as f64;
    let pp = bin.iter().filter(|&&b| b).count() as f64;
    let gp = g.iter().filter(|&&b| b).count() as f64;
    let p = if pp > 0.0 { tp / pp } else { 0.0 };
    let r = if gp > 0.0 { tp / gp } else { 0.0 };
    let f = if gp == 0.0 || 0.3 * p + r == 0.0 { 0.0 } else { 1.3 * p * r / (0.3 * p + r) };
    (p, r, f)
}

pub fn adaptive_bin(s: &[f64]) -> Vec<bool> {
    let thr = (2.0 * s.iter().sum::<f64>() / s.len() as f64).min(1.0);
    s.iter().map(|&v| v >= thr).collect()
}

/// Enhanced alignment of a binary map, per pixel, normalized by the pixel count.
pub fn e_at(fm: &[bool], g: &[bool]) -> f64 {
    let n = fm.len() as f64;
    let fmv: Vec<f64> = fm.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let gv: Vec<f64> = g.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let gsum: f64 = gv.iter().sum();
    let enhanced: Vec<f64> = if gsum == 0.0 {
        fmv.iter().map(|v| 1.0 - v).collect()
    } else if gsum == n {
        fmv.clone()
    } else {
        let mf = fmv.iter().sum::<f64>() / n;
        let mg = gsum / n;
        fmv.iter()
            .zip(&gv)
            .map(|(f, gg)| {
                let (af, ag) = (f - mf, gg - mg);
                let align = 2.0 * ag * af / (ag * ag + af * af + MATLAB_EPS);
                (align + 1.0) * (align + 1.0) / 4.0
            })
            .collect()
    };
    enhanced.iter().sum::<f64>() / n
}

pub fn e_curve(s: &[f64], g: &[bool]) -> Vec<f64> {
    (0..256)
        .map(|t| {
            let bin: Vec<bool> = s.iter().map(|&v| (v * 255.0).floor() >= t as f64).collect();
            e_at(&bin, g)
        })
        .collect()
}

/// Structure measure written as a literal transcription of the published algorithm,
/// on row-major 2-D arrays with 1-based centroid arithmetic.
pub fn s_measure(s: &[f64], g: &[bool], h: usize, w: usize) -> f64 {
    let pred: Vec<Vec<f64>> = (0..h).map(|r| s[r * w..(r + 1) * w].to_vec()).collect();
    let gt: Vec<Vec<bool>> = (0..h).map(|r| g[r * w..(r + 1) * w].to_vec()).collect();
    let y = g.iter().filter(|&&b| b).count() as f64 / (h * w) as f64;
    let mean_pred = s.iter().sum::<f64>() / (h * w) as f64;
    if y == 0.0 {
        return 1.0 - mean_pred;
    }
    if y == 1.0 {
        return mean_pred;
    }
    let q = 0.5 * s_object_ref(&pred, &gt) + 0.5 * s_region_ref(&pred, &gt);
    q.max(0.0)
}

fn object_ref(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let x = values.iter().sum::<f64>() / n;
    let sigma = if values.len() > 1 { (values.iter().map(|v| (v - x).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    2.0 * x / (x * x + 1.0 + sigma + MATLAB_EPS)
}

fn s_object_ref(pred: &[Vec<f64>], gt: &[Vec<bool>]) -> f64 {
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    // Column-major gathering like the reference; order does not affect the statistics.
    for c in 0..pred[0].len() {
        for r in 0..pred.len() {
            if gt[r][c] {
                fg.push(pred[r][c]);
            } else {
                bg.push(1.0 - pred[r][c]);
            }
        }
    }
    let u = fg.len() as f64 / (fg.len() + bg.len()) as f64;
    u * object_ref(&fg) + (1.0 - u) * object_ref(&bg)
}

fn ssim_ref(p: &[f64], g: &[f64]) -> f64 {
    let n = p.len() as f64;
    let x = p.iter().sum::<f64>() / n;
    let y = g.iter().sum::<f64>() / n;
    let sx2 = p.iter().map(|v| (v - x).powi(2)).sum::<f64>() / (n - 1.0 + MATLAB_EPS);
    let sy2 = g.iter().map(|v| (v - y).powi(2)).sum::<f64>() / (n - 1.0 + MATLAB_EPS);
    let sxy = p.iter().zip(g).map(|(a, b)| (a - x) * (b - y)).sum::<f64>() / (n - 1.0 + MATLAB_EPS);
    let alpha = 4.0 * x * y * sxy;
    let beta = (x * x + y * y) * (sx2 + sy2);
    if alpha != 0.0 {
        alpha / (beta + MATLAB_EPS)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

fn s_region_ref(pred: &[Vec<f64>], gt: &[Vec<bool>]) -> f64 {
    let (rows, cols) = (gt.len(), gt[0].len());
    let total: f64 = gt.iter().flatten().filter(|&&b| b).count() as f64;
    let col_sums: Vec<f64> = (0..cols).map(|c| (0..rows).filter(|&r| gt[r][c]).count() as f64).collect();
    let row_sums: Vec<f64> = (0..rows).map(|r| gt[r].iter().filter(|&&b| b).count() as f64).collect();
    let x = (col_sums.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum::<f64>() / total).round() as usize;
    let y = (row_sums.iter().enumerate().map(|(j, v)| (j + 1) as f64 * v).sum::<f64>() / total).round() as usize;
    let area = (rows * cols) as f64;
    let block = |r0: usize, r1: usize, c0: usize, c1: usize| {
        let mut p = Vec::new();
        let mut g = Vec::new();
        for r in r0..r1 {
            for c in c0..c1 {
                p.push(pred[r][c]);
                g.push(if gt[r][c] { 1.0 } else { 0.0 });
            }
        }
        (p, g)
    };
    let quads = [block(0, y, 0, x), block(0, y, x, cols), block(y, rows, 0, x), block(y, rows, x, cols)];
    let w1 = (x * y) as f64 / area;
    let w2 = ((cols - x) * y) as f64 / area;
    let w3 = (x * (rows - y)) as f64 / area;
    let weights = [w1, w2, w3, 1.0 - w1 - w2 - w3];
    quads
        .iter()
        .zip(weights)
        .map(|((p, g), wgt)| if p.is_empty() { 0.0 } else { wgt * ssim_ref(p, g) })
        .sum()
}

/// Central finite differences of `f` at `x` along the selected coordinates.
pub fn finite_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], idx: &[usize], h: f64) -> Vec<f64> {
    idx.iter()
        .map(|&i| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            (f(&xp) - f(&xm)) / (2.0 * h)
        })
        .collect()
}

/// Gradient agreement used by all checks: `|a − n| ≤ tol · max(|a|, |n|, floor)`.
pub fn grad_close(analytic: f64, numeric: f64, tol: f64, floor: f64) -> bool {
    (analytic - numeric).abs() <= tol * analytic.abs().max(numeric.abs()).max(floor)
}
