//! Salient object detection metrics: MAE, F-measure, E-measure and S-measure.
//!
//! Conventions follow the community evaluation toolboxes so numbers are comparable:
//! threshold sweeps binarize `⌊255·S⌋ ≥ t` for `t ∈ 0..=255`, adaptive thresholds
//! binarize `S ≥ min(2·mean(S), 1)`, dataset max/mean scores are taken over the
//! image-averaged curve, and predictions are min-max normalized unless constant.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{binarize_mask, list_images, read_gray};
use crate::error::{Error, Result};
use seanet_tensor::resize_bilinear_plane;

pub const BETA2: f64 = 0.3;
pub const ALPHA: f64 = 0.5;
pub const THRESHOLDS: usize = 256;
/// Double-precision machine epsilon, the regularizer of the reference definitions.
const EPS: f64 = f64::EPSILON;

fn check_len(pred: &[f64], gt: &[bool]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!("metric: prediction has {} pixels, ground truth {}", pred.len(), gt.len())));
    }
    if pred.is_empty() {
        return Err(Error::Shape("metric: empty map".into()));
    }
    Ok(())
}

fn as_f64(g: bool) -> f64 {
    if g {
        1.0
    } else {
        0.0
    }
}

/// Rescales to `[0, 1]` unless the map is constant, in which case it is left as is.
pub fn normalize_prediction(pred: &mut [f64]) {
    let (lo, hi) = pred.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi > lo {
        pred.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
    }
}

pub fn mae(pred: &[f64], gt: &[bool]) -> Result<f64> {
    check_len(pred, gt)?;
    Ok(pred.iter().zip(gt).map(|(&s, &g)| (s - as_f64(g)).abs()).sum::<f64>() / pred.len() as f64)
}

fn adaptive_threshold(pred: &[f64]) -> f64 {
    (2.0 * pred.iter().sum::<f64>() / pred.len() as f64).min(1.0)
}

/// Sweep level of a prediction value: `⌊255·s⌋` clamped to `0..=255`.
fn level(s: f64) -> usize {
    ((s * 255.0).floor().max(0.0) as usize).min(THRESHOLDS - 1)
}

/// Confusion counts of a binarized prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Confusion {
    tp: u64,
    fp: u64,
    fn_: u64,
    tn: u64,
}

impl Confusion {
    fn at(pred: &[f64], gt: &[bool], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for (&s, &g) in pred.iter().zip(gt) {
            c.add(s >= threshold, g);
        }
        c
    }

    fn add(&mut self, p: bool, g: bool) {
        match (p, g) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    /// One confusion matrix per sweep threshold, from cumulative level histograms.
    fn sweep(pred: &[f64], gt: &[bool]) -> Vec<Self> {
        let mut fg = [0u64; THRESHOLDS];
        let mut bg = [0u64; THRESHOLDS];
        for (&s, &g) in pred.iter().zip(gt) {
            if g {
                fg[level(s)] += 1;
            } else {
                bg[level(s)] += 1;
            }
        }
        let (n_fg, n_bg): (u64, u64) = (fg.iter().sum(), bg.iter().sum());
        let mut out = vec![Confusion::default(); THRESHOLDS];
        let (mut tp, mut fp) = (0, 0);
        for t in (0..THRESHOLDS).rev() {
            tp += fg[t];
            fp += bg[t];
            out[t] = Confusion { tp, fp, fn_: n_fg - tp, tn: n_bg - fp };
        }
        out
    }

    fn precision_recall(&self) -> (f64, f64) {
        let predicted = self.tp + self.fp;
        let actual = self.tp + self.fn_;
        let p = if predicted == 0 { 0.0 } else { self.tp as f64 / predicted as f64 };
        let r = if actual == 0 { 0.0 } else { self.tp as f64 / actual as f64 };
        (p, r)
    }

    fn f_beta(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            return 0.0;
        }
        let (p, r) = self.precision_recall();
        let denom = BETA2 * p + r;
        if denom == 0.0 {
            0.0
        } else {
            (1.0 + BETA2) * p * r / denom
        }
    }

    /// Enhanced-alignment score of the binarized prediction; the aligned matrix takes
    /// one value per confusion cell, so the pixel sum collapses to four terms.
    fn enhanced_alignment(&self) -> f64 {
        let n = (self.tp + self.fp + self.fn_ + self.tn) as f64;
        let fg_pred = (self.tp + self.fp) as f64;
        let fg_gt = (self.tp + self.fn_) as f64;
        let sum = if fg_gt == 0.0 {
            n - fg_pred
        } else if fg_gt == n {
            fg_pred
        } else {
            let (mu_p, mu_g) = (fg_pred / n, fg_gt / n);
            let cell = |p: f64, g: f64| {
                let (ap, ag) = (p - mu_p, g - mu_g);
                let align = 2.0 * ag * ap / (ag * ag + ap * ap + EPS);
                (align + 1.0).powi(2) / 4.0
            };
            self.tp as f64 * cell(1.0, 1.0)
                + self.fp as f64 * cell(1.0, 0.0)
                + self.fn_ as f64 * cell(0.0, 1.0)
                + self.tn as f64 * cell(0.0, 0.0)
        };
        sum / n
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f: Vec<f64>,
    pub e: Vec<f64>,
}

impl Curve {
    fn zeros() -> Self {
        let z = vec![0.0; THRESHOLDS];
        Curve { precision: z.clone(), recall: z.clone(), f: z.clone(), e: z }
    }

    fn accumulate(&mut self, other: &Curve) {
        for (a, b) in [
            (&mut self.precision, &other.precision),
            (&mut self.recall, &other.recall),
            (&mut self.f, &other.f),
            (&mut self.e, &other.e),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    fn scale(&mut self, k: f64) {
        for v in [&mut self.precision, &mut self.recall, &mut self.f, &mut self.e] {
            v.iter_mut().for_each(|x| *x *= k);
        }
    }

    /// CSV with one row per threshold level.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "threshold,precision,recall,f_measure,e_measure")?;
        for t in 0..THRESHOLDS {
            writeln!(out, "{},{},{},{},{}", t, self.precision[t], self.recall[t], self.f[t], self.e[t])?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepScores {
    pub max: f64,
    pub mean: f64,
    pub adaptive: f64,
}

fn max_mean(curve: &[f64]) -> (f64, f64) {
    let max = curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (max, curve.iter().sum::<f64>() / curve.len() as f64)
}

/// F-measure with `β² = 0.3`. Returns the scores and the `(precision, recall, F)` curves.
pub fn f_measure(pred: &[f64], gt: &[bool]) -> Result<(SweepScores, Vec<(f64, f64, f64)>)> {
    check_len(pred, gt)?;
    let curve: Vec<(f64, f64, f64)> = Confusion::sweep(pred, gt)
        .iter()
        .map(|c| {
            let (p, r) = c.precision_recall();
            (p, r, c.f_beta())
        })
        .collect();
    let fs: Vec<f64> = curve.iter().map(|c| c.2).collect();
    let (max, mean) = max_mean(&fs);
    let adaptive = Confusion::at(pred, gt, adaptive_threshold(pred)).f_beta();
    Ok((SweepScores { max, mean, adaptive }, curve))
}

/// Enhanced-alignment measure over the threshold sweep and at the adaptive threshold.
pub fn e_measure(pred: &[f64], gt: &[bool]) -> Result<(SweepScores, Vec<f64>)> {
    check_len(pred, gt)?;
    let curve: Vec<f64> = Confusion::sweep(pred, gt).iter().map(Confusion::enhanced_alignment).collect();
    let (max, mean) = max_mean(&curve);
    let adaptive = Confusion::at(pred, gt, adaptive_threshold(pred)).enhanced_alignment();
    Ok((SweepScores { max, mean, adaptive }, curve))
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn object_score(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (x, sigma) = mean_std(values);
    2.0 * x / (x * x + 1.0 + sigma + EPS)
}

fn s_object(pred: &[f64], gt: &[bool]) -> f64 {
    let fg = object_score(pred.iter().zip(gt).filter(|(_, &g)| g).map(|(&s, _)| s));
    let bg = object_score(pred.iter().zip(gt).filter(|(_, &g)| !g).map(|(&s, _)| 1.0 - s));
    let u = gt.iter().filter(|&&g| g).count() as f64 / gt.len() as f64;
    u * fg + (1.0 - u) * bg
}

/// Structural similarity of one quadrant; an empty quadrant scores 0 (its weight is 0).
fn region_ssim(pred: &[f64], gt: &[f64]) -> f64 {
    let n = pred.len() as f64;
    if pred.is_empty() {
        return 0.0;
    }
    let x = pred.iter().sum::<f64>() / n;
    let y = gt.iter().sum::<f64>() / n;
    let denom = n - 1.0 + EPS;
    let sx2 = pred.iter().map(|v| (v - x).powi(2)).sum::<f64>() / denom;
    let sy2 = gt.iter().map(|v| (v - y).powi(2)).sum::<f64>() / denom;
    let sxy = pred.iter().zip(gt).map(|(a, b)| (a - x) * (b - y)).sum::<f64>() / denom;
    let alpha = 4.0 * x * y * sxy;
    let beta = (x * x + y * y) * (sx2 + sy2);
    if alpha != 0.0 {
        alpha / (beta + EPS)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Column and row counts `(X, Y)` of the top-left quadrant: the rounded 1-based
/// foreground centroid, or the image center when there is no foreground.
fn centroid(gt: &[bool], h: usize, w: usize) -> (usize, usize) {
    let total = gt.iter().filter(|&&g| g).count();
    if total == 0 {
        return ((w as f64 / 2.0).round() as usize, (h as f64 / 2.0).round() as usize);
    }
    let (mut sx, mut sy) = (0.0, 0.0);
    for (i, _) in gt.iter().enumerate().filter(|(_, &g)| g) {
        sx += (i % w + 1) as f64;
        sy += (i / w + 1) as f64;
    }
    ((sx / total as f64).round() as usize, (sy / total as f64).round() as usize)
}

fn s_region(pred: &[f64], gt: &[bool], h: usize, w: usize) -> f64 {
    let (cx, cy) = centroid(gt, h, w);
    let area = (h * w) as f64;
    let quadrant = |rows: std::ops::Range<usize>, cols: std::ops::Range<usize>| {
        let mut p = Vec::with_capacity(rows.len() * cols.len());
        let mut g = Vec::with_capacity(p.capacity());
        for r in rows {
            for c in cols.clone() {
                p.push(pred[r * w + c]);
                g.push(as_f64(gt[r * w + c]));
            }
        }
        region_ssim(&p, &g)
    };
    let w1 = (cx * cy) as f64 / area;
    let w2 = ((w - cx) * cy) as f64 / area;
    let w3 = (cx * (h - cy)) as f64 / area;
    let w4 = 1.0 - w1 - w2 - w3;
    w1 * quadrant(0..cy, 0..cx) + w2 * quadrant(0..cy, cx..w) + w3 * quadrant(cy..h, 0..cx) + w4 * quadrant(cy..h, cx..w)
}

/// Structure measure with `α = 0.5` on an `h × w` map.
pub fn s_measure(pred: &[f64], gt: &[bool], h: usize, w: usize) -> Result<f64> {
    check_len(pred, gt)?;
    if h * w != pred.len() {
        return Err(Error::Shape(format!("s-measure: {h}x{w} does not match {} pixels", pred.len())));
    }
    let y = gt.iter().filter(|&&g| g).count() as f64 / gt.len() as f64;
    let mean_pred = pred.iter().sum::<f64>() / pred.len() as f64;
    if y == 0.0 {
        return Ok(1.0 - mean_pred);
    }
    if y == 1.0 {
        return Ok(mean_pred);
    }
    let q = ALPHA * s_object(pred, gt) + (1.0 - ALPHA) * s_region(pred, gt, h, w);
    Ok(q.max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub stem: String,
    pub mae: f64,
    pub s_alpha: f64,
    pub f_max: f64,
    pub f_mean: f64,
    pub f_adp: f64,
    pub e_max: f64,
    pub e_mean: f64,
    pub e_adp: f64,
}

/// All metrics of one prediction; `pred` is normalized in place first.
pub fn evaluate_pair(stem: &str, pred: &mut [f64], gt: &[bool], h: usize, w: usize) -> Result<(ImageMetrics, Curve)> {
    normalize_prediction(pred);
    let (f, fc) = f_measure(pred, gt)?;
    let (e, ec) = e_measure(pred, gt)?;
    let metrics = ImageMetrics {
        stem: stem.to_string(),
        mae: mae(pred, gt)?,
        s_alpha: s_measure(pred, gt, h, w)?,
        f_max: f.max,
        f_mean: f.mean,
        f_adp: f.adaptive,
        e_max: e.max,
        e_mean: e.mean,
        e_adp: e.adaptive,
    };
    let curve = Curve {
        precision: fc.iter().map(|c| c.0).collect(),
        recall: fc.iter().map(|c| c.1).collect(),
        f: fc.iter().map(|c| c.2).collect(),
        e: ec,
    };
    Ok((metrics, curve))
}

pub const NORMALIZATION_NOTE: &str =
    "predictions resized bilinearly to ground-truth size, then min-max normalized unless constant; ground truth binarized at >= 128";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub s_alpha: f64,
    pub f_max: f64,
    pub f_mean: f64,
    pub f_adp: f64,
    pub e_max: f64,
    pub e_mean: f64,
    pub e_adp: f64,
    pub mae: f64,
    pub images: usize,
    pub normalization: String,
    /// Stems present on only one side, skipped.
    pub missing: Vec<String>,
    pub per_image: Vec<ImageMetrics>,
}

impl MetricReport {
    /// Dataset scores: per-image averages, except max/mean of F and E which are taken
    /// over the image-averaged threshold curves.
    pub fn aggregate(per_image: Vec<ImageMetrics>, curves: &[Curve], missing: Vec<String>) -> Result<(Self, Curve)> {
        if per_image.is_empty() {
            return Err(Error::Dataset("no prediction/ground-truth pairs to evaluate".into()));
        }
        let n = per_image.len() as f64;
        let avg = |f: fn(&ImageMetrics) -> f64| per_image.iter().map(f).sum::<f64>() / n;
        let mut mean_curve = Curve::zeros();
        curves.iter().for_each(|c| mean_curve.accumulate(c));
        mean_curve.scale(1.0 / curves.len() as f64);
        let (f_max, f_mean) = max_mean(&mean_curve.f);
        let (e_max, e_mean) = max_mean(&mean_curve.e);
        let report = MetricReport {
            s_alpha: avg(|m| m.s_alpha),
            f_max,
            f_mean,
            f_adp: avg(|m| m.f_adp),
            e_max,
            e_mean,
            e_adp: avg(|m| m.e_adp),
            mae: avg(|m| m.mae),
            images: per_image.len(),
            normalization: NORMALIZATION_NOTE.into(),
            missing,
            per_image,
        };
        Ok((report, mean_curve))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Prediction in `[0, 1]` resized bilinearly to `(h, w)`.
pub fn load_prediction(path: &Path, h: usize, w: usize) -> Result<Vec<f64>> {
    let (data, ph, pw) = read_gray(path)?;
    let plane: Vec<f64> = data.iter().map(|&v| f64::from(v) / 255.0).collect();
    Ok(if (ph, pw) == (h, w) { plane } else { resize_bilinear_plane(&plane, ph, pw, h, w) })
}

/// Evaluates every same-stem pair of `pred_dir` and `gt_dir` in sorted stem order.
pub fn evaluate_folder(pred_dir: &Path, gt_dir: &Path) -> Result<(MetricReport, Curve)> {
    let preds: BTreeMap<String, PathBuf> = list_images(pred_dir)?.into_iter().collect();
    let gts: BTreeMap<String, PathBuf> = list_images(gt_dir)?.into_iter().collect();
    let mut missing: Vec<String> = preds.keys().filter(|k| !gts.contains_key(*k)).cloned().collect();
    missing.extend(gts.keys().filter(|k| !preds.contains_key(*k)).cloned());
    missing.sort();
    if !missing.is_empty() {
        log::warn!("{} unmatched files skipped", missing.len());
    }
    let mut per_image = Vec::new();
    let mut curves = Vec::new();
    for (stem, gt_path) in &gts {
        let Some(pred_path) = preds.get(stem) else { continue };
        let (raw, h, w) = read_gray(gt_path)?;
        let gt = binarize_mask(&raw);
        let mut pred = load_prediction(pred_path, h, w)?;
        let (m, c) = evaluate_pair(stem, &mut pred, &gt, h, w)?;
        per_image.push(m);
        curves.push(c);
    }
    MetricReport::aggregate(per_image, &curves, missing)
}
