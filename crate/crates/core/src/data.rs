//! Dataset discovery, preprocessing and paired augmentation.
//!
//! A split is found under the dataset root in either layout:
//!
//! ```text
//! <root>/<split>-images/*.jpg   <root>/<split>-labels/*.png     (EORSSD / ORSSD releases)
//! <root>/<split>/images/*.jpg   <root>/<split>/GT/*.png         (also `masks/`, `labels/`, `gt/`)
//! ```
//!
//! Images and masks are paired by file stem.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageReader, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seanet_tensor::{resize_bilinear_plane, Element, Tensor};
use sha2::{Digest, Sha256};

use crate::config::{AugmentConfig, Normalization};
use crate::error::{Error, Result};

const IMAGE_EXTENSIONS: [&str; 6] = ["png", "jpg", "jpeg", "bmp", "tif", "tiff"];
const IMAGE_DIRS: [&str; 2] = ["images", "image"];
const MASK_DIRS: [&str; 5] = ["GT", "gt", "masks", "labels", "mask"];

/// `(stem, path)` for every image file directly inside `dir`, sorted by stem.
pub fn list_images(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out: BTreeMap<String, PathBuf> = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !path.is_file() || !ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        if let Some(prev) = out.insert(stem.clone(), path.clone()) {
            return Err(Error::Dataset(format!("stem `{stem}` is ambiguous: {} and {}", prev.display(), path.display())));
        }
    }
    Ok(out.into_iter().collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairPaths {
    pub stem: String,
    pub image: PathBuf,
    pub mask: PathBuf,
}

#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub root: PathBuf,
    pub split: String,
    pub pairs: Vec<PairPaths>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Image and mask directories of `split`, whichever supported layout is present.
pub fn split_dirs(root: &Path, split: &str) -> Result<(PathBuf, PathBuf)> {
    let flat = (root.join(format!("{split}-images")), root.join(format!("{split}-labels")));
    if flat.0.is_dir() && flat.1.is_dir() {
        return Ok(flat);
    }
    let base = root.join(split);
    let find = |names: &[&str]| names.iter().map(|n| base.join(n)).find(|p| p.is_dir());
    match (find(&IMAGE_DIRS), find(&MASK_DIRS)) {
        (Some(i), Some(m)) => Ok((i, m)),
        _ => Err(Error::Dataset(format!(
            "no `{split}` split under {}: expected {split}-images/ + {split}-labels/ or {split}/images/ + {split}/GT/",
            root.display()
        ))),
    }
}

/// Stem-matched, sorted pairs of a split. Orphans on either side are an error.
pub fn load_split(root: &Path, split: &str) -> Result<DatasetSplit> {
    let (image_dir, mask_dir) = split_dirs(root, split)?;
    let images: BTreeMap<String, PathBuf> = list_images(&image_dir)?.into_iter().collect();
    let masks: BTreeMap<String, PathBuf> = list_images(&mask_dir)?.into_iter().collect();
    let mut orphans: Vec<String> = images.keys().filter(|k| !masks.contains_key(*k)).map(|k| format!("image {k}")).collect();
    orphans.extend(masks.keys().filter(|k| !images.contains_key(*k)).map(|k| format!("mask {k}")));
    if !orphans.is_empty() {
        return Err(Error::Dataset(format!("unpaired files in `{split}`: {}", orphans.join(", "))));
    }
    if images.is_empty() {
        return Err(Error::Dataset(format!("split `{split}` under {} is empty", root.display())));
    }
    let pairs = images
        .into_iter()
        .map(|(stem, image)| {
            let mask = masks[&stem].clone();
            PairPaths { stem, image, mask }
        })
        .collect();
    Ok(DatasetSplit { root: root.to_path_buf(), split: split.to_string(), pairs })
}

fn open(path: &Path) -> Result<image::DynamicImage> {
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let reader = reader.with_guessed_format().map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

/// Single-channel 8-bit pixels, `(data, height, width)`.
pub fn read_gray(path: &Path) -> Result<(Vec<u8>, usize, usize)> {
    let img = open(path)?.into_luma8();
    let (w, h) = img.dimensions();
    Ok((img.into_raw(), h as usize, w as usize))
}

/// Interleaved RGB pixels, `(data, height, width)`.
pub fn read_rgb(path: &Path) -> Result<(Vec<u8>, usize, usize)> {
    let img = open(path)?.into_rgb8();
    let (w, h) = img.dimensions();
    Ok((img.into_raw(), h as usize, w as usize))
}

pub fn write_gray(path: &Path, data: &[u8], h: usize, w: usize) -> Result<()> {
    let img = GrayImage::from_raw(w as u32, h as u32, data.to_vec())
        .ok_or_else(|| Error::Shape(format!("gray image buffer of {} bytes is not {h}x{w}", data.len())))?;
    img.save(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

pub fn write_rgb(path: &Path, data: &[u8], h: usize, w: usize) -> Result<()> {
    let img = RgbImage::from_raw(w as u32, h as u32, data.to_vec())
        .ok_or_else(|| Error::Shape(format!("rgb image buffer of {} bytes is not {h}x{w}", data.len())))?;
    img.save(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

/// 8-bit mask to foreground flags, `v ≥ 128`.
pub fn binarize_mask(data: &[u8]) -> Vec<bool> {
    data.iter().map(|&v| v >= 128).collect()
}

/// Nearest-neighbour resize sampling source pixel `⌊(i + ½)·h/oh⌋`.
pub fn resize_nearest<P: Copy>(src: &[P], h: usize, w: usize, oh: usize, ow: usize) -> Vec<P> {
    let idx = |i: usize, n: usize, on: usize| (((2 * i + 1) * n) / (2 * on)).min(n - 1);
    let mut out = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        let sy = idx(y, h, oh);
        out.extend((0..ow).map(|x| src[sy * w + idx(x, w, ow)]));
    }
    out
}

/// One preprocessed training or test pair, square `size × size`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub stem: String,
    pub size: usize,
    /// Normalized CHW image, `3·size²` values.
    pub image: Vec<f32>,
    /// Binary mask, `size²` values in `{0, 1}`.
    pub gt: Vec<f32>,
    /// `(height, width)` of the source image.
    pub original_size: (usize, usize),
}

/// Interleaved RGB to normalized CHW at `size × size` (bilinear).
pub fn preprocess_rgb(rgb: &[u8], h: usize, w: usize, size: usize, norm: &Normalization) -> Vec<f32> {
    let mut out = Vec::with_capacity(3 * size * size);
    for c in 0..3 {
        let plane: Vec<f32> = rgb.iter().skip(c).step_by(3).map(|&v| f32::from(v) / 255.0).collect();
        let resized = if (h, w) == (size, size) { plane } else { resize_bilinear_plane(&plane, h, w, size, size) };
        out.extend(resized.into_iter().map(|v| (v - norm.mean[c]) / norm.std[c]));
    }
    out
}

pub fn preprocess(pair: &PairPaths, size: usize, norm: &Normalization) -> Result<Sample> {
    let (rgb, h, w) = read_rgb(&pair.image)?;
    let (mask, mh, mw) = read_gray(&pair.mask)?;
    let gt = resize_nearest(&binarize_mask(&mask), mh, mw, size, size);
    Ok(Sample {
        stem: pair.stem.clone(),
        size,
        image: preprocess_rgb(&rgb, h, w, size, norm),
        gt: gt.into_iter().map(|g| if g { 1.0 } else { 0.0 }).collect(),
        original_size: (h, w),
    })
}

/// Geometric transform drawn for one sample, applied identically to image and mask.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AugmentParams {
    pub hflip: bool,
    pub vflip: bool,
    /// Counter-clockwise quarter turns, `0..4`.
    pub quarter_turns: u8,
    /// Extra counter-clockwise rotation in degrees.
    pub angle_deg: Option<f64>,
}

impl AugmentParams {
    pub fn draw(cfg: &AugmentConfig, rng: &mut impl Rng) -> Self {
        Self {
            hflip: cfg.hflip && rng.random_bool(0.5),
            vflip: cfg.vflip && rng.random_bool(0.5),
            quarter_turns: if cfg.rot90 { rng.random_range(0..4) } else { 0 },
            angle_deg: cfg.max_rotation_deg.filter(|&d| d > 0.0).map(|d| rng.random_range(-d..=d)),
        }
    }
}

/// Independent stream for sample `index` in `epoch`, so worker order never matters.
pub fn sample_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(b"augment");
    h.update(seed.to_le_bytes());
    h.update((epoch as u64).to_le_bytes());
    h.update((index as u64).to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

fn flip_h<P: Copy>(p: &[P], s: usize) -> Vec<P> {
    (0..s * s).map(|i| p[(i / s) * s + (s - 1 - i % s)]).collect()
}

fn flip_v<P: Copy>(p: &[P], s: usize) -> Vec<P> {
    (0..s * s).map(|i| p[(s - 1 - i / s) * s + i % s]).collect()
}

/// One counter-clockwise quarter turn: `out[r][c] = in[c][s−1−r]`.
fn rot90<P: Copy>(p: &[P], s: usize) -> Vec<P> {
    (0..s * s).map(|i| p[(i % s) * s + (s - 1 - i / s)]).collect()
}

/// Rotation about the center with zero fill; bilinear when `smooth`, else nearest.
fn rotate(p: &[f32], s: usize, deg: f64, smooth: bool) -> Vec<f32> {
    let (sin, cos) = deg.to_radians().sin_cos();
    let c = (s as f64 - 1.0) / 2.0;
    let at = |y: isize, x: isize| if y < 0 || x < 0 || y >= s as isize || x >= s as isize { 0.0 } else { p[y as usize * s + x as usize] };
    let mut out = Vec::with_capacity(s * s);
    for y in 0..s {
        for x in 0..s {
            let (dx, dy) = (x as f64 - c, y as f64 - c);
            // Inverse map of a counter-clockwise turn in image coordinates (y down).
            let sx = cos * dx - sin * dy + c;
            let sy = sin * dx + cos * dy + c;
            out.push(if smooth {
                let (x0, y0) = (sx.floor(), sy.floor());
                let (fx, fy) = ((sx - x0) as f32, (sy - y0) as f32);
                let (x0, y0) = (x0 as isize, y0 as isize);
                (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) + fy * ((1.0 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1))
            } else {
                at(sy.round() as isize, sx.round() as isize)
            });
        }
    }
    out
}

fn transform_plane(p: &[f32], s: usize, params: &AugmentParams, smooth: bool) -> Vec<f32> {
    let mut out = p.to_vec();
    if params.hflip {
        out = flip_h(&out, s);
    }
    if params.vflip {
        out = flip_v(&out, s);
    }
    for _ in 0..params.quarter_turns {
        out = rot90(&out, s);
    }
    if let Some(deg) = params.angle_deg {
        out = rotate(&out, s, deg, smooth);
    }
    out
}

pub fn apply_augment(sample: &Sample, params: &AugmentParams) -> Sample {
    let s = sample.size;
    let image = sample.image.chunks(s * s).flat_map(|p| transform_plane(p, s, params, true)).collect();
    Sample { image, gt: transform_plane(&sample.gt, s, params, false), ..sample.clone() }
}

pub fn augment(sample: &Sample, cfg: &AugmentConfig, rng: &mut impl Rng) -> Sample {
    apply_augment(sample, &AugmentParams::draw(cfg, rng))
}

/// SHA-256 over the little-endian bytes of image and mask.
pub fn sample_hash(sample: &Sample) -> String {
    let mut h = Sha256::new();
    for v in sample.image.iter().chain(&sample.gt) {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Stacks samples into `(N, 3, s, s)` images and `(N, 1, s, s)` masks.
pub fn collate<T: Element>(samples: &[Sample]) -> Result<(Tensor<T>, Tensor<T>)> {
    let s = samples.first().ok_or_else(|| Error::Dataset("empty batch".into()))?.size;
    if samples.iter().any(|x| x.size != s) {
        return Err(Error::Shape("batch mixes sample sizes".into()));
    }
    let n = samples.len();
    let images = samples.iter().flat_map(|x| x.image.iter().map(|&v| T::of(f64::from(v)))).collect();
    let gts = samples.iter().flat_map(|x| x.gt.iter().map(|&v| T::of(f64::from(v)))).collect();
    Ok((Tensor::from_vec(images, &[n, 3, s, s])?, Tensor::from_vec(gts, &[n, 1, s, s])?))
}

/// Synthetic scene: a bright ellipse or rectangle on a noisy darker background.
///
/// Returns interleaved RGB and the matching 8-bit mask. The object differs from the
/// background in color and texture so a small network can learn to segment it.
pub fn synthetic_scene(size: usize, rng: &mut impl Rng) -> (Vec<u8>, Vec<u8>) {
    let s = size as f64;
    let (cy, cx) = (rng.random_range(0.3..0.7) * s, rng.random_range(0.3..0.7) * s);
    let (ry, rx) = (rng.random_range(0.12..0.3) * s, rng.random_range(0.12..0.3) * s);
    let ellipse = rng.random_bool(0.5);
    let fg: [f64; 3] = [rng.random_range(150.0..230.0), rng.random_range(120.0..220.0), rng.random_range(60.0..140.0)];
    let bg: [f64; 3] = [rng.random_range(30.0..90.0), rng.random_range(50.0..110.0), rng.random_range(40.0..100.0)];
    let mut rgb = Vec::with_capacity(3 * size * size);
    let mut mask = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (dy, dx) = ((y as f64 + 0.5 - cy) / ry, (x as f64 + 0.5 - cx) / rx);
            let inside = if ellipse { dy * dy + dx * dx <= 1.0 } else { dy.abs() <= 1.0 && dx.abs() <= 1.0 };
            let base = if inside { fg } else { bg };
            for v in base {
                rgb.push((v + rng.random_range(-20.0..20.0)).clamp(0.0, 255.0) as u8);
            }
            mask.push(if inside { 255 } else { 0 });
        }
    }
    (rgb, mask)
}

/// Writes `n` synthetic pairs in the `<split>-images` / `<split>-labels` layout.
pub fn write_synthetic_split(root: &Path, split: &str, n: usize, size: usize, seed: u64) -> Result<()> {
    let images = root.join(format!("{split}-images"));
    let labels = root.join(format!("{split}-labels"));
    for d in [&images, &labels] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        let (rgb, mask) = synthetic_scene(size, &mut rng);
        write_rgb(&images.join(format!("{i:04}.png")), &rgb, size, size)?;
        write_gray(&labels.join(format!("{i:04}.png")), &mask, size, size)?;
    }
    Ok(())
}
