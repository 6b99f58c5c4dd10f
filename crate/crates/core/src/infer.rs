//! Saliency prediction for image folders.

use std::path::Path;

use seanet_tensor::{no_grad, resize_bilinear_plane, Element, Tensor};

use crate::config::Normalization;
use crate::data::{list_images, preprocess_rgb, read_rgb, write_gray, write_rgb};
use crate::error::{Error, Result};
use crate::model::SeaNet;
use crate::nn::Ctx;

/// `S¹` for one RGB image, resized back to `(h, w)` and quantized to 8 bits.
pub fn predict_rgb<T: Element>(model: &SeaNet<T>, rgb: &[u8], h: usize, w: usize, norm: &Normalization) -> Result<Vec<u8>> {
    let s = model.input_size();
    let x: Vec<T> = preprocess_rgb(rgb, h, w, s, norm).into_iter().map(|v| T::of(f64::from(v))).collect();
    let x = Tensor::from_vec(x, &[1, 3, s, s])?;
    let out = no_grad(|| model.forward(&x, &Ctx::eval()))?;
    let map: Vec<f64> = out.saliency.maps[0].data().iter().map(|v| v.to_f64().unwrap_or(0.0)).collect();
    let map = if (h, w) == (s, s) { map } else { resize_bilinear_plane(&map, s, s, h, w) };
    Ok(map.into_iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect())
}

/// Writes `<stem>.png` for every image in `image_dir`, plus `<stem>_vis.png` (image and
/// map side by side) when `visualize` is set. Returns the number of images processed.
pub fn infer_dir<T: Element>(model: &SeaNet<T>, image_dir: &Path, out_dir: &Path, norm: &Normalization, visualize: bool) -> Result<usize> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let images = list_images(image_dir)?;
    for (stem, path) in &images {
        let (rgb, h, w) = read_rgb(path)?;
        let map = predict_rgb(model, &rgb, h, w, norm)?;
        write_gray(&out_dir.join(format!("{stem}.png")), &map, h, w)?;
        if visualize {
            let mut vis = Vec::with_capacity(h * 2 * w * 3);
            for y in 0..h {
                vis.extend_from_slice(&rgb[y * w * 3..(y + 1) * w * 3]);
                for &v in &map[y * w..(y + 1) * w] {
                    vis.extend_from_slice(&[v, v, v]);
                }
            }
            write_rgb(&out_dir.join(format!("{stem}_vis.png")), &vis, h, 2 * w)?;
        }
    }
    Ok(images.len())
}
