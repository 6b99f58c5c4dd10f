//! Safetensors checkpoints of full models and pretrained encoder import.
//!
//! Checkpoints hold every parameter and buffer as `F32` plus metadata with the model
//! configuration, so a model can be rebuilt without the training config.

use std::collections::HashMap;
use std::path::Path;

use safetensors::tensor::{Dtype, SafeTensors, TensorView};
use seanet_tensor::Element;

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::model::SeaNet;
use crate::nn::{Module, Slot};

const FORMAT: &str = "seanet-checkpoint-v1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub input_size: usize,
    pub epoch: Option<usize>,
    pub val_mae: Option<f64>,
}

fn to_f32_bytes<T: Element>(values: &[T]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_f32().unwrap_or(f32::NAN).to_le_bytes()).collect()
}

fn decode<T: Element>(view: &TensorView<'_>, path: &Path, name: &str) -> Result<Vec<T>> {
    let bytes = view.data();
    Ok(match view.dtype() {
        Dtype::F32 => bytes.chunks_exact(4).map(|c| T::of(f64::from(f32::from_le_bytes(c.try_into().unwrap())))).collect(),
        Dtype::F64 => bytes.chunks_exact(8).map(|c| T::of(f64::from_le_bytes(c.try_into().unwrap()))).collect(),
        other => return Err(Error::checkpoint(path, format!("tensor `{name}` has unsupported dtype {other:?}"))),
    })
}

/// Named parameter and buffer values of `model`.
fn state<T: Element>(model: &impl Module<T>) -> Vec<(String, Vec<usize>, Vec<T>)> {
    let mut out = Vec::new();
    model.visit("", &mut |name, slot| match slot {
        Slot::Param(p) => out.push((name, p.shape().to_vec(), p.to_vec())),
        Slot::Buffer(b) => out.push((name, b.shape().to_vec(), b.to_vec())),
    });
    out
}

pub fn save<T: Element>(model: &SeaNet<T>, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let entries: Vec<(String, Vec<usize>, Vec<u8>)> =
        state(model).into_iter().map(|(n, s, v)| (n, s, to_f32_bytes(&v))).collect();
    let views = entries
        .iter()
        .map(|(n, s, b)| Ok((n.clone(), TensorView::new(Dtype::F32, s.clone(), b).map_err(|e| Error::checkpoint(path, e.to_string()))?)))
        .collect::<Result<Vec<_>>>()?;
    let mut info = HashMap::new();
    info.insert("format".to_string(), FORMAT.to_string());
    info.insert("model".to_string(), serde_json::to_string(&meta.model).expect("config serializes"));
    info.insert("input_size".to_string(), meta.input_size.to_string());
    if let Some(e) = meta.epoch {
        info.insert("epoch".to_string(), e.to_string());
    }
    if let Some(m) = meta.val_mae {
        info.insert("val_mae".to_string(), m.to_string());
    }
    let bytes = safetensors::serialize(views, Some(info)).map_err(|e| Error::checkpoint(path, e.to_string()))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_meta(path: &Path) -> Result<CheckpointMeta> {
    let bytes = read(path)?;
    let (_, header) = SafeTensors::read_metadata(&bytes).map_err(|e| Error::checkpoint(path, e.to_string()))?;
    let info = header.metadata().clone().unwrap_or_default();
    if info.get("format").map(String::as_str) != Some(FORMAT) {
        return Err(Error::checkpoint(path, "not a model checkpoint (missing format tag)"));
    }
    let field = |k: &str| info.get(k).ok_or_else(|| Error::checkpoint(path, format!("metadata lacks `{k}`")));
    let model: ModelConfig = serde_json::from_str(field("model")?).map_err(|e| Error::checkpoint(path, e.to_string()))?;
    let input_size = field("input_size")?.parse().map_err(|_| Error::checkpoint(path, "bad input_size"))?;
    Ok(CheckpointMeta {
        model,
        input_size,
        epoch: info.get("epoch").and_then(|v| v.parse().ok()),
        val_mae: info.get("val_mae").and_then(|v| v.parse().ok()),
    })
}

/// Copies tensors from `path` into every slot of `model` whose name satisfies `select`.
/// Selected slots missing from the file, and shape mismatches, are errors.
fn load_into<T: Element>(model: &impl Module<T>, path: &Path, select: impl Fn(&str) -> bool) -> Result<usize> {
    let bytes = read(path)?;
    let file = SafeTensors::deserialize(&bytes).map_err(|e| Error::checkpoint(path, e.to_string()))?;
    let mut slots = Vec::new();
    model.visit("", &mut |name, slot| {
        if select(&name) {
            slots.push((name, slot));
        }
    });
    let mut missing = Vec::new();
    for (name, slot) in &slots {
        let view = match file.tensor(name) {
            Ok(v) => v,
            Err(_) => {
                missing.push(name.clone());
                continue;
            }
        };
        let expected = match slot {
            Slot::Param(p) => p.shape(),
            Slot::Buffer(b) => b.shape(),
        };
        if view.shape() != expected {
            return Err(Error::checkpoint(path, format!("`{name}` has shape {:?}, model expects {expected:?}", view.shape())));
        }
        let values = decode::<T>(&view, path, name)?;
        match slot {
            Slot::Param(p) => p.set(values)?,
            Slot::Buffer(b) => b.set(values)?,
        }
    }
    if !missing.is_empty() {
        return Err(Error::checkpoint(path, format!("missing {} tensors: {}", missing.len(), missing.join(", "))));
    }
    Ok(slots.len())
}

/// Restores every parameter and buffer of `model`.
pub fn load_state<T: Element>(model: &SeaNet<T>, path: &Path) -> Result<()> {
    load_into(model, path, |_| true).map(|_| ())
}

/// Rebuilds the model recorded in a checkpoint and restores its state.
pub fn load_model<T: Element>(path: &Path) -> Result<(SeaNet<T>, CheckpointMeta)> {
    let meta = read_meta(path)?;
    let model = SeaNet::new(&meta.model, meta.input_size, 0)?;
    load_state(&model, path)?;
    Ok((model, meta))
}

/// Loads encoder weights stored under torchvision names (`features.*`); other tensors
/// in the file, such as the classifier, are ignored. Returns the number of tensors loaded.
pub fn load_pretrained_backbone<T: Element>(model: &SeaNet<T>, path: &Path) -> Result<usize> {
    if !path.is_file() {
        return Err(Error::checkpoint(
            path,
            "pretrained encoder weights not found; export them with scripts/export_mobilenet_v2.py or unset train.pretrained",
        ));
    }
    if (model.config().width - 1.0).abs() > 1e-12 {
        return Err(Error::Config("pretrained encoder weights require width 1.0".into()));
    }
    load_into(model, path, |n| n.starts_with("features."))
}
