//! Optimization loop, step logging and checkpoint retention.

use std::io::Write;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use seanet_tensor::{no_grad, Element, Tensor};

use crate::checkpoint::{self, CheckpointMeta};
use crate::config::Config;
use crate::data::{augment, collate, load_split, preprocess, sample_rng, DatasetSplit, Sample};
use crate::error::{Error, Result};
use crate::losses::{total_loss, LossBundle};
use crate::model::SeaNet;
use crate::nn::{named_params, Ctx};
use crate::optim::Adam;

pub const LOG_HEADER: &str = "step epoch lr bce iou edge_align total";

/// Loss values of one optimizer step; `bce`/`iou` are summed over the three scales.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub bce: f64,
    pub iou: f64,
    pub edge_align: f64,
    pub total: f64,
}

impl StepRecord {
    fn from_bundle<T: Element>(step: usize, epoch: usize, lr: f64, b: &LossBundle<T>) -> Self {
        Self { step, epoch, lr, bce: b.bce_sum(), iou: b.iou_sum(), edge_align: b.edge_align, total: b.total_value() }
    }

    /// One whitespace-separated line matching [`LOG_HEADER`].
    pub fn log_line(&self) -> String {
        format!(
            "{} {} {:.3e} {:.6} {:.6} {:.6} {:.6}",
            self.step, self.epoch, self.lr, self.bce, self.iou, self.edge_align, self.total
        )
    }
}

/// Model plus optimizer state and the dropout stream.
pub struct Trainer<T: Element> {
    pub model: SeaNet<T>,
    adam: Adam<T>,
    ctx: Ctx,
    lambda: f64,
    eps_iou: f64,
    step: usize,
}

impl<T: Element> Trainer<T> {
    pub fn new(model: SeaNet<T>, lambda: f64, eps_iou: f64, seed: u64) -> Self {
        let adam = Adam::new(&named_params(&model, ""));
        Self { model, adam, ctx: Ctx::train(seed ^ 0x5eed_d409), lambda, eps_iou, step: 0 }
    }

    pub fn steps(&self) -> usize {
        self.step
    }

    /// Forward, loss, backward and one Adam update on a prepared batch.
    pub fn step(&mut self, images: &Tensor<T>, gts: &Tensor<T>, lr: f64, epoch: usize) -> Result<StepRecord> {
        let out = self.model.forward(images, &self.ctx)?;
        let slope = self.model.align_slope.as_ref().map(|p| p.tensor());
        let bundle = total_loss(&out.saliency, gts, out.edges.as_ref(), slope.as_ref(), self.lambda, self.eps_iou)?;
        if !bundle.total.all_finite() {
            return Err(Error::Config(format!("loss diverged at step {}", self.step)));
        }
        let grads = bundle.total.backward()?;
        self.adam.step(&named_params(&self.model, ""), &grads, lr)?;
        self.step += 1;
        Ok(StepRecord::from_bundle(self.step, epoch, lr, &bundle))
    }
}

/// Evaluation-mode `S¹` maps, one `size²` vector per sample.
pub fn predict_samples<T: Element>(model: &SeaNet<T>, samples: &[Sample], batch: usize) -> Result<Vec<Vec<f64>>> {
    let ctx = Ctx::eval();
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch.max(1)) {
        let (images, _) = collate::<T>(chunk)?;
        let s1 = no_grad(|| model.forward(&images, &ctx))?.saliency.maps[0].to_vec();
        let per = s1.len() / chunk.len();
        out.extend(s1.chunks(per).map(|c| c.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect()));
    }
    Ok(out)
}

/// Mean absolute error of evaluation-mode `S¹` against the samples' masks at input resolution.
pub fn samples_mae<T: Element>(model: &SeaNet<T>, samples: &[Sample], batch: usize) -> Result<f64> {
    let preds = predict_samples(model, samples, batch)?;
    let total: f64 = preds
        .iter()
        .zip(samples)
        .map(|(p, s)| p.iter().zip(&s.gt).map(|(a, &g)| (a - f64::from(g)).abs()).sum::<f64>() / p.len() as f64)
        .sum();
    Ok(total / samples.len() as f64)
}

#[derive(Clone, Debug, Default)]
pub struct TrainSummary {
    pub steps: usize,
    pub epochs: usize,
    pub last_loss: Option<f64>,
    pub best_val_mae: Option<f64>,
    pub best_checkpoint: Option<PathBuf>,
    pub last_checkpoint: Option<PathBuf>,
}

fn load_batch(split: &DatasetSplit, idx: &[usize], cfg: &Config, epoch: usize) -> Result<Vec<Sample>> {
    idx.iter()
        .map(|&i| {
            let s = preprocess(&split.pairs[i], cfg.input_size, &cfg.normalization)?;
            Ok(augment(&s, &cfg.augment, &mut sample_rng(cfg.train.seed, epoch, i)))
        })
        .collect()
}

/// Full training run from `cfg`. The test split, when present, selects the best checkpoint.
pub fn train(cfg: &Config, log: &mut dyn Write) -> Result<TrainSummary> {
    cfg.validate()?;
    let t = &cfg.train;
    let split = load_split(&cfg.dataset.root, &cfg.dataset.train_split)?;
    let val: Option<Vec<Sample>> = match load_split(&cfg.dataset.root, &cfg.dataset.test_split) {
        Ok(v) => Some(v.pairs.iter().map(|p| preprocess(p, cfg.input_size, &cfg.normalization)).collect::<Result<_>>()?),
        Err(e) => {
            log::warn!("no validation split, keeping only the last checkpoint: {e}");
            None
        }
    };
    let model = SeaNet::<f32>::new(&cfg.model, cfg.input_size, t.seed)?;
    match &t.pretrained {
        Some(path) => {
            let n = checkpoint::load_pretrained_backbone(&model, path)?;
            log::info!("loaded {n} pretrained encoder tensors from {}", path.display());
        }
        None => log::warn!("no pretrained encoder weights configured; encoder starts from random initialization"),
    }
    let mut trainer = Trainer::new(model, t.effective_lambda(&cfg.model.ablation), t.eps_iou, t.seed);
    let io = |e| Error::io("training log", e);
    writeln!(log, "{LOG_HEADER}").map_err(io)?;
    let mut summary = TrainSummary::default();
    let dir = &t.checkpoint_dir;
    'epochs: for epoch in 0..t.epochs {
        let lr = t.lr_at(epoch);
        let mut order: Vec<usize> = (0..split.len()).collect();
        order.shuffle(&mut sample_rng(t.seed, epoch, usize::MAX));
        for idx in order.chunks(t.batch_size) {
            let (images, gts) = collate::<f32>(&load_batch(&split, idx, cfg, epoch)?)?;
            let rec = trainer.step(&images, &gts, lr, epoch)?;
            writeln!(log, "{}", rec.log_line()).map_err(io)?;
            summary.last_loss = Some(rec.total);
            if t.max_steps.is_some_and(|m| trainer.steps() >= m) {
                summary.epochs = epoch + 1;
                break 'epochs;
            }
        }
        summary.epochs = epoch + 1;
        let mut meta = CheckpointMeta { model: cfg.model.clone(), input_size: cfg.input_size, epoch: Some(epoch), val_mae: None };
        if let Some(val) = &val {
            let mae = samples_mae(&trainer.model, val, t.batch_size)?;
            meta.val_mae = Some(mae);
            log::info!("epoch {epoch}: validation MAE {mae:.5}");
            if summary.best_val_mae.is_none_or(|b| mae < b) {
                summary.best_val_mae = Some(mae);
                let best = dir.join("best.safetensors");
                checkpoint::save(&trainer.model, &meta, &best)?;
                summary.best_checkpoint = Some(best);
            }
        }
        let last = dir.join("last.safetensors");
        checkpoint::save(&trainer.model, &meta, &last)?;
        summary.last_checkpoint = Some(last);
    }
    if summary.last_checkpoint.is_none() || t.max_steps.is_some() {
        let meta = CheckpointMeta {
            model: cfg.model.clone(),
            input_size: cfg.input_size,
            epoch: summary.epochs.checked_sub(1),
            val_mae: summary.best_val_mae,
        };
        let last = dir.join("last.safetensors");
        checkpoint::save(&trainer.model, &meta, &last)?;
        summary.last_checkpoint = Some(last);
    }
    summary.steps = trainer.steps();
    Ok(summary)
}
