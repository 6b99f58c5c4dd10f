//! Dataset discovery, preprocessing, checkpoints, training steps and inference on disk.

use std::fs;
use std::path::Path;

use seanet_core::checkpoint::{load_model, read_meta, save, CheckpointMeta};
use seanet_core::config::{AugmentConfig, Normalization};
use seanet_core::data::{
    augment, collate, load_split, preprocess, sample_hash, sample_rng, write_gray, write_rgb, write_synthetic_split,
};
use seanet_core::infer::infer_dir;
use seanet_core::metrics::evaluate_folder;
use seanet_core::nn::Ctx;
use seanet_core::tensor::no_grad;
use seanet_core::train::{train, Trainer};
use seanet_core::{Config, ModelConfig, SeaNet};

fn pair(dir_img: &Path, dir_gt: &Path, stem: &str, size: usize) {
    fs::create_dir_all(dir_img).unwrap();
    fs::create_dir_all(dir_gt).unwrap();
    write_rgb(&dir_img.join(format!("{stem}.png")), &vec![100; 3 * size * size], size, size).unwrap();
    write_gray(&dir_gt.join(format!("{stem}.png")), &vec![255; size * size], size, size).unwrap();
}

#[test]
fn both_directory_layouts_are_discovered() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    pair(&root.join("train-images"), &root.join("train-labels"), "b", 8);
    pair(&root.join("train-images"), &root.join("train-labels"), "a", 8);
    pair(&root.join("test/images"), &root.join("test/GT"), "c", 8);
    let train = load_split(root, "train").unwrap();
    assert_eq!(train.pairs.iter().map(|p| p.stem.as_str()).collect::<Vec<_>>(), ["a", "b"]);
    let test = load_split(root, "test").unwrap();
    assert_eq!(test.len(), 1);
    assert!(test.pairs[0].mask.starts_with(root.join("test/GT")));
}

#[test]
fn orphans_and_empty_splits_are_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    pair(&root.join("train-images"), &root.join("train-labels"), "a", 8);
    write_rgb(&root.join("train-images/lonely.png"), &[0; 3 * 4], 2, 2).unwrap();
    let err = load_split(root, "train").unwrap_err().to_string();
    assert!(err.contains("lonely"), "{err}");

    fs::create_dir_all(root.join("test-images")).unwrap();
    fs::create_dir_all(root.join("test-labels")).unwrap();
    assert!(load_split(root, "test").unwrap_err().to_string().contains("empty"));
    assert!(load_split(root, "val").is_err());
}

#[test]
fn preprocessing_normalizes_and_binarizes() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    fs::create_dir_all(root.join("x-images")).unwrap();
    fs::create_dir_all(root.join("x-labels")).unwrap();
    write_rgb(&root.join("x-images/p.png"), &[255, 0, 128].repeat(16 * 12), 12, 16).unwrap();
    let mask: Vec<u8> = (0..12 * 16).map(|i| if i % 16 < 8 { 127 } else { 128 }).collect();
    write_gray(&root.join("x-labels/p.png"), &mask, 12, 16).unwrap();
    let split = load_split(root, "x").unwrap();
    let norm = Normalization::default();
    let s = preprocess(&split.pairs[0], 8, &norm).unwrap();
    assert_eq!((s.image.len(), s.gt.len(), s.original_size), (3 * 64, 64, (12, 16)));
    assert!((s.image[0] - (1.0 - 0.485) / 0.229).abs() < 1e-6);
    assert!((s.image[64] - (0.0 - 0.456) / 0.224).abs() < 1e-6);
    // 127 is background, 128 is object: left half 0, right half 1.
    for (i, &g) in s.gt.iter().enumerate() {
        assert_eq!(g, if i % 8 < 4 { 0.0 } else { 1.0 });
    }
}

#[test]
fn augmented_samples_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    write_synthetic_split(tmp.path(), "train", 2, 16, 5).unwrap();
    let split = load_split(tmp.path(), "train").unwrap();
    let cfg = AugmentConfig { max_rotation_deg: Some(15.0), ..AugmentConfig::default() };
    let s = preprocess(&split.pairs[1], 16, &Normalization::default()).unwrap();
    let a = augment(&s, &cfg, &mut sample_rng(9, 3, 1));
    let b = augment(&s, &cfg, &mut sample_rng(9, 3, 1));
    let c = augment(&s, &cfg, &mut sample_rng(9, 4, 1));
    assert_eq!(sample_hash(&a), sample_hash(&b));
    assert_ne!(sample_hash(&a), sample_hash(&c));
    assert_eq!(sample_hash(&a), FROZEN_AUGMENT_HASH);
}

/// Synthetic pair 1 of seed 5, augmentation stream (seed 9, epoch 3, index 1).
const FROZEN_AUGMENT_HASH: &str = "11dfb0f1f9a894a2d20b82d7ba05d3b49e2754ef59e20e08be63307d72e3df35";

#[test]
fn checkpoints_round_trip_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ModelConfig { width: 0.25, ..ModelConfig::default() };
    let model = SeaNet::<f32>::new(&cfg, 64, 3).unwrap();
    // A few training steps so running statistics differ from their initial values.
    let mut trainer = Trainer::new(model, 0.5, 1.0, 3);
    let images = common_images(2, 64);
    let gts = seanet_core::tensor::Tensor::from_vec(vec![1.0f32; 2 * 64 * 64], &[2, 1, 64, 64]).unwrap();
    for _ in 0..2 {
        trainer.step(&images, &gts, 1e-3, 0).unwrap();
    }
    let path = tmp.path().join("ckpt/m.safetensors");
    let meta = CheckpointMeta { model: cfg.clone(), input_size: 64, epoch: Some(4), val_mae: Some(0.125) };
    save(&trainer.model, &meta, &path).unwrap();
    assert_eq!(read_meta(&path).unwrap(), meta);
    let (restored, _) = load_model::<f32>(&path).unwrap();
    let eval = |m: &SeaNet<f32>| no_grad(|| m.forward(&images, &Ctx::eval())).unwrap().saliency.maps[0].to_vec();
    assert_eq!(eval(&trainer.model), eval(&restored));
    assert!(load_model::<f32>(&tmp.path().join("nope.safetensors")).is_err());
}

fn common_images(n: usize, size: usize) -> seanet_core::tensor::Tensor<f32> {
    let data = (0..n * 3 * size * size).map(|i| ((i as f32) * 0.37).sin()).collect();
    seanet_core::tensor::Tensor::from_vec(data, &[n, 3, size, size]).unwrap()
}

fn tiny_config(root: &Path) -> Config {
    let mut cfg = Config::default();
    cfg.input_size = 32;
    cfg.dataset.root = root.to_path_buf();
    cfg.model.width = 0.25;
    cfg.train.batch_size = 2;
    cfg.train.epochs = 2;
    cfg.train.max_steps = Some(3);
    cfg.train.checkpoint_dir = root.join("ckpt");
    cfg
}

#[test]
fn training_is_deterministic_and_writes_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    write_synthetic_split(root, "train", 4, 40, 1).unwrap();
    write_synthetic_split(root, "test", 2, 40, 2).unwrap();
    let cfg = tiny_config(root);
    let mut log1 = Vec::new();
    let summary = train(&cfg, &mut log1).unwrap();
    let mut log2 = Vec::new();
    train(&cfg, &mut log2).unwrap();
    assert_eq!(log1, log2, "identical seeds give identical loss logs");
    let text = String::from_utf8(log1).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "step epoch lr bce iou edge_align total");
    assert_eq!(lines.len(), 4);
    assert_eq!(summary.steps, 3);
    let best = summary.best_checkpoint.expect("validation split selects a best checkpoint");
    assert!(best.exists() && summary.last_checkpoint.unwrap().exists());
    assert_eq!(read_meta(&best).unwrap().input_size, 32);

    let mut other = cfg.clone();
    other.train.seed += 1;
    let mut log3 = Vec::new();
    train(&other, &mut log3).unwrap();
    assert_ne!(text.lines().nth(1), String::from_utf8(log3).unwrap().lines().nth(1));
}

#[test]
fn missing_pretrained_weights_fail_loudly() {
    let tmp = tempfile::tempdir().unwrap();
    write_synthetic_split(tmp.path(), "train", 2, 32, 1).unwrap();
    let mut cfg = tiny_config(tmp.path());
    cfg.train.pretrained = Some(tmp.path().join("absent.safetensors"));
    assert!(train(&cfg, &mut Vec::new()).is_err());
}

#[test]
fn inference_writes_maps_at_source_resolution_and_they_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    write_synthetic_split(root, "test", 3, 24, 4).unwrap();
    let model = SeaNet::<f32>::new(&ModelConfig { width: 0.25, ..ModelConfig::default() }, 32, 0).unwrap();
    let out = root.join("pred");
    let n = infer_dir(&model, &root.join("test-images"), &out, &Normalization::default(), true).unwrap();
    assert_eq!(n, 3);
    let (map, h, w) = seanet_core::data::read_gray(&out.join("0000.png")).unwrap();
    assert_eq!((h, w, map.len()), (24, 24, 576));
    assert!(out.join("0000_vis.png").exists());
    fs::remove_file(out.join("0000_vis.png")).unwrap();
    fs::remove_file(out.join("0001_vis.png")).unwrap();
    fs::remove_file(out.join("0002_vis.png")).unwrap();
    let (report, curve) = evaluate_folder(&out, &root.join("test-labels")).unwrap();
    assert_eq!(report.images, 3);
    assert!(report.missing.is_empty());
    assert_eq!(curve.f.len(), 256);
    for v in [report.mae, report.s_alpha, report.f_max, report.e_max] {
        assert!((0.0..=1.0).contains(&v));
    }
}

#[test]
fn collate_stacks_samples() {
    let tmp = tempfile::tempdir().unwrap();
    write_synthetic_split(tmp.path(), "train", 3, 16, 8).unwrap();
    let split = load_split(tmp.path(), "train").unwrap();
    let samples: Vec<_> = split.pairs.iter().map(|p| preprocess(p, 16, &Normalization::default()).unwrap()).collect();
    let (x, y) = collate::<f32>(&samples).unwrap();
    assert_eq!((x.shape(), y.shape()), (&[3, 3, 16, 16][..], &[3, 1, 16, 16][..]));
    assert_eq!(&x.data()[3 * 256..3 * 256 + 4], &samples[1].image[..4]);
}
