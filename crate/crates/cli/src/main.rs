//! `seanet`: train, evaluate, infer and profile from the command line.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use seanet_core::checkpoint::load_model;
use seanet_core::complexity::analyze;
use seanet_core::config::Normalization;
use seanet_core::data::write_synthetic_split;
use seanet_core::infer::infer_dir;
use seanet_core::metrics::evaluate_folder;
use seanet_core::train::train;
use seanet_core::{Ablation, Config, ModelConfig};

#[derive(Parser)]
#[command(name = "seanet", version, about = "Lightweight salient object detection for remote sensing images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a TOML config; flags override config values.
    Train(TrainArgs),
    /// Score a folder of predicted maps against ground-truth masks.
    Evaluate(EvaluateArgs),
    /// Predict saliency maps for a folder of images.
    Infer(InferArgs),
    /// Report parameters and MACs per component.
    Complexity(ComplexityArgs),
    /// Write a small synthetic dataset for smoke runs.
    Synth(SynthArgs),
}

#[derive(Args, Clone, Default)]
struct AblationArgs {
    /// Component removals, repeatable or comma separated: no_dsmm, no_esam, no_sm,
    /// no_dilation, no_ccorr1, no_ccorr2, no_eeu, no_alignment.
    #[arg(long = "ablation", value_delimiter = ',')]
    flags: Vec<String>,
}

impl AblationArgs {
    fn apply(&self, ablation: &mut Ablation) -> Result<()> {
        for f in &self.flags {
            ablation.set(f, true)?;
        }
        ablation.validate()?;
        Ok(())
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data_root: Option<PathBuf>,
    #[arg(long)]
    train_split: Option<String>,
    #[arg(long)]
    test_split: Option<String>,
    #[arg(long)]
    input_size: Option<usize>,
    #[arg(long)]
    width: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Encoder weights (safetensors, torchvision names).
    #[arg(long)]
    pretrained: Option<PathBuf>,
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    /// Also append the per-step loss log to this file.
    #[arg(long)]
    log_file: Option<PathBuf>,
    #[command(flatten)]
    ablation: AblationArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// JSON report; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-threshold precision, recall, F and E as CSV.
    #[arg(long)]
    curves: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write `<stem>_vis.png` with image and map side by side.
    #[arg(long)]
    visualize: bool,
    /// Config whose normalization statistics to use; ImageNet statistics otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ComplexityArgs {
    #[arg(long, default_value_t = 288)]
    input_size: usize,
    #[arg(long, default_value_t = 1.0)]
    width: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    ablation: AblationArgs,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    train: usize,
    #[arg(long, default_value_t = 5)]
    test: usize,
    #[arg(long, default_value_t = 96)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn train_config(a: &TrainArgs) -> Result<Config> {
    let mut cfg = match &a.config {
        Some(p) => Config::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => Config::default(),
    };
    macro_rules! set {
        ($field:expr, $value:expr) => {
            if let Some(v) = $value.clone() {
                $field = v;
            }
        };
    }
    set!(cfg.dataset.root, a.data_root);
    set!(cfg.dataset.train_split, a.train_split);
    set!(cfg.dataset.test_split, a.test_split);
    set!(cfg.input_size, a.input_size);
    set!(cfg.model.width, a.width);
    set!(cfg.train.epochs, a.epochs);
    set!(cfg.train.batch_size, a.batch_size);
    set!(cfg.train.base_lr, a.lr);
    set!(cfg.train.lambda, a.lambda);
    set!(cfg.train.seed, a.seed);
    set!(cfg.train.checkpoint_dir, a.checkpoint_dir);
    if a.max_steps.is_some() {
        cfg.train.max_steps = a.max_steps;
    }
    if a.pretrained.is_some() {
        cfg.train.pretrained = a.pretrained.clone();
    }
    if a.log_file.is_some() {
        cfg.train.log_file = a.log_file.clone();
    }
    a.ablation.apply(&mut cfg.model.ablation)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Writes every line to stdout and, when configured, to a log file.
struct Tee {
    file: Option<BufWriter<File>>,
}

impl Write for Tee {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        io::stdout().write_all(buf)?;
        if let Some(f) = &mut self.file {
            f.write_all(buf)?;
        }
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        io::stdout().flush()?;
        self.file.as_mut().map_or(Ok(()), |f| f.flush())
    }
}

fn run_train(a: &TrainArgs) -> Result<()> {
    let cfg = train_config(a)?;
    let file = match &cfg.train.log_file {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            Some(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?))
        }
        None => None,
    };
    let mut log = Tee { file };
    let summary = train(&cfg, &mut log)?;
    log.flush()?;
    eprintln!(
        "trained {} steps over {} epochs; best validation MAE {}; last checkpoint {}",
        summary.steps,
        summary.epochs,
        summary.best_val_mae.map_or("n/a".into(), |m| format!("{m:.5}")),
        summary.last_checkpoint.as_deref().map_or("none".into(), |p| p.display().to_string()),
    );
    Ok(())
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, format!("{text}\n")).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run_evaluate(a: &EvaluateArgs) -> Result<()> {
    let (report, curve) = evaluate_folder(&a.pred, &a.gt)?;
    if let Some(p) = &a.curves {
        let mut w = BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?);
        curve.write_csv(&mut w)?;
        w.flush()?;
    }
    write_text(a.out.as_deref(), &report.to_json())?;
    eprintln!(
        "{} images: S {:.4}  maxF {:.4}  meanF {:.4}  maxE {:.4}  meanE {:.4}  MAE {:.4}",
        report.images, report.s_alpha, report.f_max, report.f_mean, report.e_max, report.e_mean, report.mae
    );
    Ok(())
}

fn run_infer(a: &InferArgs) -> Result<()> {
    let norm = match &a.config {
        Some(p) => Config::load(p)?.normalization,
        None => Normalization::default(),
    };
    let (model, meta) = load_model::<f32>(&a.checkpoint)?;
    log::info!("loaded model at input size {} from {}", meta.input_size, a.checkpoint.display());
    let n = infer_dir(&model, &a.images, &a.out, &norm, a.visualize)?;
    if n == 0 {
        bail!("no images found in {}", a.images.display());
    }
    eprintln!("wrote {n} saliency maps to {}", a.out.display());
    Ok(())
}

fn run_complexity(a: &ComplexityArgs) -> Result<()> {
    let mut cfg = ModelConfig { width: a.width, ..ModelConfig::default() };
    a.ablation.apply(&mut cfg.ablation)?;
    let report = analyze(&cfg, a.input_size)?;
    write_text(a.out.as_deref(), &report.to_json())?;
    eprintln!("{:.3}M parameters, {:.3} GFLOPs ({})", report.params_total as f64 / 1e6, report.gflops, report.convention);
    Ok(())
}

fn run_synth(a: &SynthArgs) -> Result<()> {
    write_synthetic_split(&a.out, "train", a.train, a.size, a.seed)?;
    write_synthetic_split(&a.out, "test", a.test, a.size, a.seed.wrapping_add(1))?;
    eprintln!("wrote {} + {} synthetic pairs to {}", a.train, a.test, a.out.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Train(a) => run_train(&a),
        Command::Evaluate(a) => run_evaluate(&a),
        Command::Infer(a) => run_infer(&a),
        Command::Complexity(a) => run_complexity(&a),
        Command::Synth(a) => run_synth(&a),
    }
}
