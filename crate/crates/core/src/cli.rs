//! Command-line front end. Every subcommand reads a config file, applies
//! flag overrides, writes its effective configuration next to its outputs
//! and produces byte-identical files when rerun on identical inputs.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate, export_embeddings, run_matrix, target_monitor};
use crate::model::{build_model, ModelBundle};
use crate::signal::io::{read_dataset, render_manifest, write_dataset, GenerationRecord};
use crate::signal::{DatasetManifest, SplitRole};
use crate::train::{pretrain, train_mdd};

pub const SOURCE_FILE: &str = "source.rfds";
pub const TARGET_TRAIN_FILE: &str = "target_train.rfds";
pub const TARGET_TEST_FILE: &str = "target_test.rfds";
pub const PRETRAINED_FILE: &str = "pretrained.ckpt";
pub const TRAINED_FILE: &str = "model.ckpt";

#[derive(Debug, Parser)]
#[command(name = "rffsei", version, about = "Emitter identification across modulation schemes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize the source, target-train and target-test splits.
    Gen(Common),
    /// Source-only training; writes pretrained.ckpt.
    Pretrain(DataArgs),
    /// Adversarial training from a pretrained checkpoint; writes model.ckpt.
    Train(TrainArgs),
    /// Accuracy and confusion matrix of a checkpoint on a labeled dataset.
    Eval(DatasetArgs),
    /// Baseline and adapted accuracy for every source group and target scheme.
    Matrix(Common),
    /// Embedding of every frame of a dataset, one CSV row per frame.
    ExportEmbeddings(DatasetArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed the subcommand consumes: data.seed for gen,
    /// train.seed for pretrain and train, fleet.seed for matrix.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; defaults to output.dir from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Epochs of the stage being run (pretrain_epochs for pretrain).
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory holding the gen outputs; defaults to the output directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Defaults to pretrained.ckpt in the output directory.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Split role recorded for the dataset file.
    #[arg(long, default_value = "target_unlabeled_test")]
    pub role: SplitRole,
}

#[derive(Clone, Copy)]
enum Stage {
    Gen,
    Pretrain,
    Train,
    Matrix,
    Other,
}

fn effective(common: &Common, stage: Stage) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        match stage {
            Stage::Gen => cfg.data.seed = s,
            Stage::Pretrain | Stage::Train => cfg.train.seed = s,
            Stage::Matrix => cfg.fleet.seed = s,
            Stage::Other => {}
        }
    }
    if let Some(l) = common.lambda {
        cfg.train.mdd.lambda = l;
    }
    if let Some(g) = common.gamma {
        cfg.train.mdd.gamma = g;
    }
    if let Some(e) = common.epochs {
        match stage {
            Stage::Pretrain => cfg.train.pretrain_epochs = e,
            _ => cfg.train.epochs = e,
        }
    }
    cfg.validate()?;
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    fs::create_dir_all(&out)?;
    Ok((cfg, out))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn echo_config(out: &Path, name: &str, cfg: &ExperimentConfig) -> Result<()> {
    write(&out.join(format!("{name}.effective.cfg")), &cfg.render())
}

fn load_model(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<ModelBundle> {
    let mut m = build_model(&cfg.model, cfg.train.seed, cfg.train.adam)?;
    m.load(checkpoint)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", checkpoint.display())))?;
    Ok(m)
}

fn check_shape(ds: &DatasetManifest, cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    if ds.sample_len != cfg.model.sample_len || ds.emitter_count != cfg.model.class_count {
        return Err(Error::InvalidDataset(format!(
            "{}: {} samples and {} emitters, config expects {} and {}",
            path.display(),
            ds.sample_len,
            ds.emitter_count,
            cfg.model.sample_len,
            cfg.model.class_count
        )));
    }
    Ok(())
}

fn read_split(dir: &Path, file: &str, role: SplitRole, cfg: &ExperimentConfig) -> Result<DatasetManifest> {
    let path = dir.join(file);
    let ds = read_dataset(&path, role).map_err(|e| match e {
        Error::Io(io) => Error::InvalidDataset(format!("{}: {io}", path.display())),
        other => other,
    })?;
    check_shape(&ds, cfg, &path)?;
    Ok(ds)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(c) => cmd_gen(&c),
        Command::Pretrain(a) => cmd_pretrain(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Matrix(c) => cmd_matrix(&c),
        Command::ExportEmbeddings(a) => cmd_export(&a),
    }
}

pub fn cmd_gen(c: &Common) -> Result<()> {
    let (cfg, out) = effective(c, Stage::Gen)?;
    let data = cfg.generate()?;
    let source_schemes: Vec<_> = cfg.schemes.source.iter().map(|&k| cfg.schemes.scheme(k)).collect();
    let target_schemes = [cfg.schemes.scheme(cfg.schemes.target)];
    let d = &cfg.data;
    let splits = [
        (SOURCE_FILE, &data.source, &source_schemes[..], d.source_frames_per_pair),
        (TARGET_TRAIN_FILE, &data.target_train, &target_schemes[..], d.target_frames_per_pair),
        (TARGET_TEST_FILE, &data.target_test, &target_schemes[..], d.test_frames_per_pair),
    ];
    let mut manifest = String::new();
    for (file, ds, schemes, n) in splits {
        write_dataset(&out.join(file), ds)?;
        if !manifest.is_empty() {
            manifest.push('\n');
        }
        manifest.push_str(&format!("# file {file}\n"));
        manifest.push_str(&render_manifest(&GenerationRecord {
            dataset: ds,
            emitters: &data.fleet,
            schemes,
            frames_per_pair: n,
            channel: &cfg.channel,
            synth: &d.synth,
        }));
        println!("wrote {} ({} frames, {})", out.join(file).display(), ds.len(), ds.role);
    }
    write(&out.join("manifest.txt"), &manifest)?;
    echo_config(&out, "gen", &cfg)
}

pub fn cmd_pretrain(a: &DataArgs) -> Result<()> {
    let (cfg, out) = effective(&a.common, Stage::Pretrain)?;
    let dir = a.data.clone().unwrap_or_else(|| out.clone());
    let source = read_split(&dir, SOURCE_FILE, SplitRole::SourceLabeled, &cfg)?;
    let mut m = build_model(&cfg.model, cfg.train.seed, cfg.train.adam)?;
    let log = pretrain(&mut m, &source, &cfg.train)?;
    m.save(&out.join(PRETRAINED_FILE))?;
    write(&out.join("pretrain_metrics.csv"), &log.epochs_csv())?;
    let acc = log.final_train_accuracy.unwrap_or(f64::NAN);
    write(&out.join("pretrain_summary.txt"), &format!("final_train_accuracy = {acc}\n"))?;
    println!("pretrained on {} frames: train accuracy {acc:.2}%", source.len());
    echo_config(&out, "pretrain", &cfg)
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let (cfg, out) = effective(&a.data.common, Stage::Train)?;
    let dir = a.data.data.clone().unwrap_or_else(|| out.clone());
    let ckpt = a.checkpoint.clone().unwrap_or_else(|| out.join(PRETRAINED_FILE));
    let source = read_split(&dir, SOURCE_FILE, SplitRole::SourceLabeled, &cfg)?;
    let target = read_split(&dir, TARGET_TRAIN_FILE, SplitRole::TargetUnlabeledTrain, &cfg)?;
    let test_path = dir.join(TARGET_TEST_FILE);
    let test = if test_path.exists() {
        Some(read_split(&dir, TARGET_TEST_FILE, SplitRole::TargetUnlabeledTest, &cfg)?)
    } else {
        None
    };
    let mut m = load_model(&cfg, &ckpt)?;
    let log = match &test {
        Some(t) => {
            let mut monitor = target_monitor(t);
            train_mdd(&mut m, &source, &target, &cfg.train, Some(&mut monitor))?
        }
        None => train_mdd(&mut m, &source, &target, &cfg.train, None)?,
    };
    m.save(&out.join(TRAINED_FILE))?;
    write(&out.join("train_metrics.csv"), &log.epochs_csv())?;
    write(&out.join("train_losses.csv"), &log.losses_csv())?;
    if let Some(acc) = log.epochs.last().and_then(|r| r.test_accuracy) {
        println!("trained {} epochs: target test accuracy {acc:.2}%", log.epochs.len());
    } else {
        println!("trained {} epochs", log.epochs.len());
    }
    echo_config(&out, "train", &cfg)
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or("dataset".into(), |s| s.to_string_lossy().into_owned())
}

pub fn cmd_eval(a: &DatasetArgs) -> Result<()> {
    let (cfg, out) = effective(&a.common, Stage::Other)?;
    let m = load_model(&cfg, &a.checkpoint)?;
    let ds = read_dataset(&a.dataset, a.role)?;
    check_shape(&ds, &cfg, &a.dataset)?;
    let e = evaluate(&m, &ds)?;
    let report = format!(
        "dataset = {}\nframes = {}\naccuracy = {}\n\nconfusion (rows: true emitter, columns: predicted)\n{}",
        a.dataset.display(),
        ds.len(),
        e.accuracy,
        e.confusion.to_text()
    );
    let name = stem(&a.dataset);
    write(&out.join(format!("eval_{name}.txt")), &report)?;
    write(&out.join(format!("eval_{name}.json")), &(serde_json::to_string_pretty(&e)? + "\n"))?;
    print!("{report}");
    echo_config(&out, "eval", &cfg)
}

pub fn cmd_matrix(c: &Common) -> Result<()> {
    let (cfg, out) = effective(c, Stage::Matrix)?;
    let mx = run_matrix(&cfg)?;
    write(&out.join("matrix.json"), &mx.to_json()?)?;
    let table = mx.to_table();
    write(&out.join("matrix.txt"), &table)?;
    print!("{table}");
    echo_config(&out, "matrix", &cfg)
}

pub fn cmd_export(a: &DatasetArgs) -> Result<()> {
    let (cfg, out) = effective(&a.common, Stage::Other)?;
    let m = load_model(&cfg, &a.checkpoint)?;
    let ds = read_dataset(&a.dataset, a.role)?;
    check_shape(&ds, &cfg, &a.dataset)?;
    let path = out.join(format!("embeddings_{}.csv", stem(&a.dataset)));
    export_embeddings(&m, &ds.frames, &path)?;
    println!("wrote {} ({} rows)", path.display(), ds.len());
    echo_config(&out, "export", &cfg)
}
