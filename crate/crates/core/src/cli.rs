//! The `vbssl` command line: one binary, one verb per workflow step.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or config error, 3 numerical
//! failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::dsp::{specfile, NoiseBank};
use crate::error::{Error, Result};
use crate::manifest::{stratified_split, Manifest, Split};
use crate::model::checkpoint::{self, Checkpoint};
use crate::pipeline::{
    aggregate_runs, evaluate, load_clips, load_labeled, parse_assignment, pretrain, train_downstream, view_pair, RunConfig,
    RunMode, RunReport,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "vbssl", version, about = "VICReg pretraining and species classification for bioacoustic audio")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// Stratified train/validation/test split plus a train mini-set.
    Split(Common),
    /// Self-supervised pretraining.
    Pretrain(Common),
    /// Supervised training from scratch or fine-tuning (`mode` scratch or finetune).
    Train(Common),
    /// Linear probe on a frozen pretrained encoder.
    Probe(Common),
    /// Scores a checkpoint on a labeled manifest.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Writes the epoch-0 augmented views of the first recordings.
    PreviewAugment {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 4)]
        count: usize,
    },
    /// Mean and sample std of test metrics over run reports.
    Aggregate {
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(required = true, num_args = 2..)]
        reports: Vec<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Dotted `key=value` config overrides, e.g. `schedule.lr_peak=0.3`.
    overrides: Vec<String>,
}

/// Runs one command and returns its exit code. Errors go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let workers = match &cli.verb {
        Verb::Split(c) | Verb::Pretrain(c) | Verb::Train(c) | Verb::Probe(c) => c.workers,
        Verb::Eval { common, .. } | Verb::PreviewAugment { common, .. } => common.workers,
        Verb::Aggregate { .. } => None,
    };
    let result = match workers {
        Some(0) => Err(Error::InvalidArgument("--workers must be positive".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.verb)),
            Err(e) => Err(Error::InvalidArgument(format!("cannot start {n} workers: {e}"))),
        },
        None => dispatch(cli.verb),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFinite(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

fn dispatch(verb: Verb) -> Result<()> {
    match verb {
        Verb::Split(c) => split(&c),
        Verb::Pretrain(c) => {
            let cfg = config(&c, &[RunMode::Pretrain])?;
            let (ckpt, report) = pretrain(&cfg)?;
            save_run(&c.output_dir, &ckpt, &report)
        }
        Verb::Train(c) => {
            let cfg = config(&c, &[RunMode::Scratch, RunMode::Finetune])?;
            let (ckpt, report) = train_downstream(&cfg)?;
            save_run(&c.output_dir, &ckpt, &report)
        }
        Verb::Probe(c) => {
            let cfg = config(&c, &[RunMode::Probe])?;
            let (ckpt, report) = train_downstream(&cfg)?;
            save_run(&c.output_dir, &ckpt, &report)
        }
        Verb::Eval { common, checkpoint, manifest } => eval(&common, &checkpoint, &manifest),
        Verb::PreviewAugment { common, count } => preview(&common, count),
        Verb::Aggregate { output_dir, reports } => {
            let reports = reports.iter().map(|p| read_json::<RunReport>(p)).collect::<Result<Vec<_>>>()?;
            let agg = aggregate_runs(&reports)?;
            let text = to_pretty(&agg)?;
            println!("{text}");
            match output_dir {
                Some(dir) => write_text(&dir, "aggregate.json", &text),
                None => Ok(()),
            }
        }
    }
}

/// Loads `--config` with overrides, `--seed` applied last, and checks the
/// mode against the verb.
fn config(c: &Common, modes: &[RunMode]) -> Result<RunConfig> {
    let path = c.config.as_deref().ok_or_else(|| Error::config("--config", "required for this command"))?;
    let mut overrides = c.overrides.iter().map(|s| parse_assignment(s)).collect::<Result<Vec<_>>>()?;
    if let Some(seed) = c.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    let cfg = RunConfig::load(path, &overrides)?;
    if !modes.contains(&cfg.mode) {
        let names: Vec<&str> = modes.iter().map(|m| m.name()).collect();
        return Err(Error::config("mode", format!("is {} but this command expects {}", cfg.mode.name(), names.join(" or "))));
    }
    Ok(cfg)
}

fn any_mode(c: &Common) -> Result<RunConfig> {
    config(c, &[RunMode::Pretrain, RunMode::Scratch, RunMode::Finetune, RunMode::Probe])
}

/// Writes `splits.jsonl` plus one manifest per split. All entry paths are
/// made absolute so the outputs can live anywhere.
fn split(c: &Common) -> Result<()> {
    let cfg = any_mode(c)?;
    let path = cfg.data.manifest.as_deref().ok_or_else(|| Error::config("data.manifest", "required for split"))?;
    let mut manifest = Manifest::read(path)?;
    for e in &mut manifest.entries {
        let resolved = Manifest::resolve(path, &e.path);
        let abs = std::path::absolute(&resolved).map_err(|err| Error::io(&resolved, err))?;
        e.path = abs.to_string_lossy().into_owned();
    }
    let splits = stratified_split(&manifest, cfg.split.fractions, cfg.split.mini_fraction, cfg.seed)?;
    create_dir(&c.output_dir)?;
    splits.write(c.output_dir.join("splits.jsonl"))?;
    for s in Split::ALL {
        splits.get(s).write(c.output_dir.join(format!("{}.jsonl", s.name())))?;
    }
    for s in Split::ALL {
        println!("{}: {}", s.name(), splits.get(s).len());
    }
    Ok(())
}

fn eval(c: &Common, ckpt_path: &Path, manifest_path: &Path) -> Result<()> {
    let cfg = match &c.config {
        Some(_) => any_mode(c)?,
        None => RunConfig::defaults(RunMode::Scratch),
    };
    let ckpt = checkpoint::load(ckpt_path)?;
    if ckpt.labels.is_empty() {
        return Err(Error::Checkpoint { path: ckpt_path.to_path_buf(), detail: "holds no class labels; not a classifier".into() });
    }
    let manifest = Manifest::read(manifest_path)?;
    if manifest.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let set = load_labeled(&manifest, manifest_path, &ckpt.labels, cfg.window_s, &cfg.augment)?;
    let metrics = evaluate(&ckpt.model, &set, cfg.batch_size)?;
    let text = to_pretty(&metrics)?;
    println!("{text}");
    write_text(&c.output_dir, "metrics.json", &text)
}

#[derive(Serialize)]
struct PreviewSidecar<'a> {
    path: &'a str,
    index: usize,
    view: &'a str,
    params: &'a crate::dsp::AugmentParams,
}

/// Reproduces the epoch-0 pretraining views of the first `count` recordings.
fn preview(c: &Common, count: usize) -> Result<()> {
    let cfg = any_mode(c)?;
    let path = cfg.data.manifest.as_deref().ok_or_else(|| Error::config("data.manifest", "required for preview-augment"))?;
    let mut manifest = Manifest::read(path)?;
    if manifest.is_empty() {
        return Err(Error::EmptyManifest);
    }
    manifest.entries.truncate(count);
    let clips = load_clips(&manifest, path, cfg.augment.sample_rate)?;
    let noise = match &cfg.data.noise_manifest {
        Some(p) => NoiseBank::new(load_clips(&Manifest::read(p)?, p, cfg.augment.sample_rate)?, cfg.augment.sample_rate)?,
        None => NoiseBank::default(),
    };
    create_dir(&c.output_dir)?;
    for (i, (clip, entry)) in clips.iter().zip(&manifest.entries).enumerate() {
        let pair = view_pair(&cfg, clip, &noise, 0, i)?;
        for ((values, params), view) in pair.iter().zip(["a", "b"]) {
            let stem = format!("view_{i:04}_{view}");
            specfile::write(c.output_dir.join(format!("{stem}.spec")), values)?;
            let sidecar = PreviewSidecar { path: &entry.path, index: i, view, params };
            write_text(&c.output_dir, &format!("{stem}.json"), &to_pretty(&sidecar)?)?;
        }
    }
    Ok(())
}

fn save_run(dir: &Path, ckpt: &Checkpoint, report: &RunReport) -> Result<()> {
    create_dir(dir)?;
    checkpoint::save(&dir.join("model.ckpt"), ckpt)?;
    write_text(dir, "report.json", &to_pretty(report)?)?;
    if let Some(last) = report.epochs.last() {
        println!("{} steps, final loss {:.6}", report.total_steps, last.loss);
    }
    if let Some(m) = &report.test {
        println!("test accuracy {:.4}, macro F1 {:.4}", m.accuracy, m.f1_macro);
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    create_dir(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, format!("{text}\n")).map_err(|e| Error::io(&path, e))
}

fn to_pretty<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|source| Error::Json { context: "serializing output".into(), source })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { context: path.display().to_string(), source })
}
