//! Self-supervised pretraining with the VICReg objective.

use ndarray::{Array2, Array3, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::config::{RunConfig, RunMode};
use super::data::{load_clips, stack};
use super::report::{EpochRecord, RunReport, Timing};
use crate::audio::{random_crop, AudioClip};
use crate::dsp::{augment_view, AugmentParams, NoiseBank};
use crate::error::{Error, Result};
use crate::manifest::Manifest;
use crate::model::checkpoint::Checkpoint;
use crate::model::Model;
use crate::optim::{lr_at, OptState};
use crate::rng::{ops, RandomStream};
use crate::vicreg::LossBreakdown;

/// Optimizer steps per pretraining epoch: full batches, plus the remainder
/// when it holds at least 2 clips.
pub fn pretrain_steps_per_epoch(clips: usize, batch: usize) -> usize {
    clips / batch + usize::from(clips % batch >= 2)
}

/// Both augmented views of one clip for `epoch`: a fresh random crop, then
/// the augmentation chain on lanes `VIEW_A` and `VIEW_B`.
pub fn view_pair(
    cfg: &RunConfig,
    clip: &AudioClip,
    noise: &NoiseBank,
    epoch: usize,
    index: usize,
) -> Result<[(Array2<f32>, AugmentParams); 2]> {
    let (e, i) = (epoch as u64, index as u64);
    let crop = random_crop(clip, cfg.window_s, &mut RandomStream::lane(cfg.seed, e, i, ops::CROP))?;
    let a = augment_view(&crop, &cfg.augment, noise, &mut RandomStream::lane(cfg.seed, e, i, ops::VIEW_A))?;
    let b = augment_view(&crop, &cfg.augment, noise, &mut RandomStream::lane(cfg.seed, e, i, ops::VIEW_B))?;
    Ok([(a.0.values, a.1), (b.0.values, b.1)])
}

/// Pretrains on the recordings listed in `cfg.data.manifest`.
pub fn pretrain(cfg: &RunConfig) -> Result<(Checkpoint, RunReport)> {
    let path = cfg.data.manifest.as_deref().ok_or_else(|| Error::config("data.manifest", "required for pretraining"))?;
    let manifest = Manifest::read(path)?;
    if manifest.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let clips = load_clips(&manifest, path, cfg.augment.sample_rate)?;
    let noise = match &cfg.data.noise_manifest {
        Some(p) => NoiseBank::new(load_clips(&Manifest::read(p)?, p, cfg.augment.sample_rate)?, cfg.augment.sample_rate)?,
        None => NoiseBank::default(),
    };
    pretrain_clips(cfg, &clips, &noise)
}

/// Pretraining on in-memory clips already at `cfg.augment.sample_rate`.
pub fn pretrain_clips(cfg: &RunConfig, clips: &[AudioClip], noise: &NoiseBank) -> Result<(Checkpoint, RunReport)> {
    if cfg.mode != RunMode::Pretrain {
        return Err(Error::config("mode", format!("pretraining needs mode pretrain, got {}", cfg.mode.name())));
    }
    cfg.validate()?;
    if clips.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let started = Timing::start();
    let steps_per_epoch = pretrain_steps_per_epoch(clips.len(), cfg.batch_size);
    if steps_per_epoch == 0 {
        return Err(Error::config("batch_size", "dataset holds fewer than 2 recordings; no batch can be formed"));
    }
    let schedule = crate::optim::Schedule { steps_per_epoch, ..cfg.schedule };
    let mut model = Model::new(cfg.model.for_pretraining(), cfg.seed)?;
    let mut state = OptState::new(&model.params);
    let mut step = 0;
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..clips.len()).collect();
        order.shuffle(&mut RandomStream::lane(cfg.seed, epoch as u64, 0, ops::SHUFFLE));
        let mut sum = LossBreakdown::default();
        let mut lr = 0.0;
        for batch in order.chunks(cfg.batch_size).filter(|b| b.len() >= 2) {
            let pairs = batch
                .par_iter()
                .map(|&i| view_pair(cfg, &clips[i], noise, epoch, i))
                .collect::<Result<Vec<_>>>()?;
            let va = stack(&pairs.iter().map(|p| &p[0].0).collect::<Vec<_>>());
            let vb = stack(&pairs.iter().map(|p| &p[1].0).collect::<Vec<_>>());
            lr = lr_at(&schedule, step)?;
            let (loss, grads) = model.ssl_loss_and_grads(&va, &vb, &cfg.vicreg)?;

            cfg.optimizer.step(&mut model.params, &grads, &mut state, lr)?;
            model.params.round_to_f32();
            add(&mut sum, &loss);
            step += 1;
        }
        let mean = scale(&sum, 1.0 / steps_per_epoch as f64);
        if !mean.is_finite() {
            return Err(Error::NonFinite(format!("pretraining loss in epoch {epoch}")));
        }
        epochs.push(EpochRecord { epoch, steps: steps_per_epoch, lr, loss: mean.total, components: Some(mean), validation: None });
    }

    let report = RunReport {
        mode: RunMode::Pretrain,
        seed: cfg.seed,
        config_digest: cfg.digest(),
        total_steps: step,
        epochs,
        test: None,
        timing: Timing::finish(started),
    };
    Ok((Checkpoint { model, seed: cfg.seed, epoch: cfg.epochs, labels: vec![] }, report))
}

fn add(acc: &mut LossBreakdown, l: &LossBreakdown) {
    acc.invariance += l.invariance;
    acc.variance_a += l.variance_a;
    acc.variance_b += l.variance_b;
    acc.covariance_a += l.covariance_a;
    acc.covariance_b += l.covariance_b;
    acc.total += l.total;
}

fn scale(l: &LossBreakdown, s: f64) -> LossBreakdown {
    LossBreakdown {
        invariance: l.invariance * s,
        variance_a: l.variance_a * s,
        variance_b: l.variance_b * s,
        covariance_a: l.covariance_a * s,
        covariance_b: l.covariance_b * s,
        total: l.total * s,
    }
}

/// Mean over embedding dimensions of the sample standard deviation of
/// eval-mode projector outputs.
pub fn embedding_std(model: &Model, views: &Array3<f64>) -> Result<f64> {
    if views.len_of(Axis(0)) < 2 {
        return Err(Error::InvalidArgument("need at least 2 inputs to measure spread".into()));
    }
    let z = model.project(&model.encode(views)?)?;
    let n = z.nrows() as f64;
    let mean = z.mean_axis(Axis(0)).expect("rows");
    let stds = z.axis_iter(Axis(1)).zip(mean.iter()).map(|(col, &mu)| (col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1.0)).sqrt());
    Ok(stds.sum::<f64>() / z.ncols() as f64)
}
