//! Supervised training on labeled spectrograms: from scratch, fine-tuning a
//! pretrained encoder, or a linear probe on a frozen one.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;

use super::config::{RunConfig, RunMode};
use super::data::{load_labeled, stack, LabeledViews};
use super::report::{EpochRecord, RunReport, Timing};
use crate::error::{Error, Result};
use crate::manifest::{Split, SplitManifest};
use crate::metrics::{compute_metrics, Metrics};
use crate::model::checkpoint::{self, Checkpoint};
use crate::model::{FeatureBatch, Model};
use crate::optim::{lr_at, OptState, Schedule};
use crate::rng::{ops, RandomStream};

/// Train, validation and test views sharing one class list.
#[derive(Debug, Clone, PartialEq)]
pub struct DownstreamData {
    pub classes: Vec<String>,
    pub train: LabeledViews,
    pub validation: LabeledViews,
    pub test: LabeledViews,
}

/// Reads the split manifest named by `cfg.data.splits`. Classes are the
/// sorted label set over all four splits.
pub fn load_downstream_data(cfg: &RunConfig) -> Result<DownstreamData> {
    let path = cfg.data.splits.as_deref().ok_or_else(|| Error::config("data.splits", "required for downstream training"))?;
    let splits = SplitManifest::read(path)?;
    let mut classes: Vec<String> = Split::ALL.iter().flat_map(|&s| splits.get(s).labels()).collect();
    classes.sort();
    classes.dedup();
    let train_split = cfg.data.train_split.unwrap_or(Split::Train);
    let load = |s: Split| load_labeled(splits.get(s), path, &classes, cfg.window_s, &cfg.augment);
    Ok(DownstreamData { train: load(train_split)?, validation: load(Split::Validation)?, test: load(Split::Test)?, classes })
}

/// Trains per `cfg.mode` on the data in `cfg.data.splits`, loading
/// `cfg.init_checkpoint` for fine-tuning and probing.
pub fn train_downstream(cfg: &RunConfig) -> Result<(Checkpoint, RunReport)> {
    cfg.validate()?;
    let init = match cfg.mode {
        RunMode::Finetune | RunMode::Probe => {
            let path = cfg.init_checkpoint.as_deref().expect("validated");
            Some(checkpoint::load(path)?)
        }
        _ => None,
    };
    let data = load_downstream_data(cfg)?;
    train_downstream_on(cfg, &data, init.as_ref())
}

/// Predicts in chunks of `batch` and scores against `set.labels`.
pub fn evaluate(model: &Model, set: &LabeledViews, batch: usize) -> Result<Metrics> {
    let logits = predict(model, set, batch)?;
    compute_metrics(&set.labels, &logits)
}

fn predict(model: &Model, set: &LabeledViews, batch: usize) -> Result<Array2<f64>> {
    let mut parts = Vec::new();
    for chunk in set.views.chunks(batch.max(1)) {
        parts.push(model.predict(&stack(&chunk.iter().collect::<Vec<_>>()))?);
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(Axis(0), &views).map_err(|e| Error::shape(e.to_string()))
}

fn encode_all(model: &Model, set: &LabeledViews, batch: usize) -> Result<FeatureBatch> {
    let mut parts = Vec::new();
    for chunk in set.views.chunks(batch.max(1)) {
        parts.push(model.encode(&stack(&chunk.iter().collect::<Vec<_>>()))?);
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(Axis(0), &views).map_err(|e| Error::shape(e.to_string()))
}

/// Downstream training on prepared views. `init` supplies the encoder for
/// fine-tuning and probing and is ignored from scratch.
pub fn train_downstream_on(cfg: &RunConfig, data: &DownstreamData, init: Option<&Checkpoint>) -> Result<(Checkpoint, RunReport)> {
    if !cfg.mode.is_downstream() {
        return Err(Error::config("mode", "downstream training needs mode scratch, finetune or probe"));
    }
    if data.train.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let k = data.classes.len();
    if cfg.model.num_classes != k {
        return Err(Error::LabelMismatch(format!(
            "model.num_classes is {} but the data has {k} classes {:?}",
            cfg.model.num_classes, data.classes
        )));
    }
    let started = Timing::start();
    let model_cfg = cfg.model.for_downstream(k);
    let mut model = Model::new(model_cfg.clone(), cfg.seed)?;
    if cfg.mode != RunMode::Scratch {
        let init = init.ok_or_else(|| Error::config("init_checkpoint", format!("required in {} mode", cfg.mode.name())))?;
        if !init.model.config.same_encoder(&model_cfg) {
            return Err(Error::config("init_checkpoint", "checkpoint encoder does not match model config"));
        }
        model.params.copy_prefix_from(&init.model.params, "encoder.")?;
    }
    let probe = cfg.mode == RunMode::Probe;
    if probe {
        model.params.set_requires_grad("encoder.", false);
    }
    // The frozen encoder is deterministic in eval mode, so its features are computed once.
    let cached = if probe { Some(encode_all(&model, &data.train, cfg.batch_size)?) } else { None };

    let n = data.train.len();
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let schedule = Schedule { steps_per_epoch, ..cfg.schedule };
    let mut state = OptState::new(&model.params);
    let mut step = 0;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut RandomStream::lane(cfg.seed, epoch as u64, 0, ops::SHUFFLE));
        let (mut loss_sum, mut lr) = (0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let labels: Vec<usize> = batch.iter().map(|&i| data.train.labels[i]).collect();
            let (loss, grads) = match &cached {
                Some(features) => model.classifier_loss_and_grads(&features.select(Axis(0), batch), &labels)?,
                None => {
                    let views = stack(&batch.iter().map(|&i| &data.train.views[i]).collect::<Vec<_>>());
                    model.supervised_loss_and_grads(&views, &labels, false)?
                }
            };
            lr = lr_at(&schedule, step)?;
            cfg.optimizer.step(&mut model.params, &grads, &mut state, lr)?;
            model.params.round_to_f32();
            loss_sum += loss;
            step += 1;
        }
        let loss = loss_sum / steps_per_epoch as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss in epoch {epoch}")));
        }
        let validation = if data.validation.is_empty() { None } else { Some(evaluate(&model, &data.validation, cfg.batch_size)?) };
        epochs.push(EpochRecord { epoch, steps: steps_per_epoch, lr, loss, components: None, validation });
    }
    let test = if data.test.is_empty() { None } else { Some(evaluate(&model, &data.test, cfg.batch_size)?) };
    let report = RunReport {
        mode: cfg.mode,
        seed: cfg.seed,
        config_digest: cfg.digest(),
        total_steps: step,
        epochs,
        test,
        timing: Timing::finish(started),
    };
    Ok((Checkpoint { model, seed: cfg.seed, epoch: cfg.epochs, labels: data.classes.clone() }, report))
}
