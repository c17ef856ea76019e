//! Run configuration: one JSON document, mode-dependent defaults, dotted
//! command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::dsp::AugmentConfig;
use crate::error::{Error, Result};
use crate::manifest::{Split, SplitFractions};
use crate::model::ModelConfig;
use crate::optim::{OptimizerConfig, Schedule};
use crate::vicreg::VicregWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Pretrain,
    Scratch,
    Finetune,
    Probe,
}

impl RunMode {
    pub fn name(self) -> &'static str {
        match self {
            RunMode::Pretrain => "pretrain",
            RunMode::Scratch => "scratch",
            RunMode::Finetune => "finetune",
            RunMode::Probe => "probe",
        }
    }

    pub fn is_downstream(self) -> bool {
        self != RunMode::Pretrain
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Recordings to pretrain on, or the source manifest for `split`.
    pub manifest: Option<PathBuf>,
    /// Split manifest for downstream training and evaluation.
    pub splits: Option<PathBuf>,
    /// Which split downstream training fits: `train` (10% labeled) or `train_mini` (1%).
    pub train_split: Option<Split>,
    /// Background-noise recordings mixed in during pretraining.
    pub noise_manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    pub fractions: SplitFractions,
    pub mini_fraction: f64,
}

impl Default for SplitSettings {
    fn default() -> Self {
        SplitSettings { fractions: SplitFractions::default(), mini_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: RunMode,
    pub data: DataConfig,
    /// Augmentation ranges (pretraining) and the STFT setup shared by all modes.
    pub augment: AugmentConfig,
    pub model: ModelConfig,
    /// `steps_per_epoch` is derived from the data; leave it 0.
    pub schedule: Schedule,
    pub optimizer: OptimizerConfig,
    pub vicreg: VicregWeights,
    pub split: SplitSettings,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub init_checkpoint: Option<PathBuf>,
    /// Window length fed to the model, in seconds.
    pub window_s: f64,
}

impl RunConfig {
    /// Desk-scale defaults: batch 16, 20 epochs with 2 warmup epochs.
    pub fn defaults(mode: RunMode) -> Self {
        let (schedule, optimizer) = match mode {
            RunMode::Pretrain => (Schedule { warmup_epochs: 2, total_epochs: 20, ..Schedule::pretrain(0) }, OptimizerConfig::sgd()),
            _ => (Schedule { warmup_epochs: 2, total_epochs: 20, ..Schedule::downstream(0) }, OptimizerConfig::adam()),
        };
        RunConfig {
            mode,
            data: DataConfig::default(),
            augment: AugmentConfig::default(),
            model: ModelConfig::default(),
            schedule,
            optimizer,
            vicreg: VicregWeights::default(),
            split: SplitSettings::default(),
            batch_size: 16,
            epochs: 20,
            seed: 0,
            init_checkpoint: None,
            window_s: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.augment.validate()?;
        self.model.validate()?;
        self.optimizer.validate()?;
        self.vicreg.validate()?;
        Schedule { steps_per_epoch: 1, ..self.schedule }.validate()?;
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if self.mode == RunMode::Pretrain && self.batch_size < 2 {
            return Err(Error::config(
                "batch_size",
                format!("is {}, but the variance term needs at least 2 embeddings per batch", self.batch_size),
            ));
        }
        if self.epochs == 0 || self.epochs > self.schedule.total_epochs {
            return Err(Error::config("epochs", format!("must be in 1..={} (schedule.total_epochs)", self.schedule.total_epochs)));
        }
        if !(self.window_s > 0.0 && self.window_s.is_finite()) {
            return Err(Error::config("window_s", "must be positive"));
        }
        let expected = (self.augment.bins(), self.augment.target_frames);
        if self.model.input_shape != expected {
            return Err(Error::config(
                "model.input_shape",
                format!("is {:?} but the STFT setup produces {expected:?}", self.model.input_shape),
            ));
        }
        if matches!(self.mode, RunMode::Finetune | RunMode::Probe) && self.init_checkpoint.is_none() {
            return Err(Error::config("init_checkpoint", format!("required in {} mode", self.mode.name())));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form with `seed` removed, so runs that
    /// differ only in seed share a digest.
    pub fn digest(&self) -> String {
        let mut v = serde_json::to_value(self).expect("serializable");
        v.as_object_mut().expect("object").remove("seed");
        let bytes = serde_json::to_vec(&v).expect("serializable");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Builds a config from a JSON document layered over the defaults of its
    /// `mode`, then applies dotted `key=value` overrides. Every override key
    /// must name an existing field.
    pub fn from_json(doc: Value, overrides: &[(String, String)]) -> Result<Self> {
        let mut doc = match doc {
            Value::Object(_) => doc,
            _ => return Err(Error::config("<root>", "config must be a JSON object")),
        };
        for (key, raw) in overrides.iter().filter(|(k, _)| k == "mode") {
            set_path(&mut doc, key, parse_override(raw), false)?;
        }
        let mode: RunMode = match doc.get("mode") {
            Some(m) => serde_json::from_value(m.clone()).map_err(|e| Error::config("mode", e.to_string()))?,
            None => return Err(Error::config("mode", "missing; expected pretrain, scratch, finetune or probe")),
        };
        let mut merged = serde_json::to_value(RunConfig::defaults(mode)).expect("serializable");
        merge(&mut merged, doc);
        for (key, raw) in overrides {
            set_path(&mut merged, key, parse_override(raw), true)?;
        }
        let cfg: RunConfig = serde_json::from_value(merged).map_err(|e| Error::config("<config>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: Value =
            serde_json::from_str(&text).map_err(|source| Error::Json { context: path.display().to_string(), source })?;
        Self::from_json(doc, overrides)
    }
}

/// Parses `key=value`; the value is read as JSON when it parses, else as a string.
pub fn parse_assignment(arg: &str) -> Result<(String, String)> {
    match arg.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_string(), v.to_string())),
        _ => Err(Error::InvalidArgument(format!("override `{arg}` is not of the form key=value"))),
    }
}

fn parse_override(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn set_path(doc: &mut Value, key: &str, value: Value, must_exist: bool) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = doc;
    for (i, part) in parts.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| Error::config(key, "path runs through a non-object value"))?;
        if i + 1 == parts.len() {
            if must_exist && !obj.contains_key(*part) {
                return Err(Error::config(key, "no such configuration key"));
            }
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.get_mut(*part).ok_or_else(|| Error::config(key, "no such configuration key"))?;
    }
    Ok(())
}
