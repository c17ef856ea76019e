//! Named parameter and buffer storage.
//!
//! Entries iterate in creation order, which is also checkpoint order:
//! encoder blocks (conv weight, then batch-norm weight, bias, running mean,
//! running variance), projector hidden layers (linear weight, bias, then the
//! batch-norm entries), projector output layer, classifier.
//!
//! Values are kept as `f64` for arithmetic but every training-path write
//! rounds to the nearest `f32`, so checkpoints (stored as `f32`) round-trip
//! exactly.

use std::collections::HashMap;

use rand::Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::rng::{ops, RandomStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    /// Trainable weight that receives weight decay.
    Weight,
    /// Trainable bias or normalization affine parameter (no weight decay).
    Affine,
    /// Running statistic, updated by forward passes rather than gradients.
    Buffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub kind: EntryKind,
    pub requires_grad: bool,
}

impl ParamEntry {
    pub fn is_trainable(&self) -> bool {
        self.kind != EntryKind::Buffer
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
}

/// Rounds to the nearest representable `f32`.
#[inline]
pub fn to_f32_grid(x: f64) -> f64 {
    x as f32 as f64
}

impl ParamStore {
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>, kind: EntryKind) -> Result<()> {
        let name = name.into();
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::shape(format!("entry {name}: shape {shape:?} vs {} values", values.len())));
        }
        if self.index.contains_key(&name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter name {name}")));
        }
        self.index.insert(name.clone(), self.entries.len());
        let requires_grad = kind != EntryKind::Buffer;
        self.entries.push(ParamEntry { name, shape, values, kind, requires_grad });
        Ok(())
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry> {
        self.position(name).map(|i| &self.entries[i])
    }

    /// Values of a named entry; panics if absent (names are produced internally).
    pub fn get(&self, name: &str) -> &[f64] {
        match self.position(name) {
            Some(i) => &self.entries[i].values,
            None => panic!("no parameter named {name}"),
        }
    }

    pub fn get_mut(&mut self, name: &str) -> &mut [f64] {
        match self.position(name) {
            Some(i) => &mut self.entries[i].values,
            None => panic!("no parameter named {name}"),
        }
    }

    pub fn values_at_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.entries[index].values
    }

    /// Sets `requires_grad` on every trainable entry whose name starts with `prefix`.
    pub fn set_requires_grad(&mut self, prefix: &str, flag: bool) {
        for e in self.entries.iter_mut().filter(|e| e.name.starts_with(prefix) && e.is_trainable()) {
            e.requires_grad = flag;
        }
    }

    /// Total number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.entries.iter().filter(|e| e.is_trainable()).map(|e| e.values.len()).sum()
    }

    /// Copies every entry under `prefix` from `src`; names and shapes must match.
    pub fn copy_prefix_from(&mut self, src: &ParamStore, prefix: &str) -> Result<usize> {
        let mut copied = 0;
        for e in self.entries.iter_mut().filter(|e| e.name.starts_with(prefix)) {
            let s = src
                .entry(&e.name)
                .ok_or_else(|| Error::shape(format!("source is missing parameter {}", e.name)))?;
            if s.shape != e.shape {
                return Err(Error::shape(format!("{}: shape {:?} vs {:?}", e.name, s.shape, e.shape)));
            }
            e.values.clone_from(&s.values);
            copied += 1;
        }
        Ok(copied)
    }

    pub fn round_to_f32(&mut self) {
        for e in &mut self.entries {
            e.values.iter_mut().for_each(|v| *v = to_f32_grid(*v));
        }
    }
}

/// Gradient buffers aligned with a [`ParamStore`]'s entry order. Buffers and
/// entries outside the computation hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    names: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Gradients {
            names: store.entries.iter().map(|e| e.name.clone()).collect(),
            values: store.entries.iter().map(|e| vec![0.0; e.values.len()]).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i].as_slice())
    }

    pub(crate) fn slot(&mut self, store: &ParamStore, name: &str) -> &mut [f64] {
        let i = store.position(name).unwrap_or_else(|| panic!("no parameter named {name}"));
        &mut self.values[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.names.iter().map(String::as_str).zip(self.values.iter().map(Vec::as_slice))
    }

    pub fn at(&self, index: usize) -> &[f64] {
        &self.values[index]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().flatten().all(|v| v.is_finite())
    }
}

pub(crate) fn conv_weight(block: usize) -> String {
    format!("encoder.block{block}.conv.weight")
}

pub(crate) fn bn_names(prefix: &str) -> [String; 4] {
    [
        format!("{prefix}.bn.weight"),
        format!("{prefix}.bn.bias"),
        format!("{prefix}.bn.running_mean"),
        format!("{prefix}.bn.running_var"),
    ]
}

fn push_bn(store: &mut ParamStore, prefix: &str, c: usize) -> Result<()> {
    let [w, b, m, v] = bn_names(prefix);
    store.push(w, vec![c], vec![1.0; c], EntryKind::Affine)?;
    store.push(b, vec![c], vec![0.0; c], EntryKind::Affine)?;
    store.push(m, vec![c], vec![0.0; c], EntryKind::Buffer)?;
    store.push(v, vec![c], vec![1.0; c], EntryKind::Buffer)
}

fn uniform(n: usize, fan_in: usize, rng: &mut RandomStream) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| to_f32_grid(rng.gen_range(-bound..bound))).collect()
}

fn push_linear(store: &mut ParamStore, prefix: &str, out: usize, inp: usize, seed: u64) -> Result<()> {
    let mut rng = RandomStream::lane(seed, 0, store.len() as u64, ops::INIT);
    store.push(format!("{prefix}.weight"), vec![out, inp], uniform(out * inp, inp, &mut rng), EntryKind::Weight)?;
    store.push(format!("{prefix}.bias"), vec![out], vec![0.0; out], EntryKind::Affine)
}

/// Fresh parameters: fan-in scaled uniform weights in `[-1/sqrt(fan_in), 1/sqrt(fan_in))`,
/// zero biases, unit batch-norm scales, zero shifts, running mean 0 and variance 1.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let mut store = ParamStore::default();
    let mut in_ch = 1;
    for (i, b) in cfg.encoder_blocks.iter().enumerate() {
        let per_group = in_ch / b.groups;
        let fan_in = per_group * 9;
        let mut rng = RandomStream::lane(seed, 0, store.len() as u64, ops::INIT);
        store.push(
            conv_weight(i),
            vec![b.channels, per_group, 3, 3],
            uniform(b.channels * fan_in, fan_in, &mut rng),
            EntryKind::Weight,
        )?;
        push_bn(&mut store, &format!("encoder.block{i}"), b.channels)?;
        in_ch = b.channels;
    }
    if cfg.has_projector() {
        let mut width = cfg.encoder_out_dim;
        for k in 0..cfg.projector_hidden_layers {
            let prefix = format!("projector.hidden{k}");
            push_linear(&mut store, &format!("{prefix}.linear"), cfg.projector_dim, width, seed)?;
            push_bn(&mut store, &prefix, cfg.projector_dim)?;
            width = cfg.projector_dim;
        }
        push_linear(&mut store, "projector.out", cfg.projector_dim, width, seed)?;
    }
    if cfg.has_classifier() {
        push_linear(&mut store, "classifier", cfg.num_classes, cfg.encoder_out_dim, seed)?;
    }
    Ok(store)
}
