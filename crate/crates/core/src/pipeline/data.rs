//! Loading recordings and turning them into model inputs.

use std::path::Path;

use ndarray::{Array2, Array3};
use rayon::prelude::*;

use crate::audio::{center_window, load_wav, resample, AudioClip};
use crate::dsp::{plain_view, AugmentConfig};
use crate::error::{Error, Result};
use crate::manifest::Manifest;

/// Spectrogram inputs with class indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledViews {
    pub views: Vec<Array2<f32>>,
    pub labels: Vec<usize>,
}

impl LabeledViews {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Decodes every entry of `manifest` (paths relative to `manifest_path`) and
/// resamples to `sample_rate`. Order follows the manifest.
pub fn load_clips(manifest: &Manifest, manifest_path: &Path, sample_rate: u32) -> Result<Vec<AudioClip>> {
    manifest
        .entries
        .par_iter()
        .map(|e| resample(&load_wav(Manifest::resolve(manifest_path, &e.path))?, sample_rate))
        .collect()
}

/// Stacks views into an `n x F x T` batch.
pub fn stack(views: &[&Array2<f32>]) -> Array3<f64> {
    let (f, t) = views.first().map(|v| v.dim()).unwrap_or((0, 0));
    let mut out = Array3::zeros((views.len(), f, t));
    for (mut slot, v) in out.outer_iter_mut().zip(views) {
        slot.zip_mut_with(*v, |d, &s| *d = s as f64);
    }
    out
}

/// Center `window_s` window (zero-padded when short) through the plain
/// downstream transform.
pub fn downstream_view(clip: &AudioClip, window_s: f64, aug: &AugmentConfig) -> Result<Array2<f32>> {
    if clip.sample_rate() != aug.sample_rate {
        return Err(Error::InvalidArgument(format!("expected {} sps audio, got {}", aug.sample_rate, clip.sample_rate())));
    }
    Ok(plain_view(&center_window(clip, window_s)?, aug)?.values)
}

/// Labels are indexed by position in `classes`; a label outside it is an error.
pub fn labeled_views(clips: &[AudioClip], names: &[String], classes: &[String], window_s: f64, aug: &AugmentConfig) -> Result<LabeledViews> {
    let labels = names
        .iter()
        .map(|n| {
            classes.iter().position(|c| c == n).ok_or_else(|| Error::LabelMismatch(format!("`{n}` is not among {classes:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let views = clips.par_iter().map(|c| downstream_view(c, window_s, aug)).collect::<Result<Vec<_>>>()?;
    Ok(LabeledViews { views, labels })
}

/// Loads a manifest's recordings as labeled downstream views.
pub fn load_labeled(manifest: &Manifest, manifest_path: &Path, classes: &[String], window_s: f64, aug: &AugmentConfig) -> Result<LabeledViews> {
    let clips = load_clips(manifest, manifest_path, aug.sample_rate)?;
    let names: Vec<String> = manifest.entries.iter().map(|e| e.label.clone()).collect();
    labeled_views(&clips, &names, classes, window_s, aug)
}
