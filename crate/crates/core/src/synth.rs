//! Synthetic tone recordings with class-specific spectro-temporal texture,
//! for smoke tests and desk-scale experiments.
//!
//! Every clip draws its own base frequency, so classes differ in shape
//! (steady, harmonic, frequency-modulated, pulsed, swept, noisy) rather than
//! in absolute pitch.

use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng;

use crate::audio::{write_wav, AudioClip, WavEncoding};
use crate::error::{Error, Result};
use crate::manifest::{Manifest, ManifestEntry};
use crate::rng::RandomStream;

pub const CLASS_NAMES: [&str; 6] = ["steady", "harmonic", "warble", "pulse", "sweep", "hiss"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneSpec {
    pub classes: usize,
    pub per_class: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    /// Amplitude of white background noise added to every clip.
    pub noise_level: f64,
}

impl Default for ToneSpec {
    fn default() -> Self {
        ToneSpec { classes: 4, per_class: 50, duration_s: 1.5, sample_rate: 32000, noise_level: 0.02 }
    }
}

/// One clip of class `class` drawn from `rng`.
pub fn tone_clip(class: usize, duration_s: f64, sample_rate: u32, noise_level: f64, rng: &mut RandomStream) -> Result<AudioClip> {
    if class >= CLASS_NAMES.len() {
        return Err(Error::InvalidArgument(format!("synthetic class {class} out of range (max {})", CLASS_NAMES.len() - 1)));
    }
    let sr = sample_rate as f64;
    let n = (duration_s * sr).round() as usize;
    let f0 = rng.gen_range(400.0..3200.0);
    let amp = rng.gen_range(0.3..0.8);
    let phase0 = rng.gen_range(0.0..TAU);
    let rate = rng.gen_range(4.0..9.0);
    let mut phase = phase0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / sr;
        let v = match class {
            0 => (TAU * f0 * t + phase0).sin(),
            1 => (1..=4).map(|h| (TAU * f0 * h as f64 * t + phase0 * h as f64).sin() / h as f64).sum::<f64>() * 0.6,
            2 => {
                phase += TAU * f0 * (1.0 + 0.15 * (TAU * rate * t).sin()) / sr;
                phase.sin()
            }
            3 => {
                let gate = if (t * rate).fract() < 0.3 { 1.0 } else { 0.0 };
                gate * (TAU * f0 * t + phase0).sin()
            }
            4 => {
                let sweep = f0 * (1.0 + 0.8 * (t * rate / 2.0).fract());
                phase += TAU * sweep / sr;
                phase.sin()
            }
            _ => rng.gen_range(-1.0..1.0) * (TAU * rate * t).sin().abs(),
        };
        let bg = if noise_level > 0.0 { rng.gen_range(-noise_level..noise_level) } else { 0.0 };
        out.push((amp * v + bg) as f32);
    }
    AudioClip::new(out, sample_rate)
}

/// `spec.classes * spec.per_class` clips with labels, class-major order.
pub fn tone_dataset(spec: &ToneSpec, seed: u64) -> Result<Vec<(AudioClip, usize)>> {
    let mut out = Vec::with_capacity(spec.classes * spec.per_class);
    for class in 0..spec.classes {
        for k in 0..spec.per_class {
            let index = (class * spec.per_class + k) as u64;
            let mut rng = RandomStream::lane(seed, 0, index, 0);
            out.push((tone_clip(class, spec.duration_s, spec.sample_rate, spec.noise_level, &mut rng)?, class));
        }
    }
    Ok(out)
}

/// Writes the dataset as 16-bit WAV files under `dir` plus `dir/manifest.jsonl`
/// with paths relative to `dir`, and returns the manifest path.
pub fn write_tone_dataset(dir: &Path, spec: &ToneSpec, seed: u64) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    for (i, (clip, class)) in tone_dataset(spec, seed)?.into_iter().enumerate() {
        let name = format!("{}_{i:04}.wav", CLASS_NAMES[class]);
        write_wav(dir.join(&name), &clip, WavEncoding::Int16)?;
        entries.push(ManifestEntry {
            path: name,
            label: CLASS_NAMES[class].to_string(),
            duration_s: clip.duration_s(),
            sample_rate: clip.sample_rate(),
        });
    }
    let path = dir.join("manifest.jsonl");
    Manifest::new(entries)?.write(&path)?;
    Ok(path)
}
