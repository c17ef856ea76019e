//! Audio ingestion: WAV decoding, resampling and cropping.

mod resample;
mod wav;

pub use resample::{resample, resample_by_ratio};
pub use wav::{load_wav, write_wav, WavEncoding};

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Mono waveform with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("audio clip has no samples".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("audio sample {i}")));
        }
        Ok(AudioClip { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Mean squared amplitude.
    pub fn power(&self) -> f64 {
        self.samples.iter().map(|&s| f64::from(s) * f64::from(s)).sum::<f64>()
            / self.samples.len() as f64
    }
}

fn window_len(duration_s: f64, sample_rate: u32) -> Result<usize> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::InvalidArgument(format!("crop duration must be positive, got {duration_s}")));
    }
    let n = (duration_s * f64::from(sample_rate)).round() as usize;
    if n == 0 {
        return Err(Error::InvalidArgument("crop window rounds to zero samples".into()));
    }
    Ok(n)
}

/// Crops a uniformly placed window of `duration_s` seconds. Clips shorter than
/// the window are right-padded with zeros.
pub fn random_crop(clip: &AudioClip, duration_s: f64, rng: &mut RandomStream) -> Result<AudioClip> {
    let n = window_len(duration_s, clip.sample_rate)?;
    let len = clip.len();
    let samples = if len >= n {
        let start = rng.gen_range(0..=len - n);
        clip.samples[start..start + n].to_vec()
    } else {
        let mut out = clip.samples.clone();
        out.resize(n, 0.0);
        out
    };
    Ok(AudioClip { samples, sample_rate: clip.sample_rate })
}

/// Deterministic window: center crop when longer, right zero-pad when shorter.
pub fn center_window(clip: &AudioClip, duration_s: f64) -> Result<AudioClip> {
    let n = window_len(duration_s, clip.sample_rate)?;
    let len = clip.len();
    let samples = if len >= n {
        let start = (len - n) / 2;
        clip.samples[start..start + n].to_vec()
    } else {
        let mut out = clip.samples.clone();
        out.resize(n, 0.0);
        out
    };
    Ok(AudioClip { samples, sample_rate: clip.sample_rate })
}

/// Repeats or crops `clip` to exactly `len` samples, starting at `offset`.
pub fn loop_to_len(clip: &AudioClip, len: usize, offset: usize) -> AudioClip {
    let src = &clip.samples;
    let samples = (0..len).map(|i| src[(offset + i) % src.len()]).collect();
    AudioClip { samples, sample_rate: clip.sample_rate }
}
