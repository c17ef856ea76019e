//! The two-view augmentation chain used during pretraining, and the
//! augmentation-free transform used downstream.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::noise::mix_noise;
use super::pitch::pitch_shift;
use super::spectrogram::{fit_frames, log_compress, mask_time_freq, min_max_normalize, MaskParams, Spectrogram};
use super::stft::{frame_count, stft};
use super::stretch::time_stretch;
use crate::audio::{loop_to_len, resample, AudioClip};
use crate::error::{Error, Result};
use crate::rng::RandomStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub sample_rate: u32,
    pub pitch_steps_range: (i32, i32),
    pub snr_range_db: (i32, i32),
    pub fft_size: usize,
    pub hop: usize,
    pub stretch_range: (f64, f64),
    pub max_time_mask: usize,
    pub max_freq_mask: usize,
    pub target_frames: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            sample_rate: 32000,
            pitch_steps_range: (-4, 4),
            snr_range_db: (1, 20),
            fft_size: 800,
            hop: 320,
            stretch_range: (0.9, 1.1),
            max_time_mask: 8,
            max_freq_mask: 16,
            target_frames: 98,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, detail: &str| Err(Error::config(format!("augment.{key}"), detail));
        if self.sample_rate == 0 {
            return bad("sample_rate", "must be positive");
        }
        if self.pitch_steps_range.0 > self.pitch_steps_range.1 {
            return bad("pitch_steps_range", "lower bound exceeds upper bound");
        }
        if self.snr_range_db.0 > self.snr_range_db.1 {
            return bad("snr_range_db", "lower bound exceeds upper bound");
        }
        let (lo, hi) = self.stretch_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad("stretch_range", "must satisfy 0 < lower <= upper");
        }
        if !(self.fft_size > self.hop && self.hop > 0) {
            return bad("fft_size", "require fft_size > hop > 0");
        }
        if self.target_frames == 0 {
            return bad("target_frames", "must be positive");
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frames of an unstretched one-second window.
    pub fn natural_frames(&self) -> usize {
        frame_count(self.sample_rate as usize, self.fft_size, self.hop)
    }
}

/// Background-noise clips, already at the augmentation sample rate.
#[derive(Debug, Clone, Default)]
pub struct NoiseBank {
    clips: Vec<AudioClip>,
}

impl NoiseBank {
    pub fn new(clips: Vec<AudioClip>, sample_rate: u32) -> Result<Self> {
        let clips = clips.iter().map(|c| resample(c, sample_rate)).collect::<Result<_>>()?;
        Ok(NoiseBank { clips })
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseDraw {
    pub index: usize,
    pub offset: usize,
    pub snr_db: i32,
}

/// Every random parameter drawn for one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub pitch_steps: i32,
    pub noise: Option<NoiseDraw>,
    pub stretch_rate: f64,
    pub stretched_frames: usize,
    pub mask: MaskParams,
}

/// Applies pitch shift, background noise, STFT, time stretch, log
/// compression, min-max normalization and time/frequency masking, in that
/// order, returning a `bins x target_frames` view.
pub fn augment_view(
    clip: &AudioClip,
    cfg: &AugmentConfig,
    noise: &NoiseBank,
    rng: &mut RandomStream,
) -> Result<(Spectrogram, AugmentParams)> {
    if clip.sample_rate() != cfg.sample_rate {
        return Err(Error::InvalidArgument(format!(
            "augmentation expects {} sps audio, got {}",
            cfg.sample_rate,
            clip.sample_rate()
        )));
    }
    let pitch_steps = rng.gen_range(cfg.pitch_steps_range.0..=cfg.pitch_steps_range.1);
    let shifted = pitch_shift(clip, pitch_steps)?;

    let (noisy, noise_draw) = if noise.is_empty() {
        (shifted, None)
    } else {
        let index = rng.gen_range(0..noise.len());
        let src = &noise.clips[index];
        let offset = rng.gen_range(0..src.len());
        let snr_db = rng.gen_range(cfg.snr_range_db.0..=cfg.snr_range_db.1);
        let fitted = loop_to_len(src, shifted.len(), offset);
        (mix_noise(&shifted, &fitted, snr_db)?, Some(NoiseDraw { index, offset, snr_db }))
    };

    let spec = stft(&noisy, cfg.fft_size, cfg.hop)?;
    let stretch_rate = rng.gen_range(cfg.stretch_range.0..=cfg.stretch_range.1);
    let stretched = time_stretch(&spec, stretch_rate)?;
    let stretched_frames = stretched.frames();
    let normalized = min_max_normalize(&log_compress(&stretched));
    let fitted = fit_frames(&normalized, cfg.target_frames);
    let (view, mask) = mask_time_freq(&fitted, cfg.max_time_mask, cfg.max_freq_mask, rng);
    Ok((view, AugmentParams { pitch_steps, noise: noise_draw, stretch_rate, stretched_frames, mask }))
}

/// Downstream input transform: STFT, log compression, min-max normalization,
/// no augmentation.
pub fn plain_view(clip: &AudioClip, cfg: &AugmentConfig) -> Result<Spectrogram> {
    let spec = stft(clip, cfg.fft_size, cfg.hop)?;
    Ok(fit_frames(&min_max_normalize(&log_compress(&spec)), cfg.target_frames))
}
