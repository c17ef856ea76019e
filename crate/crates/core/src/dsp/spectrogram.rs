use ndarray::{s, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::stft::ComplexSpectrogram;
use crate::rng::RandomStream;

/// Smallest magnitude passed to the logarithm.
pub const MAGNITUDE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Decibel,
    Normalized,
}

/// Real `bins x frames` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values: Array2<f32>,
    pub scale: Scale,
}

impl Spectrogram {
    pub fn bins(&self) -> usize {
        self.values.nrows()
    }

    pub fn frames(&self) -> usize {
        self.values.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MaskParams {
    pub time_start: usize,
    pub time_width: usize,
    pub freq_start: usize,
    pub freq_width: usize,
}

pub fn log_compress(spec: &ComplexSpectrogram) -> Spectrogram {
    Spectrogram {
        values: spec.values.mapv(|z| (20.0 * z.norm().max(MAGNITUDE_FLOOR).log10()) as f32),
        scale: Scale::Decibel,
    }
}

/// Rescales one spectrogram to [0, 1]; a constant input maps to zeros.
pub fn min_max_normalize(spec: &Spectrogram) -> Spectrogram {
    let (lo, hi) = spec
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(f64::from(v)), hi.max(f64::from(v))));
    let range = hi - lo;
    let values = if range > 0.0 && range.is_finite() {
        spec.values.mapv(|v| ((f64::from(v) - lo) / range) as f32)
    } else {
        Array2::zeros(spec.values.raw_dim())
    };
    Spectrogram { values, scale: Scale::Normalized }
}

/// Center-crops or right-pads (with zeros) the time axis to `frames`.
pub fn fit_frames(spec: &Spectrogram, frames: usize) -> Spectrogram {
    let t = spec.frames();
    let values = if t >= frames {
        let start = (t - frames) / 2;
        spec.values.slice(s![.., start..start + frames]).to_owned()
    } else {
        let mut v = Array2::zeros((spec.bins(), frames));
        v.slice_mut(s![.., ..t]).assign(&spec.values);
        v
    };
    Spectrogram { values, scale: spec.scale }
}

/// Zeroes one random band of time frames and one of frequency bins. Widths are
/// uniform on `0..=max`, starts uniform over valid positions.
pub fn mask_time_freq(
    spec: &Spectrogram,
    max_time: usize,
    max_freq: usize,
    rng: &mut RandomStream,
) -> (Spectrogram, MaskParams) {
    let (bins, frames) = spec.values.dim();
    let time_width = rng.gen_range(0..=max_time).min(frames);
    let time_start = rng.gen_range(0..=frames - time_width);
    let freq_width = rng.gen_range(0..=max_freq).min(bins);
    let freq_start = rng.gen_range(0..=bins - freq_width);
    let mut values = spec.values.clone();
    values.slice_mut(s![.., time_start..time_start + time_width]).fill(0.0);
    values.slice_mut(s![freq_start..freq_start + freq_width, ..]).fill(0.0);
    (Spectrogram { values, scale: spec.scale }, MaskParams { time_start, time_width, freq_start, freq_width })
}
