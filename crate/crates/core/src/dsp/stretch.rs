
use ndarray::Array2;
use rustfft::num_complex::Complex64;

use super::stft::{istft_samples, stft_samples, ComplexSpectrogram};
use crate::error::{Error, Result};

/// Phase-vocoder stretch of complex frames to `out_frames` frames. Output
/// frame `k` reads source position `k / factor`; magnitudes are linearly
/// interpolated and phases accumulate the source frame-to-frame advance.
fn vocode(values: &Array2<Complex64>, factor: f64, out_frames: usize) -> Array2<Complex64> {
    let (bins, frames) = values.dim();
    let mags = values.mapv(|c| c.norm());
    let args = values.mapv(|c| c.arg());
    let taps: Vec<(usize, usize, f64)> = (0..out_frames)
        .map(|k| {
            let pos = k as f64 / factor;
            let i = (pos.floor() as usize).min(frames - 1);
            (i, (i + 1).min(frames - 1), (pos - i as f64).clamp(0.0, 1.0))
        })
        .collect();
    let mut out = Array2::zeros((bins, out_frames));
    for f in 0..bins {
        let (m, a) = (mags.row(f), args.row(f));
        let mut phase = a[0];
        for (slot, &(i, j, alpha)) in out.row_mut(f).iter_mut().zip(&taps) {
            *slot = Complex64::from_polar((1.0 - alpha) * m[i] + alpha * m[j], phase);
            phase += a[j] - a[i];
        }
    }
    out
}

/// Stretches the time axis to `round(frames * rate)` frames without changing
/// the frequency axis. `rate > 1` lengthens.
pub fn time_stretch(spec: &ComplexSpectrogram, rate: f64) -> Result<ComplexSpectrogram> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidArgument(format!("stretch rate must be positive, got {rate}")));
    }
    if rate == 1.0 || spec.frames() == 0 {
        return Ok(spec.clone());
    }
    let out_frames = ((spec.frames() as f64 * rate).round() as usize).max(1);
    Ok(ComplexSpectrogram { values: vocode(&spec.values, rate, out_frames), ..spec.clone() })
}

const VOCODER_FFT: usize = 1024;
const VOCODER_HOP: usize = 256;

/// Waveform time stretch to exactly `target_len` samples, pitch preserved.
pub(crate) fn stretch_waveform(x: &[f64], target_len: usize) -> Vec<f64> {
    if x.len() == target_len {
        return x.to_vec();
    }
    let pad = VOCODER_FFT / 2;
    let mut padded = vec![0.0; x.len() + 2 * pad];
    padded[pad..pad + x.len()].copy_from_slice(x);
    let spec = stft_samples(&padded, VOCODER_FFT, VOCODER_HOP);
    let factor = target_len as f64 / x.len() as f64;
    let out_frames = ((spec.ncols() as f64 * factor).round() as usize).max(1);
    let y = istft_samples(&vocode(&spec, factor, out_frames), VOCODER_FFT, VOCODER_HOP);
    (0..target_len).map(|i| y.get(i + pad).copied().unwrap_or(0.0)).collect()
}
