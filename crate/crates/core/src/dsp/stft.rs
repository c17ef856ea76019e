use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::audio::AudioClip;
use crate::error::{Error, Result};

/// Complex STFT: `bins x frames`, `bins = fft_size / 2 + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub values: Array2<Complex64>,
    pub fft_size: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl ComplexSpectrogram {
    pub fn bins(&self) -> usize {
        self.values.nrows()
    }

    pub fn frames(&self) -> usize {
        self.values.ncols()
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn forward_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

pub(crate) fn inverse_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// Number of frames produced without center padding.
pub fn frame_count(len: usize, fft_size: usize, hop: usize) -> usize {
    if len < fft_size {
        0
    } else {
        1 + (len - fft_size) / hop
    }
}

pub(crate) fn stft_samples(x: &[f64], fft_size: usize, hop: usize) -> Array2<Complex64> {
    let frames = frame_count(x.len(), fft_size, hop);
    let bins = fft_size / 2 + 1;
    let window = hann(fft_size);
    let fft = forward_plan(fft_size);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::default(); fft_size];
    let mut out = Array2::zeros((bins, frames));
    for t in 0..frames {
        let start = t * hop;
        for (b, (&s, &w)) in buf.iter_mut().zip(x[start..start + fft_size].iter().zip(&window)) {
            *b = Complex64::new(s * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for f in 0..bins {
            out[[f, t]] = buf[f];
        }
    }
    out
}

/// Hann-windowed STFT without center padding: `1 + (len - fft_size) / hop` frames.
pub fn stft(clip: &AudioClip, fft_size: usize, hop: usize) -> Result<ComplexSpectrogram> {
    if fft_size == 0 || hop == 0 {
        return Err(Error::InvalidArgument("fft size and hop must be positive".into()));
    }
    if clip.len() < fft_size {
        return Err(Error::InvalidArgument(format!(
            "clip of {} samples is shorter than one {fft_size}-point frame",
            clip.len()
        )));
    }
    let x: Vec<f64> = clip.samples().iter().map(|&s| f64::from(s)).collect();
    Ok(ComplexSpectrogram { values: stft_samples(&x, fft_size, hop), fft_size, hop, sample_rate: clip.sample_rate() })
}

/// Weighted overlap-add inverse of [`stft_samples`] using a Hann synthesis window.
pub(crate) fn istft_samples(spec: &Array2<Complex64>, fft_size: usize, hop: usize) -> Vec<f64> {
    let (bins, frames) = spec.dim();
    debug_assert_eq!(bins, fft_size / 2 + 1);
    if frames == 0 {
        return Vec::new();
    }
    let len = (frames - 1) * hop + fft_size;
    let window = hann(fft_size);
    let ifft = inverse_plan(fft_size);
    let mut scratch = vec![Complex64::default(); ifft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::default(); fft_size];
    let mut out = vec![0.0; len];
    let mut norm = vec![0.0; len];
    for t in 0..frames {
        for f in 0..bins {
            buf[f] = spec[[f, t]];
        }
        for f in bins..fft_size {
            buf[f] = spec[[fft_size - f, t]].conj();
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        let start = t * hop;
        for i in 0..fft_size {
            out[start + i] += buf[i].re / fft_size as f64 * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }
    for (o, n) in out.iter_mut().zip(&norm) {
        if *n > 1e-8 {
            *o /= n;
        }
    }
    out
}
