//! Band-limited resampling with a Kaiser-windowed sinc kernel.

use std::f64::consts::PI;

use super::AudioClip;
use crate::error::{Error, Result};

const KAISER_BETA: f64 = 8.6;
/// Taps per output sample at unit cutoff (half on each side).
const TAPS: usize = 64;

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Points per input-sample interval in the tabulated kernel.
const PHASES: usize = 512;

/// Kaiser-windowed sinc kernel tabulated on a `1/PHASES` grid and linearly
/// interpolated between grid points.
struct Kernel {
    half_width: f64,
    table: Vec<f64>,
}

impl Kernel {
    fn new(ratio: f64) -> Self {
        let cutoff = ratio.min(1.0);
        let half_width = (TAPS / 2) as f64 / cutoff;
        let i0_beta = bessel_i0(KAISER_BETA);
        let len = (half_width * PHASES as f64).ceil() as usize + 2;
        let table = (0..len)
            .map(|i| {
                let dt = i as f64 / PHASES as f64;
                let u = dt / half_width;
                if u >= 1.0 {
                    0.0
                } else {
                    cutoff * sinc(cutoff * dt) * bessel_i0(KAISER_BETA * (1.0 - u * u).sqrt()) / i0_beta
                }
            })
            .collect();
        Kernel { half_width, table }
    }

    /// `sum_j x[j] * w(d0 + j)` for taps at non-negative offsets `d0, d0 + 1, ...`.
    /// Offsets differ by whole samples, so the interpolation fraction is shared.
    fn dot(&self, d0: f64, x: impl Iterator<Item = f32>) -> f64 {
        let pos = d0 * PHASES as f64;
        let base = pos.floor() as usize;
        let frac = pos - base as f64;
        let mut acc = 0.0;
        for (j, v) in x.enumerate() {
            let i = base + j * PHASES;
            if i + 1 >= self.table.len() {
                break;
            }
            acc += f64::from(v) * (self.table[i] * (1.0 - frac) + self.table[i + 1] * frac);
        }
        acc
    }
}

/// Resamples `samples` so that output index `m` sits at input position `m / ratio`,
/// producing exactly `out_len` samples.
pub fn resample_by_ratio(samples: &[f32], ratio: f64, out_len: usize) -> Vec<f32> {
    assert!(ratio > 0.0 && ratio.is_finite());
    let kernel = Kernel::new(ratio);
    let n = samples.len() as isize;
    (0..out_len)
        .map(|m| {
            let t = m as f64 / ratio;
            let lo = (t - kernel.half_width).ceil().max(0.0) as isize;
            let hi = ((t + kernel.half_width).floor() as isize).min(n - 1);
            // Taps at or left of t, walking leftwards, then taps right of t.
            let center = (t.floor() as isize).min(hi);
            let mut acc = 0.0;
            if center >= lo {
                let left = samples[lo as usize..=center as usize].iter().rev().copied();
                acc += kernel.dot(t - center as f64, left);
            }
            let first_right = (center + 1).max(lo);
            if first_right <= hi {
                let right = samples[first_right as usize..=hi as usize].iter().copied();
                acc += kernel.dot(first_right as f64 - t, right);
            }
            acc as f32
        })
        .collect()
}

/// Resamples to `target_rate`; output length is `round(len * target / source)`.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(Error::InvalidArgument("target sample rate must be positive".into()));
    }
    let source_rate = clip.sample_rate();
    if source_rate == target_rate {
        return Ok(clip.clone());
    }
    let ratio = f64::from(target_rate) / f64::from(source_rate);
    let out_len = ((clip.len() as f64 * ratio).round() as usize).max(1);
    AudioClip::new(resample_by_ratio(clip.samples(), ratio, out_len), target_rate)
}
