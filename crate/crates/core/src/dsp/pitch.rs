use crate::audio::{resample_by_ratio, AudioClip};
use crate::error::{Error, Result};

use super::stretch::stretch_waveform;

/// Shifts pitch by `steps` semitones (12 per octave), keeping the length.
///
/// The clip is resampled by `2^(-steps/12)`, which scales every frequency by
/// `2^(steps/12)` at the original playback rate, then phase-vocoded back to
/// its original length.
pub fn pitch_shift(clip: &AudioClip, steps: i32) -> Result<AudioClip> {
    if steps == 0 {
        return Ok(clip.clone());
    }
    if steps.abs() > 24 {
        return Err(Error::InvalidArgument(format!("pitch shift of {steps} steps is out of range")));
    }
    let ratio = 2f64.powf(-f64::from(steps) / 12.0);
    let len = clip.len();
    let shifted_len = ((len as f64 * ratio).round() as usize).max(1);
    let shifted: Vec<f64> =
        resample_by_ratio(clip.samples(), ratio, shifted_len).into_iter().map(f64::from).collect();
    let out = stretch_waveform(&shifted, len);
    AudioClip::new(out.into_iter().map(|v| v as f32).collect(), clip.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(freq: f64, rate: u32, n: usize) -> AudioClip {
        AudioClip::new((0..n).map(|i| (0.5 * (2.0 * PI * freq * i as f64 / f64::from(rate)).sin()) as f32).collect(), rate)
            .unwrap()
    }

    fn dft_peak_hz(x: &[f32], rate: u32) -> f64 {
        let n = x.len();
        let mut best = (0, 0.0);
        for k in 1..n / 2 {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &v) in x.iter().enumerate() {
                let a = -2.0 * PI * ((k * i) % n) as f64 / n as f64;
                re += f64::from(v) * a.cos();
                im += f64::from(v) * a.sin();
            }
            if re * re + im * im > best.1 {
                best = (k, re * re + im * im);
            }
        }
        best.0 as f64 * f64::from(rate) / n as f64
    }

    #[test]
    fn zero_steps_is_identity() {
        let c = sine(440.0, 32000, 32000);
        assert_eq!(pitch_shift(&c, 0).unwrap(), c);
    }

    #[test]
    fn octave_up_doubles_frequency() {
        let out = pitch_shift(&sine(440.0, 32000, 32000), 12).unwrap();
        assert_eq!(out.len(), 32000);
        let n = 4096;
        let peak = dft_peak_hz(&out.samples()[12000..12000 + n], 32000);
        assert!((peak - 880.0).abs() <= 32000.0 / n as f64, "{peak}");
    }

    #[test]
    fn four_steps_down() {
        let out = pitch_shift(&sine(1000.0, 32000, 32000), -4).unwrap();
        assert_eq!(out.len(), 32000);
        let n = 4096;
        let want = 1000.0 * 2f64.powf(-4.0 / 12.0);
        let peak = dft_peak_hz(&out.samples()[12000..12000 + n], 32000);
        assert!((peak - want).abs() <= 32000.0 / n as f64, "{peak} vs {want}");
    }

    #[test]
    fn length_preserved_for_all_steps() {
        let c = sine(700.0, 32000, 12345);
        for steps in -4..=4 {
            assert_eq!(pitch_shift(&c, steps).unwrap().len(), 12345);
        }
    }
}
