use crate::audio::{loop_to_len, AudioClip};
use crate::error::{Error, Result};

/// Noise gain achieving `snr_db` between signal power `p_signal` and the scaled
/// noise: `sqrt(P_s / (P_n * 10^(snr/10)))`. Zero when the noise is silent.
pub fn noise_gain(p_signal: f64, p_noise: f64, snr_db: f64) -> f64 {
    if p_noise <= 0.0 {
        return 0.0;
    }
    (p_signal / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// Adds `noise` to `signal` at the requested SNR in decibels. Noise that is not
/// already signal-length is looped or cropped from its start.
pub fn mix_noise(signal: &AudioClip, noise: &AudioClip, snr_db: i32) -> Result<AudioClip> {
    if signal.sample_rate() != noise.sample_rate() {
        return Err(Error::InvalidArgument(format!(
            "noise sample rate {} differs from signal rate {}",
            noise.sample_rate(),
            signal.sample_rate()
        )));
    }
    let fitted;
    let noise = if noise.len() == signal.len() {
        noise
    } else {
        fitted = loop_to_len(noise, signal.len(), 0);
        &fitted
    };
    let g = noise_gain(signal.power(), noise.power(), f64::from(snr_db));
    if g == 0.0 {
        return Ok(signal.clone());
    }
    let mixed = signal
        .samples()
        .iter()
        .zip(noise.samples())
        .map(|(&s, &n)| (f64::from(s) + g * f64::from(n)) as f32)
        .collect();
    AudioClip::new(mixed, signal.sample_rate())
}
