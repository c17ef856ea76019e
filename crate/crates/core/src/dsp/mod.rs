//! Spectrogram transforms and the augmentation chain.

mod augment;
mod noise;
mod pitch;
pub mod specfile;
mod spectrogram;
mod stft;
mod stretch;

pub use augment::{augment_view, plain_view, AugmentConfig, AugmentParams, NoiseBank, NoiseDraw};
pub use noise::{mix_noise, noise_gain};
pub use pitch::pitch_shift;
pub use spectrogram::{
    fit_frames, log_compress, mask_time_freq, min_max_normalize, MaskParams, Scale, Spectrogram, MAGNITUDE_FLOOR,
};
pub use stft::{frame_count, hann, stft, ComplexSpectrogram};
pub use stretch::time_stretch;
