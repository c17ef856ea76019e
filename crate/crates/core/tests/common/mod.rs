//! Small-scale fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use vbssl::synth::{write_tone_dataset, ToneSpec};

pub const RATE: u32 = 8000;

/// 8 kHz tones, 0.6 s each.
pub fn tone_spec(classes: usize, per_class: usize) -> ToneSpec {
    ToneSpec { classes, per_class, duration_s: 0.6, sample_rate: RATE, noise_level: 0.02 }
}

pub fn write_tones(dir: &Path, classes: usize, per_class: usize, seed: u64) -> PathBuf {
    write_tone_dataset(dir, &tone_spec(classes, per_class), seed).unwrap()
}

/// STFT 128/64 on 0.5 s windows: 65 x 60 spectrograms.
pub fn augment_json() -> Value {
    json!({ "sample_rate": RATE, "fft_size": 128, "hop": 64, "target_frames": 60, "max_freq_mask": 6, "max_time_mask": 4 })
}

pub fn model_json(classes: usize) -> Value {
    json!({
        "input_shape": [65, 60],
        "encoder_blocks": [{ "channels": 4, "stride": 4, "groups": 1 }, { "channels": 8, "stride": 2, "groups": 2 }],
        "encoder_out_dim": 8,
        "projector_hidden_layers": 1,
        "projector_dim": 8,
        "num_classes": classes,
    })
}

/// Pretraining uses a desk-stable peak learning rate; the default 0.3 diverges on these toy sets.
pub fn config_json(mode: &str, classes: usize) -> Value {
    let lr_peak = if mode == "pretrain" { 0.002 } else { 1e-3 };
    json!({
        "mode": mode,
        "augment": augment_json(),
        "model": model_json(classes),
        "schedule": { "warmup_epochs": 1, "total_epochs": 2, "lr_peak": lr_peak },
        "batch_size": 4,
        "epochs": 2,
        "window_s": 0.5,
        "seed": 5,
    })
}

pub fn write_json(path: &Path, v: &Value) -> PathBuf {
    std::fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
    path.to_path_buf()
}
