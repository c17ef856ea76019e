use std::io::ErrorKind;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioClip;
use crate::error::{Error, Result};

/// On-disk sample encoding for [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Int16,
    Float32,
}

// hound reports short reads either as UnexpectedEof or as a custom error.
fn is_short_read(e: &std::io::Error) -> bool {
    e.kind() == ErrorKind::UnexpectedEof || e.to_string().contains("Failed to read enough bytes")
}

fn map_err(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) if is_short_read(&e) => Error::TruncatedContainer(path.to_path_buf()),
        hound::Error::IoError(e) => Error::io(path, e),
        hound::Error::Unsupported => Error::UnsupportedEncoding {
            path: path.to_path_buf(),
            detail: "unsupported WAVE format".into(),
        },
        hound::Error::UnfinishedSample => Error::TruncatedContainer(path.to_path_buf()),
        other => Error::MalformedAudio { path: path.to_path_buf(), detail: other.to_string() },
    }
}

/// Decodes a RIFF/WAVE file holding 16-bit integer or 32-bit float PCM.
/// Channels are averaged down to mono; integers are scaled by 1/32768.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = WavReader::open(path).map_err(|e| map_err(path, e))?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels);
    if channels == 0 {
        return Err(Error::MalformedAudio { path: path.to_path_buf(), detail: "zero channels".into() });
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f32::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_err(path, e))?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_err(path, e))?,
        (fmt, bits) => {
            return Err(Error::UnsupportedEncoding {
                path: path.to_path_buf(),
                detail: format!("{bits}-bit {fmt:?} samples"),
            })
        }
    };
    if interleaved.len() % channels != 0 {
        return Err(Error::TruncatedContainer(path.to_path_buf()));
    }
    let mono: Vec<f32> = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().map(|&s| f64::from(s)).sum::<f64>() as f32 / channels as f32)
            .collect()
    };
    if mono.is_empty() {
        return Err(Error::MalformedAudio { path: path.to_path_buf(), detail: "no samples".into() });
    }
    AudioClip::new(mono, spec.sample_rate).map_err(|e| Error::MalformedAudio {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip, encoding: WavEncoding) -> Result<()> {
    let path = path.as_ref();
    let (bits, fmt) = match encoding {
        WavEncoding::Int16 => (16, SampleFormat::Int),
        WavEncoding::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec { channels: 1, sample_rate: clip.sample_rate(), bits_per_sample: bits, sample_format: fmt };
    let mut w = WavWriter::create(path, spec).map_err(|e| map_err(path, e))?;
    for &s in clip.samples() {
        match encoding {
            WavEncoding::Int16 => {
                let v = (f64::from(s) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                w.write_sample(v)
            }
            WavEncoding::Float32 => w.write_sample(s),
        }
        .map_err(|e| map_err(path, e))?;
    }
    w.finalize().map_err(|e| map_err(path, e))
}
