use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub channels: usize,
    pub stride: usize,
    pub groups: usize,
}

/// Encoder / projector / classifier shapes.
///
/// With no encoder blocks the encoder flattens its `F x T` input, so
/// `encoder_out_dim` must equal `F * T`. With `projector_hidden_layers = 0` the
/// projector is a single linear map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_shape: (usize, usize),
    pub encoder_blocks: Vec<BlockConfig>,
    pub encoder_out_dim: usize,
    pub projector_hidden_layers: usize,
    pub projector_dim: usize,
    pub num_classes: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_shape: (401, 98),
            encoder_blocks: vec![
                BlockConfig { channels: 32, stride: 2, groups: 1 },
                BlockConfig { channels: 64, stride: 2, groups: 8 },
                BlockConfig { channels: 128, stride: 2, groups: 8 },
                BlockConfig { channels: 256, stride: 2, groups: 8 },
            ],
            encoder_out_dim: 256,
            projector_hidden_layers: 2,
            projector_dim: 512,
            num_classes: 20,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }
}

/// Output size of a 3x3, padding-1 convolution along one axis.
pub fn conv_out(len: usize, stride: usize) -> usize {
    (len - 1) / stride + 1
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, detail: String| Err(Error::config(format!("model.{key}"), detail));
        let (f, t) = self.input_shape;
        if f == 0 || t == 0 {
            return bad("input_shape", "dimensions must be positive".into());
        }
        let mut in_ch = 1;
        for (i, b) in self.encoder_blocks.iter().enumerate() {
            if b.channels == 0 || b.stride == 0 || b.groups == 0 {
                return bad("encoder_blocks", format!("block {i}: channels, stride and groups must be positive"));
            }
            if b.channels % b.groups != 0 || in_ch % b.groups != 0 {
                return bad(
                    "encoder_blocks",
                    format!("block {i}: groups {} must divide input {in_ch} and output {} channels", b.groups, b.channels),
                );
            }
            in_ch = b.channels;
        }
        let expected = if self.encoder_blocks.is_empty() { f * t } else { in_ch };
        if self.encoder_out_dim != expected {
            return bad("encoder_out_dim", format!("{} does not match the encoder output {expected}", self.encoder_out_dim));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) || self.bn_eps <= 0.0 {
            return bad("bn_momentum", "momentum must be in [0,1] and eps positive".into());
        }
        Ok(())
    }

    pub fn has_projector(&self) -> bool {
        self.projector_dim > 0
    }

    pub fn has_classifier(&self) -> bool {
        self.num_classes > 0
    }

    /// Same encoder and projector, no classifier.
    pub fn for_pretraining(&self) -> Self {
        ModelConfig { num_classes: 0, ..self.clone() }
    }

    /// Same encoder and classifier, projector dropped.
    pub fn for_downstream(&self, num_classes: usize) -> Self {
        ModelConfig { projector_dim: 0, projector_hidden_layers: 0, num_classes, ..self.clone() }
    }

    /// `(channels, height, width)` after each encoder block.
    pub fn block_shapes(&self) -> Vec<(usize, usize, usize)> {
        let (mut h, mut w) = self.input_shape;
        self.encoder_blocks
            .iter()
            .map(|b| {
                h = conv_out(h, b.stride);
                w = conv_out(w, b.stride);
                (b.channels, h, w)
            })
            .collect()
    }

    /// The encoder of one config can be loaded into another.
    pub fn same_encoder(&self, other: &ModelConfig) -> bool {
        self.input_shape == other.input_shape
            && self.encoder_blocks == other.encoder_blocks
            && self.encoder_out_dim == other.encoder_out_dim
    }
}
