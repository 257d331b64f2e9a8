use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture and regularization knobs of the attention regressor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder_layers: usize,
    pub use_layer_norm: bool,
    pub use_max_pool: bool,
    pub d_model: usize,
    /// Number of beam rows, the token axis of the encoder.
    pub seq_len: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub dropout_rate: f64,
    pub fcnn_hidden: usize,
    pub pool_segment: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder_layers: 1,
            use_layer_norm: false,
            use_max_pool: true,
            d_model: 46,
            seq_len: 128,
            n_heads: 2,
            d_ff: 64,
            dropout_rate: 0.05,
            fcnn_hidden: 46,
            pool_segment: 4,
        }
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl ModelConfig {
    /// Grid point of the architecture sweep with the remaining fields at
    /// their defaults.
    pub fn grid(encoder_layers: usize, use_layer_norm: bool, use_max_pool: bool) -> Self {
        ModelConfig {
            encoder_layers,
            use_layer_norm,
            use_max_pool,
            ..ModelConfig::default()
        }
    }

    /// The generalized reference: three layers, no normalization, no pooling.
    pub fn generalized() -> Self {
        ModelConfig::grid(3, false, false)
    }

    /// Default specialist per scenario: one pooled layer for the LoS loop,
    /// two pooled layers elsewhere.
    pub fn specialist(scenario: crate::ScenarioId) -> Self {
        match scenario {
            crate::ScenarioId::S1 => ModelConfig::grid(1, false, true),
            _ => ModelConfig::grid(2, false, true),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=5).contains(&self.encoder_layers) {
            return Err(Error::Config(format!(
                "encoder_layers must be in 1..=5, got {}",
                self.encoder_layers
            )));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        for (name, v) in [
            ("d_model", self.d_model),
            ("seq_len", self.seq_len),
            ("d_ff", self.d_ff),
            ("fcnn_hidden", self.fcnn_hidden),
            ("pool_segment", self.pool_segment),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout_rate {} outside [0, 1)", self.dropout_rate)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Feature length after pooling, `ceil(d_model / pool_segment)`.
    pub fn pooled_len(&self) -> usize {
        self.d_model.div_ceil(self.pool_segment)
    }

    /// Width of the flattened encoder output fed to the FCNN head.
    pub fn flat_len(&self) -> usize {
        self.seq_len * if self.use_max_pool { self.pooled_len() } else { self.d_model }
    }

    /// Short tag such as `el1-ln0-mp1`.
    pub fn tag(&self) -> String {
        format!(
            "el{}-ln{}-mp{}",
            self.encoder_layers, self.use_layer_norm as u8, self.use_max_pool as u8
        )
    }
}

/// Closed-form count of trainable scalars.
pub fn count_params(config: &ModelConfig) -> usize {
    let d = config.d_model;
    let ff = config.d_ff;
    let attention = 4 * (d * d + d);
    let ffn = d * ff + ff + ff * d + d;
    let norm = if config.use_layer_norm { 4 * d } else { 0 };
    let head = config.flat_len() * config.fcnn_hidden + config.fcnn_hidden + config.fcnn_hidden * 2 + 2;
    config.encoder_layers * (attention + ffn + norm) + head
}
