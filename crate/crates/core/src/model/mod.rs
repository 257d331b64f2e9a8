//! Encoder-only attention regressor mapping a CIR beam matrix to a position.

mod config;
mod layers;
mod weights;

pub use config::{count_params, ModelConfig, LAYER_NORM_EPS};
pub use layers::{
    encoder_layer, feed_forward, max_pool_features, multi_head_attention, positional_encoding, scaled_dot_attention,
    Mode,
};
pub use weights::{init_weights, param_layout, Bound, Weights};

use beamloc_tensor::{Element, Graph, Tensor, Var};

use crate::error::{Error, Result};
use crate::preprocess::CirSample;

/// Samples per forward pass in batched inference.
const PREDICT_CHUNK: usize = 64;

/// Graph handles produced by one forward pass.
pub struct Forward {
    /// `[batch, 2]` standardized coordinates.
    pub output: Var,
    /// `[batch, seq_len, pooled_len]` when pooling is on.
    pub pooled: Option<Var>,
    pub params: Bound,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionModel<T> {
    pub config: ModelConfig,
    pub weights: Weights<T>,
}

impl<T: Element> AttentionModel<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let weights = init_weights(&config, seed)?;
        Ok(AttentionModel { config, weights })
    }

    /// Wraps existing weights after checking them against the layout.
    pub fn from_weights(config: ModelConfig, weights: Weights<T>) -> Result<Self> {
        config.validate()?;
        let layout = param_layout(&config);
        if layout.len() != weights.len() {
            return Err(Error::Contract(format!(
                "expected {} parameter tensors, got {}",
                layout.len(),
                weights.len()
            )));
        }
        for ((name, shape), (n, t)) in layout.iter().zip(weights.iter()) {
            if name != n || shape.as_slice() != t.shape() {
                return Err(Error::Contract(format!(
                    "parameter {n} {:?} does not match expected {name} {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(AttentionModel { config, weights })
    }

    pub fn param_count(&self) -> usize {
        self.weights.numel()
    }

    /// Full pipeline on a `[batch, seq_len, d_model]` constant or variable.
    pub fn forward(&self, g: &mut Graph<T>, x: Var, trainable: bool, mode: &mut Mode) -> Result<Forward> {
        let c = &self.config;
        let shape = g.shape(x).to_vec();
        if shape.len() != 3 || shape[1] != c.seq_len || shape[2] != c.d_model {
            return Err(Error::Contract(format!(
                "model input must be [batch, {}, {}], got {shape:?}",
                c.seq_len, c.d_model
            )));
        }
        let batch = shape[0];
        let p = self.weights.bind(g, trainable);
        let pe = g.constant(positional_encoding(c.seq_len, c.d_model));
        let mut h = g.add_broadcast(x, pe)?;
        h = mode.dropout(g, h, c.dropout_rate)?;
        for layer in 0..c.encoder_layers {
            h = encoder_layer(g, h, &p, layer, c, mode)?;
        }
        let mut pooled = None;
        if c.use_max_pool {
            let m = max_pool_features(g, h, c)?;
            pooled = Some(m);
            h = mode.dropout(g, m, c.dropout_rate)?;
        }
        let flat = g.reshape(h, &[batch, c.flat_len()])?;
        let z = g.matmul(flat, p.var("head.w1")?)?;
        let z = g.add_broadcast(z, p.var("head.b1")?)?;
        let z = g.relu(z);
        let z = g.matmul(z, p.var("head.w2")?)?;
        let output = g.add_broadcast(z, p.var("head.b2")?)?;
        Ok(Forward { output, pooled, params: p })
    }

    /// Eval-mode prediction for a standardized `[batch, seq_len, d_model]` input.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let f = self.forward(&mut g, xv, false, &mut Mode::Eval)?;
        Ok(g.value(f.output).clone())
    }
}

impl AttentionModel<f32> {
    /// Standardized `(x, y)` estimates for standardized samples.
    pub fn predict_samples(&self, samples: &[&CirSample]) -> Result<Vec<[f32; 2]>> {
        if samples.is_empty() {
            return Ok(Vec::new());
        }
        let n = self.config.seq_len * self.config.d_model;
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(PREDICT_CHUNK) {
            let mut data = Vec::with_capacity(chunk.len() * n);
            for s in chunk {
                if !s.standardized {
                    return Err(Error::Contract("model input must be standardized by the dataset scalers".into()));
                }
                if s.cir.len() != n {
                    return Err(Error::Contract(format!("sample has {} features, expected {n}", s.cir.len())));
                }
                data.extend_from_slice(&s.cir);
            }
            let x = Tensor::new(vec![chunk.len(), self.config.seq_len, self.config.d_model], data)?;
            let y = self.predict(&x)?;
            out.extend(y.data().chunks_exact(2).map(|r| [r[0], r[1]]));
        }
        Ok(out)
    }
}

/// Single-sample eval or train forward of a standardized CIR sample.
pub fn model_forward(sample: &CirSample, model: &AttentionModel<f32>, mode: &mut Mode) -> Result<[f32; 2]> {
    if !sample.standardized {
        return Err(Error::Contract("model input must be standardized by the dataset scalers".into()));
    }
    let c = &model.config;
    let x = Tensor::new(vec![1, c.seq_len, c.d_model], sample.cir.clone())
        .map_err(|_| Error::Contract(format!("sample has {} features", sample.cir.len())))?;
    let mut g = Graph::new();
    let xv = g.constant(x);
    let f = model.forward(&mut g, xv, false, mode)?;
    let y = g.value(f.output).data();
    Ok([y[0], y[1]])
}
