use rand::RngCore;

use beamloc_tensor::{Element, Graph, Tensor, Var};

use super::config::{ModelConfig, LAYER_NORM_EPS};
use super::weights::Bound;
use crate::error::{Error, Result};

/// Dropout is drawn from the carried RNG in training and skipped in eval.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut dyn RngCore),
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }

    pub fn dropout<T: Element>(&mut self, g: &mut Graph<T>, x: Var, rate: f64) -> Result<Var> {
        match self {
            Mode::Eval => Ok(x),
            Mode::Train(rng) => Ok(g.dropout(x, rate, &mut **rng)?),
        }
    }
}

/// Sinusoidal table: even columns `sin(pos / 10000^(2i/d))`, odd columns
/// the matching cosine.
pub fn positional_encoding<T: Element>(seq_len: usize, d_model: usize) -> Tensor<T> {
    let mut vals = vec![0.0f64; seq_len * d_model];
    for pos in 0..seq_len {
        for i in 0..d_model.div_ceil(2) {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d_model as f64);
            vals[pos * d_model + 2 * i] = angle.sin();
            if 2 * i + 1 < d_model {
                vals[pos * d_model + 2 * i + 1] = angle.cos();
            }
        }
    }
    Tensor::from_f64(&[seq_len, d_model], &vals).expect("shape matches")
}

fn linear<T: Element>(g: &mut Graph<T>, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = g.matmul(x, w)?;
    Ok(g.add_broadcast(y, b)?)
}

/// `softmax(Q K^T / sqrt(d_head)) V` over `[batch, seq, d_head]` inputs, with
/// dropout on the attention weights in training.
pub fn scaled_dot_attention<T: Element>(
    g: &mut Graph<T>,
    q: Var,
    k: Var,
    v: Var,
    dropout_rate: f64,
    mode: &mut Mode,
) -> Result<Var> {
    let (qs, ks, vs) = (g.shape(q).to_vec(), g.shape(k).to_vec(), g.shape(v).to_vec());
    if qs.len() != 3 || qs != ks || ks[..2] != vs[..2] || vs.len() != 3 {
        return Err(Error::Contract(format!("attention shapes q {qs:?}, k {ks:?}, v {vs:?} do not agree")));
    }
    let scores = g.bmm(q, k, true)?;
    let scores = g.scale(scores, T::from_f64_lossy(1.0 / (qs[2] as f64).sqrt()));
    let weights = g.softmax_last(scores)?;
    let weights = mode.dropout(g, weights, dropout_rate)?;
    Ok(g.bmm(weights, v, false)?)
}

/// Projects `x` to queries, keys and values, attends per head on disjoint
/// column slices, concatenates the heads and applies the output projection.
pub fn multi_head_attention<T: Element>(
    g: &mut Graph<T>,
    x: Var,
    p: &Bound,
    layer: usize,
    config: &ModelConfig,
    mode: &mut Mode,
) -> Result<Var> {
    if config.n_heads == 0 || config.d_model % config.n_heads != 0 {
        return Err(Error::Config(format!(
            "d_model {} is not divisible by n_heads {}",
            config.d_model, config.n_heads
        )));
    }
    let name = |n: &str| format!("enc{layer}.{n}");
    let q = linear(g, x, p.var(&name("wq"))?, p.var(&name("bq"))?)?;
    let k = linear(g, x, p.var(&name("wk"))?, p.var(&name("bk"))?)?;
    let v = linear(g, x, p.var(&name("wv"))?, p.var(&name("bv"))?)?;
    let dh = config.head_dim();
    let mut heads = Vec::with_capacity(config.n_heads);
    for h in 0..config.n_heads {
        let qh = g.slice_last(q, h * dh, dh)?;
        let kh = g.slice_last(k, h * dh, dh)?;
        let vh = g.slice_last(v, h * dh, dh)?;
        heads.push(scaled_dot_attention(g, qh, kh, vh, config.dropout_rate, mode)?);
    }
    let cat = if heads.len() == 1 { heads[0] } else { g.concat_last(&heads)? };
    linear(g, cat, p.var(&name("wo"))?, p.var(&name("bo"))?)
}

/// Position-wise `relu(x W1 + b1) W2 + b2`.
pub fn feed_forward<T: Element>(g: &mut Graph<T>, x: Var, w1: Var, b1: Var, w2: Var, b2: Var) -> Result<Var> {
    let (xs, s1, s2) = (g.shape(x).to_vec(), g.shape(w1).to_vec(), g.shape(w2).to_vec());
    if s1.len() != 2 || s2.len() != 2 || xs.last() != Some(&s1[0]) || s1[1] != s2[0] || g.shape(b1) != [s1[1]] || g.shape(b2) != [s2[1]] {
        return Err(Error::Contract(format!("feed-forward widths x {xs:?}, w1 {s1:?}, w2 {s2:?} do not chain")));
    }
    let h = linear(g, x, w1, b1)?;
    let h = g.relu(h);
    linear(g, h, w2, b2)
}

fn norm<T: Element>(g: &mut Graph<T>, x: Var, p: &Bound, layer: usize, which: &str, config: &ModelConfig) -> Result<Var> {
    if !config.use_layer_norm {
        return Ok(x);
    }
    let gamma = p.var(&format!("enc{layer}.{which}.gamma"))?;
    let beta = p.var(&format!("enc{layer}.{which}.beta"))?;
    Ok(g.layer_norm(x, gamma, beta, LAYER_NORM_EPS)?)
}

/// Post-norm block: `y = N(x + drop(mha(x)))`, `z = N(y + drop(ffn(y)))`.
pub fn encoder_layer<T: Element>(
    g: &mut Graph<T>,
    x: Var,
    p: &Bound,
    layer: usize,
    config: &ModelConfig,
    mode: &mut Mode,
) -> Result<Var> {
    let a = multi_head_attention(g, x, p, layer, config, mode)?;
    let a = mode.dropout(g, a, config.dropout_rate)?;
    let y = g.add(x, a)?;
    let y = norm(g, y, p, layer, "ln1", config)?;
    let name = |n: &str| format!("enc{layer}.ffn.{n}");
    let f = feed_forward(
        g,
        y,
        p.var(&name("w1"))?,
        p.var(&name("b1"))?,
        p.var(&name("w2"))?,
        p.var(&name("b2"))?,
    )?;
    let f = mode.dropout(g, f, config.dropout_rate)?;
    let z = g.add(y, f)?;
    norm(g, z, p, layer, "ln2", config)
}

/// Max over non-overlapping feature segments, right-padded so the output has
/// `ceil(d_model / segment)` columns.
pub fn max_pool_features<T: Element>(g: &mut Graph<T>, x: Var, config: &ModelConfig) -> Result<Var> {
    let d = g.value(x).last_dim();
    if d != config.d_model {
        return Err(Error::Config(format!("pooling expects {} features, got {d}", config.d_model)));
    }
    Ok(g.max_pool_last(x, config.pool_segment)?)
}
