use std::collections::HashMap;

use rand::Rng;

use beamloc_tensor::{Element, Graph, RngStreams, Tensor, Var};

use super::config::ModelConfig;
use crate::error::{Error, Result};

/// Named parameter tensors in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Element> Default for Weights<T> {
    fn default() -> Self {
        Weights {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Element> Weights<T> {
    pub fn push(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Contract(format!("duplicate parameter {name}")));
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(value);
        Ok(())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn position(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Contract(format!("missing parameter {name}")))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        Ok(&self.tensors[self.position(name)?])
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        let i = self.position(name)?;
        Ok(&mut self.tensors[i])
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn cast<U: Element>(&self) -> Weights<U> {
        Weights {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }

    /// Puts every tensor on `g`, trainable or constant.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|t| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) })
            .collect();
        Bound {
            vars,
            index: self.index.clone(),
        }
    }
}

/// Graph handles of a bound [`Weights`], in the same order.
#[derive(Clone, Debug)]
pub struct Bound {
    pub vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| Error::Contract(format!("missing parameter {name}")))
    }
}

/// `(name, shape)` of every parameter for `config`, in storage order.
pub fn param_layout(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let d = config.d_model;
    let ff = config.d_ff;
    let mut out = Vec::new();
    for l in 0..config.encoder_layers {
        let p = |n: &str| format!("enc{l}.{n}");
        for m in ["q", "k", "v", "o"] {
            out.push((p(&format!("w{m}")), vec![d, d]));
            out.push((p(&format!("b{m}")), vec![d]));
        }
        out.push((p("ffn.w1"), vec![d, ff]));
        out.push((p("ffn.b1"), vec![ff]));
        out.push((p("ffn.w2"), vec![ff, d]));
        out.push((p("ffn.b2"), vec![d]));
        if config.use_layer_norm {
            for n in ["ln1", "ln2"] {
                out.push((p(&format!("{n}.gamma")), vec![d]));
                out.push((p(&format!("{n}.beta")), vec![d]));
            }
        }
    }
    out.push(("head.w1".into(), vec![config.flat_len(), config.fcnn_hidden]));
    out.push(("head.b1".into(), vec![config.fcnn_hidden]));
    out.push(("head.w2".into(), vec![config.fcnn_hidden, 2]));
    out.push(("head.b2".into(), vec![2]));
    out
}

/// Glorot-uniform matrices, zero biases and betas, unit gammas.
pub fn init_weights<T: Element>(config: &ModelConfig, seed: u64) -> Result<Weights<T>> {
    config.validate()?;
    let mut rng = RngStreams::new(seed).stream("init", 0);
    let mut w = Weights::default();
    for (name, shape) in param_layout(config) {
        let t = if shape.len() == 2 {
            let bound = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
            let vals: Vec<f64> = (0..shape[0] * shape[1]).map(|_| rng.random_range(-bound..bound)).collect();
            Tensor::from_f64(&shape, &vals)?
        } else if name.ends_with("gamma") {
            Tensor::full(&shape, T::one())
        } else {
            Tensor::zeros(&shape)
        };
        w.push(name, t)?;
    }
    Ok(w)
}
