use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use beamloc_tensor::{Adam, AdamConfig, Graph, RngStreams, Tensor};

use super::regressor::{Curves, TrainHyper};
use crate::error::{Error, Result};
use crate::preprocess::{Dataset, Split};
use crate::router::{extract_features, Router, RouterConfig, RouterWeights, N_CLASSES};

/// Outcome of [`train_router`].
#[derive(Clone, Debug)]
pub struct RouterRun {
    pub router: Router,
    pub hyper: TrainHyper,
    pub seed: u64,
    pub curves: Curves,
}

struct Features {
    x: Vec<f32>,
    labels: Vec<usize>,
    dim: usize,
}

impl Features {
    fn new(ds: &Dataset, idx: &[usize], config: &RouterConfig) -> Result<Self> {
        let mut x = Vec::with_capacity(idx.len() * config.input_dim());
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            let raw = &ds.samples[i];
            let mut s = raw.clone();
            s.cir = ds.scalers.forward_input(&raw.cir)?;
            s.standardized = true;
            x.extend(extract_features(&s, config)?);
            labels.push(raw.scenario.class_index());
        }
        Ok(Features {
            x,
            labels,
            dim: config.input_dim(),
        })
    }

    fn gather(&self, rows: &[usize]) -> Result<(Tensor<f32>, Vec<usize>)> {
        let mut x = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            x.extend_from_slice(&self.x[r * self.dim..(r + 1) * self.dim]);
        }
        Ok((Tensor::new(vec![rows.len(), self.dim], x)?, rows.iter().map(|&r| self.labels[r]).collect()))
    }

    fn len(&self) -> usize {
        self.labels.len()
    }
}

fn batch_loss(
    g: &mut Graph<f32>,
    w: &Tensor<f32>,
    b: &Tensor<f32>,
    x: Tensor<f32>,
    labels: &[usize],
    trainable: bool,
) -> Result<(beamloc_tensor::Var, [beamloc_tensor::Var; 2])> {
    let (wv, bv) = if trainable {
        (g.param(w.clone()), g.param(b.clone()))
    } else {
        (g.constant(w.clone()), g.constant(b.clone()))
    };
    let xv = g.constant(x);
    let z = g.matmul(xv, wv)?;
    let z = g.add_broadcast(z, bv)?;
    Ok((g.softmax_cross_entropy(z, labels)?, [wv, bv]))
}

/// Softmax cross-entropy training of the SLP on a mixed-scenario dataset.
/// The router keeps the dataset's scalers as its own.
pub fn train_router(dataset: &Dataset, config: &RouterConfig, hyper: &TrainHyper, seed: u64) -> Result<RouterRun> {
    hyper.validate()?;
    config.validate()?;
    let train_idx = dataset.indices(Split::Train);
    if train_idx.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    let started = Instant::now();
    let streams = RngStreams::new(seed);
    let train = Features::new(dataset, &train_idx, config)?;
    let val_idx = dataset.indices(Split::Val);
    let val = if val_idx.is_empty() { None } else { Some(Features::new(dataset, &val_idx, config)?) };

    let dim = config.input_dim();
    let bound = (6.0 / (dim + N_CLASSES) as f64).sqrt();
    let mut init = streams.stream("router-init", 0);
    let w: Vec<f64> = (0..dim * N_CLASSES).map(|_| init.random_range(-bound..bound)).collect();
    let mut params = vec![Tensor::from_f64(&[dim, N_CLASSES], &w)?, Tensor::zeros(&[N_CLASSES])];
    let mut adam = Adam::new(AdamConfig::default(), params.iter());
    let mut curves = Curves::default();
    let mut best: Option<(f64, usize, Vec<Tensor<f32>>)> = None;

    for epoch in 1..=hyper.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut streams.stream("shuffle", epoch as u64));
        let mut total = 0.0;
        for rows in order.chunks(hyper.batch_size) {
            let (x, labels) = train.gather(rows)?;
            let mut g = Graph::new();
            let (loss, vars) =
                batch_loss(&mut g, &params[0], &params[1], x, &labels, true).map_err(|e| e.diverged_at(epoch))?;
            let value = f64::from(g.value(loss).data()[0]);
            if !value.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("router loss became {value}"),
                });
            }
            total += value * rows.len() as f64;
            if hyper.learning_rate > 0.0 {
                g.backward(loss).map_err(|e| Error::from(e).diverged_at(epoch))?;
                let gw = g.grad(vars[0])?.clone();
                let gb = g.grad(vars[1])?.clone();
                adam.step(&mut params, &[&gw, &gb], hyper.learning_rate)?;
            }
        }
        curves.train_loss.push(total / train.len() as f64);
        if let Some(val) = &val {
            let rows: Vec<usize> = (0..val.len()).collect();
            let mut sum = 0.0;
            for chunk in rows.chunks(256) {
                let (x, labels) = val.gather(chunk)?;
                let mut g = Graph::new();
                let (loss, _) =
                    batch_loss(&mut g, &params[0], &params[1], x, &labels, false).map_err(|e| e.diverged_at(epoch))?;
                sum += f64::from(g.value(loss).data()[0]) * chunk.len() as f64;
            }
            curves.val_loss.push(sum / val.len() as f64);
        }
        let score = if curves.val_loss.is_empty() {
            *curves.train_loss.last().unwrap()
        } else {
            *curves.val_loss.last().unwrap()
        };
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            best = Some((score, epoch, params.clone()));
        }
    }
    let (_, best_epoch, mut kept) = best.expect("at least one epoch");
    curves.best_epoch = best_epoch;
    curves.seconds = started.elapsed().as_secs_f64();
    let b = kept.pop().unwrap();
    let w = kept.pop().unwrap();
    Ok(RouterRun {
        router: Router {
            config: config.clone(),
            weights: RouterWeights { w, b },
            scalers: dataset.scalers.clone(),
        },
        hyper: hyper.clone(),
        seed,
        curves,
    })
}
