use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use beamloc_tensor::{Adam, AdamConfig, Graph, RngStreams, Tensor};

use crate::error::{Error, Result};
use crate::model::{AttentionModel, Mode, ModelConfig};
use crate::preprocess::{Dataset, Scalers, Split};
use crate::router::Specialist;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            epochs: 200,
            batch_size: 64,
            learning_rate: 0.0006,
        }
    }
}

impl TrainHyper {
    /// Shorter budget used for the router.
    pub fn router() -> Self {
        TrainHyper {
            epochs: 50,
            ..TrainHyper::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be finite and >= 0", self.learning_rate)));
        }
        Ok(())
    }
}

/// Per-epoch record of a training session.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub train_loss: Vec<f64>,
    /// Empty when the dataset has no validation split.
    pub val_loss: Vec<f64>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub seconds: f64,
}

impl Curves {
    /// `epoch,train_loss,val_loss` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for (i, t) in self.train_loss.iter().enumerate() {
            let v = self.val_loss.get(i).map(|v| v.to_string()).unwrap_or_default();
            s.push_str(&format!("{},{t},{v}\n", i + 1));
        }
        s
    }

    fn select(&self) -> &[f64] {
        if self.val_loss.is_empty() {
            &self.train_loss
        } else {
            &self.val_loss
        }
    }

    /// Loss of the kept epoch under the selection criterion.
    pub fn best_loss(&self) -> f64 {
        self.select()[self.best_epoch - 1]
    }
}

/// Outcome of [`train_model`].
#[derive(Clone, Debug)]
pub struct TrainRun {
    pub model: AttentionModel<f32>,
    pub scalers: Scalers,
    pub hyper: TrainHyper,
    pub seed: u64,
    pub curves: Curves,
}

impl TrainRun {
    pub fn specialist(&self) -> Specialist {
        Specialist {
            model: self.model.clone(),
            scalers: self.scalers.clone(),
        }
    }
}

/// Standardized inputs and labels of one split, kept in memory.
pub(crate) struct Standardized {
    pub x: Vec<f32>,
    pub y: Vec<f32>,
    pub width: usize,
}

impl Standardized {
    pub fn new(ds: &Dataset, idx: &[usize]) -> Result<Self> {
        let x = ds.input_batch(idx)?.into_data();
        let y = ds.label_batch(idx)?.into_data();
        Ok(Standardized {
            width: crate::preprocess::N_FEATURES,
            x,
            y,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len() / 2
    }

    pub fn gather(&self, rows: &[usize], seq_len: usize, d_model: usize) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let mut x = Vec::with_capacity(rows.len() * self.width);
        let mut y = Vec::with_capacity(rows.len() * 2);
        for &r in rows {
            x.extend_from_slice(&self.x[r * self.width..(r + 1) * self.width]);
            y.extend_from_slice(&self.y[2 * r..2 * r + 2]);
        }
        Ok((
            Tensor::new(vec![rows.len(), seq_len, d_model], x)?,
            Tensor::new(vec![rows.len(), 2], y)?,
        ))
    }
}

/// Adam on standardized MSE with best-epoch selection on validation loss
/// (train loss when there is no validation split). A zero learning rate
/// evaluates without ever updating the weights.
pub fn train_model(dataset: &Dataset, config: &ModelConfig, hyper: &TrainHyper, seed: u64) -> Result<TrainRun> {
    hyper.validate()?;
    config.validate()?;
    let train_idx = dataset.indices(Split::Train);
    if train_idx.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    let started = Instant::now();
    let streams = RngStreams::new(seed);
    let train = Standardized::new(dataset, &train_idx)?;
    let val_idx = dataset.indices(Split::Val);
    let val = if val_idx.is_empty() { None } else { Some(Standardized::new(dataset, &val_idx)?) };

    let mut model = AttentionModel::<f32>::new(config.clone(), streams.derive("model").seed())?;
    let mut adam = Adam::new(AdamConfig::default(), model.weights.tensors());
    let mut curves = Curves::default();
    let mut best: Option<(f64, usize, AttentionModel<f32>)> = None;
    let (s, d) = (config.seq_len, config.d_model);

    for epoch in 1..=hyper.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut streams.stream("shuffle", epoch as u64));
        let mut dropout_rng = streams.stream("dropout", epoch as u64);
        let mut total = 0.0;
        for rows in order.chunks(hyper.batch_size) {
            let (x, y) = train.gather(rows, s, d)?;
            let mut g = Graph::new();
            let xv = g.constant(x);
            let f = model
                .forward(&mut g, xv, true, &mut Mode::Train(&mut dropout_rng))
                .map_err(|e| e.diverged_at(epoch))?;
            let loss = g.mse(f.output, &y).map_err(|e| Error::from(e).diverged_at(epoch))?;
            let value = f64::from(g.value(loss).data()[0]);
            if !value.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("training loss became {value}"),
                });
            }
            total += value * rows.len() as f64;
            if hyper.learning_rate > 0.0 {
                g.backward(loss).map_err(|e| Error::from(e).diverged_at(epoch))?;
                let grads: Vec<&Tensor<f32>> = f.params.vars.iter().map(|&v| g.grad(v)).collect::<std::result::Result<_, _>>()?;
                adam.step(model.weights.tensors_mut(), &grads, hyper.learning_rate)
                    .map_err(|e| Error::from(e).diverged_at(epoch))?;
            }
        }
        curves.train_loss.push(total / train.len() as f64);
        if let Some(val) = &val {
            let v = eval_mse(&model, val).map_err(|e| e.diverged_at(epoch))?;
            if !v.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("validation loss became {v}"),
                });
            }
            curves.val_loss.push(v);
        }
        let score = *curves.select().last().unwrap();
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            best = Some((score, epoch, model.clone()));
        }
    }
    let (_, best_epoch, best_model) = best.expect("at least one epoch");
    curves.best_epoch = best_epoch;
    curves.seconds = started.elapsed().as_secs_f64();
    Ok(TrainRun {
        model: best_model,
        scalers: dataset.scalers.clone(),
        hyper: hyper.clone(),
        seed,
        curves,
    })
}

/// Eval-mode MSE over a standardized split.
pub(crate) fn eval_mse(model: &AttentionModel<f32>, data: &Standardized) -> Result<f64> {
    let rows: Vec<usize> = (0..data.len()).collect();
    let mut total = 0.0;
    for chunk in rows.chunks(64) {
        let (x, y) = data.gather(chunk, model.config.seq_len, model.config.d_model)?;
        let pred = model.predict(&x)?;
        total += pred
            .data()
            .iter()
            .zip(y.data())
            .map(|(&p, &t)| (f64::from(p) - f64::from(t)).powi(2))
            .sum::<f64>();
    }
    Ok(total / (2 * data.len()) as f64)
}
