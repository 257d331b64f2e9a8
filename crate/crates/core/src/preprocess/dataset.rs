use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use beamloc_tensor::{RngStreams, Tensor};

use super::cir::CirTransform;
use super::scalers::Scalers;
use super::N_FEATURES;
use crate::error::{Error, Result};
use crate::scenario::ScenarioId;
use crate::sim::{generate_snapshots, ChannelSnapshot, ScenarioParams, N_ROWS, N_SUBCARRIERS};

/// CIR amplitude matrix with its ground-truth position.
#[derive(Clone, Debug, PartialEq)]
pub struct CirSample {
    /// Row-major `N_ROWS x N_SUBCARRIERS`.
    pub cir: Vec<f32>,
    /// Meters, or standardized units when `standardized` is set.
    pub label: [f32; 2],
    pub scenario: ScenarioId,
    pub lap_index: u32,
    pub t: f32,
    pub standardized: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn code(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }

    pub fn from_code(c: u8) -> Result<Split> {
        match c {
            0 => Ok(Split::Train),
            1 => Ok(Split::Val),
            2 => Ok(Split::Test),
            _ => Err(Error::Data(format!("unknown split code {c}"))),
        }
    }
}

/// Raw samples with a split assignment and scalers fitted on the train part.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<CirSample>,
    pub split: Vec<Split>,
    pub scalers: Scalers,
    pub laps: u32,
    pub seed: u64,
    pub val_fraction: f64,
}

/// Converts snapshots to CIR samples in parallel, keeping their order.
pub fn samples_from_snapshots(snapshots: &[ChannelSnapshot]) -> Result<Vec<CirSample>> {
    let transform = CirTransform::new();
    snapshots.par_iter().map(|s| transform.convert(s)).collect()
}

/// Simulates a scenario and converts it to CIR samples.
pub fn simulate_samples(params: &ScenarioParams, laps: u32, seed: u64) -> Result<Vec<CirSample>> {
    samples_from_snapshots(&generate_snapshots(params, laps, seed)?)
}

/// Holds out lap `laps` for testing and splits the rest into train and
/// validation at random.
pub fn build_dataset(samples: Vec<CirSample>, laps: u32, val_fraction: f64, seed: u64) -> Result<Dataset> {
    if laps < 2 {
        return Err(Error::Config(format!("need at least 2 laps, got {laps}")));
    }
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::Config(format!("val_fraction must be in [0, 1), got {val_fraction}")));
    }
    for s in &samples {
        if s.standardized {
            return Err(Error::Contract("build_dataset expects raw samples".into()));
        }
        if s.cir.len() != N_FEATURES {
            return Err(Error::Contract(format!("sample has {} features, expected {N_FEATURES}", s.cir.len())));
        }
        if s.lap_index < 1 || s.lap_index > laps {
            return Err(Error::Data(format!("sample lap {} outside 1..={laps}", s.lap_index)));
        }
        if !s.label.iter().all(|v| v.is_finite()) || s.cir.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Data("sample has non-finite or negative values".into()));
        }
    }
    let mut split: Vec<Split> = samples
        .iter()
        .map(|s| if s.lap_index == laps { Split::Test } else { Split::Train })
        .collect();
    let mut pool: Vec<usize> = (0..samples.len()).filter(|&i| split[i] == Split::Train).collect();
    if pool.is_empty() || pool.len() == samples.len() {
        return Err(Error::Data(format!("samples do not cover laps 1..={laps}")));
    }
    let n_val = (val_fraction * pool.len() as f64).round() as usize;
    pool.shuffle(&mut RngStreams::new(seed).stream("split", 0));
    for &i in &pool[..n_val] {
        split[i] = Split::Val;
    }
    let scalers = Scalers::fit(samples.iter().zip(&split).filter(|(_, &s)| s == Split::Train).map(|(x, _)| x))?;
    Ok(Dataset {
        samples,
        split,
        scalers,
        laps,
        seed,
        val_fraction,
    })
}

/// Pools samples from several scenarios into one dataset, so that train,
/// validation and test draw from all of them.
pub fn build_mixed_dataset(parts: Vec<Vec<CirSample>>, laps: u32, val_fraction: f64, seed: u64) -> Result<Dataset> {
    build_dataset(parts.into_iter().flatten().collect(), laps, val_fraction, seed)
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Indices of one split in sample order.
    pub fn indices(&self, which: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == which).collect()
    }

    pub fn count(&self, which: Split) -> usize {
        self.split.iter().filter(|&&s| s == which).count()
    }

    /// Scenarios present, in class order.
    pub fn scenarios(&self) -> Vec<ScenarioId> {
        ScenarioId::ALL
            .into_iter()
            .filter(|id| self.samples.iter().any(|s| s.scenario == *id))
            .collect()
    }

    /// Standardized `[B, N_ROWS, N_SUBCARRIERS]` inputs for the given samples.
    pub fn input_batch(&self, idx: &[usize]) -> Result<Tensor<f32>> {
        let mut data = Vec::with_capacity(idx.len() * N_FEATURES);
        for &i in idx {
            data.extend(self.scalers.forward_input(&self.samples[i].cir)?);
        }
        Ok(Tensor::new(vec![idx.len(), N_ROWS, N_SUBCARRIERS], data)?)
    }

    /// Standardized `[B, 2]` labels.
    pub fn label_batch(&self, idx: &[usize]) -> Result<Tensor<f32>> {
        let mut data = Vec::with_capacity(idx.len() * 2);
        for &i in idx {
            data.extend(self.scalers.forward_label(self.samples[i].label)?);
        }
        Ok(Tensor::new(vec![idx.len(), 2], data)?)
    }

    /// Verifies that the test split is exactly the final lap and that the
    /// stored scalers are reproduced by refitting on the train split alone.
    pub fn audit(&self) -> Result<()> {
        if self.split.len() != self.samples.len() {
            return Err(Error::Data("split and samples differ in length".into()));
        }
        for (s, &sp) in self.samples.iter().zip(&self.split) {
            if (s.lap_index == self.laps) != (sp == Split::Test) {
                return Err(Error::Data(format!("lap {} sample assigned to {sp:?}", s.lap_index)));
            }
        }
        let refit = Scalers::fit(self.indices(Split::Train).into_iter().map(|i| &self.samples[i]))?;
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        if !(close(&refit.input_mean, &self.scalers.input_mean)
            && close(&refit.input_std, &self.scalers.input_std)
            && close(&refit.label_mean, &self.scalers.label_mean)
            && close(&refit.label_std, &self.scalers.label_std))
        {
            return Err(Error::Data("scalers do not match the train split".into()));
        }
        Ok(())
    }
}
