//! Single-layer perceptron scenario router and the dispatcher that runs
//! exactly one specialist per snapshot.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use beamloc_tensor::Tensor;

use crate::error::{Error, Result};
use crate::model::AttentionModel;
use crate::preprocess::{CirSample, Scalers, N_FEATURES};
use crate::scenario::ScenarioId;
use crate::sim::{N_ROWS, N_SUBCARRIERS};

pub const N_CLASSES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouterVariant {
    /// The whole `128 x 46` amplitude matrix.
    FullInput,
    /// The 128 beam amplitudes of one delay bin.
    SingleBin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouterConfig {
    pub variant: RouterVariant,
    pub bin_index: Option<usize>,
}

impl RouterConfig {
    pub fn full_input() -> Self {
        RouterConfig {
            variant: RouterVariant::FullInput,
            bin_index: None,
        }
    }

    pub fn single_bin(bin_index: usize) -> Self {
        RouterConfig {
            variant: RouterVariant::SingleBin,
            bin_index: Some(bin_index),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.variant, self.bin_index) {
            (RouterVariant::FullInput, None) => Ok(()),
            (RouterVariant::FullInput, Some(_)) => {
                Err(Error::Config("bin_index is only valid for the single-bin variant".into()))
            }
            (RouterVariant::SingleBin, None) => Err(Error::Config("the single-bin variant needs a bin_index".into())),
            (RouterVariant::SingleBin, Some(k)) if k >= N_SUBCARRIERS => Err(Error::Config(format!(
                "bin_index {k} outside 0..{N_SUBCARRIERS}"
            ))),
            (RouterVariant::SingleBin, Some(_)) => Ok(()),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self.variant {
            RouterVariant::FullInput => N_FEATURES,
            RouterVariant::SingleBin => N_ROWS,
        }
    }

    pub fn param_count(&self) -> usize {
        self.input_dim() * N_CLASSES + N_CLASSES
    }
}

/// `W: [input_dim, 3]`, `b: [3]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RouterWeights {
    pub w: Tensor<f32>,
    pub b: Tensor<f32>,
}

impl RouterWeights {
    pub fn zeros(input_dim: usize) -> Self {
        RouterWeights {
            w: Tensor::zeros(&[input_dim, N_CLASSES]),
            b: Tensor::zeros(&[N_CLASSES]),
        }
    }

    pub fn param_count(&self) -> usize {
        self.w.numel() + self.b.numel()
    }
}

/// Router input from a sample already standardized with the router's scalers.
pub fn extract_features(sample: &CirSample, config: &RouterConfig) -> Result<Vec<f32>> {
    config.validate()?;
    if !sample.standardized {
        return Err(Error::Contract("router features need a standardized sample".into()));
    }
    if sample.cir.len() != N_FEATURES {
        return Err(Error::Contract(format!("sample has {} features, expected {N_FEATURES}", sample.cir.len())));
    }
    Ok(match config.variant {
        RouterVariant::FullInput => sample.cir.clone(),
        RouterVariant::SingleBin => {
            let k = config.bin_index.expect("validated");
            (0..N_ROWS).map(|r| sample.cir[r * N_SUBCARRIERS + k]).collect()
        }
    })
}

/// Raw logits `x W + b`, accumulated in double precision.
pub fn slp_logits(x: &[f32], weights: &RouterWeights) -> Result<[f64; N_CLASSES]> {
    let dim = weights.w.shape()[0];
    if x.len() != dim || weights.w.shape() != [dim, N_CLASSES] || weights.b.shape() != [N_CLASSES] {
        return Err(Error::Contract(format!(
            "router input of length {} does not match weights {:?}",
            x.len(),
            weights.w.shape()
        )));
    }
    let w = weights.w.data();
    let mut z = [0.0f64; N_CLASSES];
    for (c, zc) in z.iter_mut().enumerate() {
        *zc = f64::from(weights.b.data()[c]) + x.iter().enumerate().map(|(i, &v)| f64::from(v) * f64::from(w[i * N_CLASSES + c])).sum::<f64>();
    }
    Ok(z)
}

pub fn softmax3(z: [f64; N_CLASSES]) -> [f64; N_CLASSES] {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e = z.map(|v| (v - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

/// `softmax(x W + b)`.
pub fn slp_forward(x: &[f32], weights: &RouterWeights) -> Result<[f64; N_CLASSES]> {
    Ok(softmax3(slp_logits(x, weights)?))
}

/// Class with the largest score; ties go to the lowest index.
pub fn argmax_class(scores: &[f64]) -> ScenarioId {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    ScenarioId::from_class_index(best).expect("three classes")
}

/// Trained SLP with the scalers used to standardize its input.
#[derive(Clone, Debug, PartialEq)]
pub struct Router {
    pub config: RouterConfig,
    pub weights: RouterWeights,
    pub scalers: Scalers,
}

impl Router {
    pub fn param_count(&self) -> usize {
        self.weights.param_count()
    }

    /// Feature vector of a raw sample.
    pub fn features(&self, sample: &CirSample) -> Result<Vec<f32>> {
        if sample.standardized {
            return Err(Error::Contract("router expects a raw sample".into()));
        }
        let mut std = sample.clone();
        std.cir = self.scalers.forward_input(&sample.cir)?;
        std.standardized = true;
        extract_features(&std, &self.config)
    }

    pub fn probabilities(&self, sample: &CirSample) -> Result<[f64; N_CLASSES]> {
        slp_forward(&self.features(sample)?, &self.weights)
    }

    pub fn route(&self, sample: &CirSample) -> Result<ScenarioId> {
        Ok(route(&self.probabilities(sample)?))
    }
}

/// Routed scenario for a probability (or logit) vector.
pub fn route(probabilities: &[f64; N_CLASSES]) -> ScenarioId {
    argmax_class(probabilities)
}

/// A scenario-specific regressor with its own dataset scalers.
#[derive(Clone, Debug, PartialEq)]
pub struct Specialist {
    pub model: AttentionModel<f32>,
    pub scalers: Scalers,
}

impl Specialist {
    /// Positions in meters for raw samples, in input order.
    pub fn locate(&self, samples: &[&CirSample]) -> Result<Vec<[f64; 2]>> {
        let std: Vec<CirSample> = samples
            .iter()
            .map(|s| {
                if s.standardized {
                    return Err(Error::Contract("specialist expects raw samples".into()));
                }
                let mut t = (*s).clone();
                t.cir = self.scalers.forward_input(&s.cir)?;
                t.standardized = true;
                Ok(t)
            })
            .collect::<Result<_>>()?;
        let refs: Vec<&CirSample> = std.iter().collect();
        self.model
            .predict_samples(&refs)?
            .into_iter()
            .map(|y| self.scalers.inverse_label(y))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.model.param_count()
    }
}

/// Operator-declared selection, bypassing any router. Declaring the wrong
/// scenario is allowed.
pub fn method2_select(scenario: ScenarioId, registry: &BTreeMap<ScenarioId, Specialist>) -> Result<&Specialist> {
    registry
        .get(&scenario)
        .ok_or_else(|| Error::Config(format!("no specialist registered for {scenario}")))
}

/// Router plus one specialist per scenario.
#[derive(Clone, Debug)]
pub struct AdaptiveEnsemble {
    pub router: Router,
    pub specialists: BTreeMap<ScenarioId, Specialist>,
}

/// Per-stream routing state. Each evaluation stream owns one.
#[derive(Clone, Debug, Default)]
pub struct StreamState {
    previous: Option<ScenarioId>,
    history: VecDeque<ScenarioId>,
    /// Majority-vote window over the raw routing decisions; 0 or 1 disables
    /// smoothing.
    pub smoothing_window: usize,
    pub switch_events: usize,
    pub snapshots: usize,
}

impl StreamState {
    pub fn new() -> Self {
        StreamState::default()
    }

    pub fn with_smoothing(window: usize) -> Self {
        StreamState {
            smoothing_window: window,
            ..StreamState::default()
        }
    }

    pub fn active(&self) -> Option<ScenarioId> {
        self.previous
    }

    /// Records one raw routing decision and returns the scenario to run.
    pub fn observe(&mut self, raw: ScenarioId) -> ScenarioId {
        let chosen = if self.smoothing_window > 1 {
            self.history.push_back(raw);
            while self.history.len() > self.smoothing_window {
                self.history.pop_front();
            }
            let mut counts = [0usize; N_CLASSES];
            for s in &self.history {
                counts[s.class_index()] += 1;
            }
            let top = *counts.iter().max().unwrap();
            // keep the current specialist on ties
            match self.previous {
                Some(p) if counts[p.class_index()] == top => p,
                _ => ScenarioId::from_class_index(counts.iter().position(|&c| c == top).unwrap()).unwrap(),
            }
        } else {
            raw
        };
        if self.previous.is_some_and(|p| p != chosen) {
            self.switch_events += 1;
        }
        self.previous = Some(chosen);
        self.snapshots += 1;
        chosen
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dispatched {
    pub position: [f64; 2],
    pub routed: ScenarioId,
    pub active_params: usize,
}

impl AdaptiveEnsemble {
    pub fn specialist(&self, id: ScenarioId) -> Result<&Specialist> {
        self.specialists
            .get(&id)
            .ok_or_else(|| Error::Config(format!("ensemble has no specialist for routed scenario {id}")))
    }

    pub fn total_params(&self) -> usize {
        self.router.param_count() + self.specialists.values().map(Specialist::param_count).sum::<usize>()
    }

    pub fn active_params(&self, id: ScenarioId) -> Result<usize> {
        Ok(self.specialist(id)?.param_count() + self.router.param_count())
    }

    /// Routes one raw sample and runs only the chosen specialist.
    pub fn dispatch(&self, sample: &CirSample, stream: &mut StreamState) -> Result<Dispatched> {
        let id = stream.observe(self.router.route(sample)?);
        let spec = self.specialist(id)?;
        let position = spec.locate(&[sample])?[0];
        Ok(Dispatched {
            position,
            routed: id,
            active_params: spec.param_count() + self.router.param_count(),
        })
    }

    /// Dispatches a whole stream in order. Consecutive snapshots routed to the
    /// same specialist are batched, which leaves each output unchanged.
    pub fn dispatch_stream(&self, samples: &[&CirSample], stream: &mut StreamState) -> Result<Vec<Dispatched>> {
        let mut routed = Vec::with_capacity(samples.len());
        for s in samples {
            routed.push(stream.observe(self.router.route(s)?));
        }
        let mut out = Vec::with_capacity(samples.len());
        let mut start = 0;
        while start < samples.len() {
            let id = routed[start];
            let end = (start..samples.len()).find(|&i| routed[i] != id).unwrap_or(samples.len());
            let spec = self.specialist(id)?;
            let active = spec.param_count() + self.router.param_count();
            for position in spec.locate(&samples[start..end])? {
                out.push(Dispatched {
                    position,
                    routed: id,
                    active_params: active,
                });
            }
            start = end;
        }
        Ok(out)
    }
}
