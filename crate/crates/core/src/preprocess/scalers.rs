use serde::{Deserialize, Serialize};

use super::dataset::CirSample;
use super::N_FEATURES;
use crate::error::{Error, Result};

/// Standard deviations below this are treated as constant features.
const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Per-feature input z-scores and per-axis label z-scores.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scalers {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub label_mean: [f64; 2],
    pub label_std: [f64; 2],
}

struct Moments {
    mean: Vec<f64>,
    m2: Vec<f64>,
    n: f64,
}

impl Moments {
    fn new(width: usize) -> Self {
        Moments {
            mean: vec![0.0; width],
            m2: vec![0.0; width],
            n: 0.0,
        }
    }

    // Welford update
    fn push(&mut self, x: impl Iterator<Item = f64>) {
        self.n += 1.0;
        for ((v, mean), m2) in x.zip(self.mean.iter_mut()).zip(self.m2.iter_mut()) {
            let d = v - *mean;
            *mean += d / self.n;
            *m2 += d * (v - *mean);
        }
    }

    fn finish(self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        self.mean
            .into_iter()
            .zip(self.m2)
            .map(|(mean, m2)| {
                let std = (m2 / n).sqrt();
                if std * std < VARIANCE_FLOOR || !std.is_finite() {
                    (0.0, 1.0)
                } else {
                    (mean, std)
                }
            })
            .unzip()
    }
}

impl Scalers {
    /// Fits on raw (unstandardized) samples.
    pub fn fit<'a>(samples: impl IntoIterator<Item = &'a CirSample>) -> Result<Scalers> {
        let mut inputs = Moments::new(N_FEATURES);
        let mut labels = Moments::new(2);
        for s in samples {
            if s.standardized {
                return Err(Error::Contract("scalers must be fitted on raw samples".into()));
            }
            if s.cir.len() != N_FEATURES {
                return Err(Error::Contract(format!("sample has {} features, expected {N_FEATURES}", s.cir.len())));
            }
            inputs.push(s.cir.iter().map(|&v| f64::from(v)));
            labels.push(s.label.iter().map(|&v| f64::from(v)));
        }
        if inputs.n == 0.0 {
            return Err(Error::Data("cannot fit scalers on an empty training set".into()));
        }
        let (input_mean, input_std) = inputs.finish();
        let (lm, ls) = labels.finish();
        Ok(Scalers {
            input_mean,
            input_std,
            label_mean: [lm[0], lm[1]],
            label_std: [ls[0], ls[1]],
        })
    }

    pub fn is_fitted(&self) -> bool {
        self.input_mean.len() == N_FEATURES && self.input_std.len() == N_FEATURES
    }

    fn check(&self) -> Result<()> {
        if self.is_fitted() {
            Ok(())
        } else {
            Err(Error::State("scalers have not been fitted".into()))
        }
    }

    pub fn forward_input(&self, cir: &[f32]) -> Result<Vec<f32>> {
        self.check()?;
        Ok(cir
            .iter()
            .zip(self.input_mean.iter().zip(&self.input_std))
            .map(|(&v, (m, s))| ((f64::from(v) - m) / s) as f32)
            .collect())
    }

    pub fn forward_label(&self, y: [f32; 2]) -> Result<[f32; 2]> {
        self.check()?;
        Ok([0, 1].map(|a| ((f64::from(y[a]) - self.label_mean[a]) / self.label_std[a]) as f32))
    }

    /// Standardized label back to meters.
    pub fn inverse_label(&self, y: [f32; 2]) -> Result<[f64; 2]> {
        self.check()?;
        Ok([0, 1].map(|a| f64::from(y[a]) * self.label_std[a] + self.label_mean[a]))
    }
}

/// Moves a sample between raw and standardized units.
pub fn apply_scalers(sample: &CirSample, scalers: &Scalers, direction: Direction) -> Result<CirSample> {
    scalers.check()?;
    let mut out = sample.clone();
    match direction {
        Direction::Forward => {
            if sample.standardized {
                return Err(Error::Contract("sample is already standardized".into()));
            }
            out.cir = scalers.forward_input(&sample.cir)?;
            out.label = scalers.forward_label(sample.label)?;
            out.standardized = true;
        }
        Direction::Inverse => {
            if !sample.standardized {
                return Err(Error::Contract("sample is not standardized".into()));
            }
            out.cir = sample
                .cir
                .iter()
                .zip(scalers.input_mean.iter().zip(&scalers.input_std))
                .map(|(&v, (m, s))| (f64::from(v) * s + m) as f32)
                .collect();
            let y = scalers.inverse_label(sample.label)?;
            out.label = [y[0] as f32, y[1] as f32];
            out.standardized = false;
        }
    }
    Ok(out)
}
