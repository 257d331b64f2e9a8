use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::CirSample;
use crate::router::Router;
use crate::scenario::ScenarioId;

/// Mean Euclidean distance between predicted and true positions, meters.
pub fn mee(predictions: &[[f64; 2]], truths: &[[f64; 2]]) -> Result<f64> {
    if predictions.len() != truths.len() || predictions.is_empty() {
        return Err(Error::Contract(format!(
            "mee needs equal non-zero lengths, got {} and {}",
            predictions.len(),
            truths.len()
        )));
    }
    let total: f64 = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| (p[0] - t[0]).hypot(p[1] - t[1]))
        .sum();
    Ok(total / predictions.len() as f64)
}

/// Fraction of positions where `predicted` equals `truth`.
pub fn accuracy(predicted: &[ScenarioId], truth: &[ScenarioId]) -> Result<f64> {
    if predicted.len() != truth.len() || predicted.is_empty() {
        return Err(Error::Contract(format!(
            "accuracy needs equal non-zero lengths, got {} and {}",
            predicted.len(),
            truth.len()
        )));
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / predicted.len() as f64)
}

/// Share of raw samples routed to their own scenario.
pub fn router_accuracy(router: &Router, samples: &[&CirSample]) -> Result<f64> {
    let predicted = samples.iter().map(|s| router.route(s)).collect::<Result<Vec<_>>>()?;
    let truth: Vec<ScenarioId> = samples.iter().map(|s| s.scenario).collect();
    accuracy(&predicted, &truth)
}

/// Wall-clock protocol: one discarded warm-up pass, then the median of
/// `repeats` timed passes, on a single thread.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub median_s: f64,
    pub warmup_s: f64,
    pub runs_s: Vec<f64>,
}

pub const TIMING_REPEATS: usize = 5;

pub fn measure_test_time(repeats: usize, mut pass: impl FnMut() -> Result<()> + Send) -> Result<Timing> {
    if repeats == 0 {
        return Err(Error::Config("timing needs at least one repetition".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Config(format!("cannot build timing pool: {e}")))?;
    pool.install(|| {
        let t0 = Instant::now();
        pass()?;
        let warmup_s = t0.elapsed().as_secs_f64();
        let mut runs_s = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let t = Instant::now();
            pass()?;
            runs_s.push(t.elapsed().as_secs_f64());
        }
        let mut sorted = runs_s.clone();
        sorted.sort_by(f64::total_cmp);
        let median_s = if repeats % 2 == 1 {
            sorted[repeats / 2]
        } else {
            0.5 * (sorted[repeats / 2 - 1] + sorted[repeats / 2])
        };
        Ok(Timing {
            median_s,
            warmup_s,
            runs_s,
        })
    })
}
