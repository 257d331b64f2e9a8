#![allow(dead_code)]

use beamloc::model::{AttentionModel, Mode, ModelConfig};
use beamloc::preprocess::{CirSample, N_FEATURES};
use beamloc::ScenarioId;
use beamloc_tensor::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tiny encoder used for finite-difference checks.
pub fn tiny_config(use_layer_norm: bool) -> ModelConfig {
    ModelConfig {
        encoder_layers: 2,
        use_layer_norm,
        use_max_pool: true,
        d_model: 6,
        seq_len: 8,
        n_heads: 2,
        d_ff: 7,
        dropout_rate: 0.0,
        fcnn_hidden: 5,
        pool_segment: 4,
    }
}

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// `sum(model(x) * w)` in eval mode.
fn weighted_output(model: &AttentionModel<f64>, x: &Tensor<f64>, w: &Tensor<f64>) -> f64 {
    let y = model.predict(x).unwrap();
    y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

/// Largest relative error between tape gradients and central differences
/// over every parameter and input element of `model`.
pub fn model_gradcheck(model: &AttentionModel<f64>, batch: usize, seed: u64) -> f64 {
    let c = &model.config;
    let x = random_tensor(&[batch, c.seq_len, c.d_model], seed);
    let w = random_tensor(&[batch, 2], seed + 1);

    let mut g = Graph::new();
    let xv = g.param(x.clone());
    let f = model.forward(&mut g, xv, true, &mut Mode::Eval).unwrap();
    let wv = g.constant(w.clone());
    let prod = g.mul(f.output, wv).unwrap();
    let loss = g.sum(prod);
    g.backward(loss).unwrap();

    let h = 1e-5;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-4);
    let mut worst: f64 = 0.0;

    for (pi, var) in f.params.vars.iter().enumerate() {
        let analytic = g.grad(*var).unwrap().data().to_vec();
        for i in 0..analytic.len() {
            let mut plus = model.clone();
            plus.weights.tensors_mut()[pi].data_mut()[i] += h;
            let mut minus = model.clone();
            minus.weights.tensors_mut()[pi].data_mut()[i] -= h;
            let numeric = (weighted_output(&plus, &x, &w) - weighted_output(&minus, &x, &w)) / (2.0 * h);
            worst = worst.max(rel(analytic[i], numeric));
        }
    }
    let gx = g.grad(xv).unwrap().data().to_vec();
    for i in 0..x.numel() {
        let mut xp = x.clone();
        xp.data_mut()[i] += h;
        let mut xm = x.clone();
        xm.data_mut()[i] -= h;
        let numeric = (weighted_output(model, &xp, &w) - weighted_output(model, &xm, &w)) / (2.0 * h);
        worst = worst.max(rel(gx[i], numeric));
    }
    worst
}

/// Standardized-looking random samples for shape tests.
pub fn random_samples(n: usize, seed: u64) -> Vec<CirSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| CirSample {
            cir: (0..N_FEATURES).map(|_| rng.random_range(-2.0..2.0)).collect(),
            label: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            scenario: ScenarioId::ALL[i % 3],
            lap_index: 1,
            t: i as f32 * 0.02,
            standardized: true,
        })
        .collect()
}

/// Raw (unstandardized, non-negative) samples, `per_lap` per lap over laps
/// `1..=laps`, scenarios cycling through s1, s2, s3.
pub fn raw_samples(per_lap: usize, laps: u32, seed: u64) -> Vec<CirSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for lap in 1..=laps {
        for i in 0..per_lap {
            out.push(CirSample {
                cir: (0..N_FEATURES).map(|_| rng.random_range(0.0..3.0)).collect(),
                label: [rng.random_range(-20.0..20.0), rng.random_range(10.0..50.0)],
                scenario: ScenarioId::ALL[i % 3],
                lap_index: lap,
                t: i as f32 * 0.02,
                standardized: false,
            });
        }
    }
    out
}

/// Every regular file in `dir` with its bytes, sorted by name.
pub fn dir_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

/// Raw samples of one scenario whose beam row `class_index` carries a large
/// value in delay bin 0, so a single-bin router on bin 0 can tell the
/// scenarios apart.
pub fn marked_samples(id: ScenarioId, per_lap: usize, laps: u32, seed: u64) -> Vec<CirSample> {
    let mut s = raw_samples(per_lap, laps, seed);
    for x in &mut s {
        x.scenario = id;
        x.cir[id.class_index() * beamloc::sim::N_SUBCARRIERS] = 100.0;
    }
    s
}

/// Single-bin router on bin 0 that routes [`marked_samples`] perfectly.
pub fn marker_router(scalers: beamloc::preprocess::Scalers) -> beamloc::router::Router {
    use beamloc::router::{Router, RouterConfig, RouterWeights, N_CLASSES};
    let config = RouterConfig::single_bin(0);
    let mut weights = RouterWeights::zeros(config.input_dim());
    for c in 0..N_CLASSES {
        weights.w.data_mut()[c * N_CLASSES + c] = 1.0;
    }
    Router {
        config,
        weights,
        scalers,
    }
}
