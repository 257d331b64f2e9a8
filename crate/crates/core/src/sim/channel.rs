use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use beamloc_tensor::RngStreams;

use super::beam::{beam_gain, row_beam_index};
use super::trajectory::{make_trajectory, Loop, TimedPose};
use super::{ScenarioParams, DELAY_WINDOW_S, N_ROWS, N_SUBCARRIERS, SPEED_OF_LIGHT, SUBCARRIER_SPACING_HZ};
use crate::error::{Error, Result};
use crate::scenario::ScenarioId;

const MAX_RANGE_M: f64 = 1000.0;
/// Standard deviation of the per-block, per-beam gain offsets.
const BLOCK_GAIN_SIGMA_DB: f64 = 0.5;
const SCATTERER_MAX_HEIGHT_M: f64 = 15.0;

/// One beam-space channel transfer function, `N_ROWS x N_SUBCARRIERS`
/// row-major, kept as separate real and imaginary planes.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSnapshot {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub pose: TimedPose,
    pub scenario: ScenarioId,
}

impl ChannelSnapshot {
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        let i = row * N_SUBCARRIERS + col;
        Complex64::new(self.re[i], self.im[i])
    }

    pub fn total_power(&self) -> f64 {
        self.re.iter().zip(&self.im).map(|(a, b)| a * a + b * b).sum()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Scatterer {
    position: [f64; 3],
    /// Relative amplitude weight before path-length loss.
    weight: f64,
    /// Independent phase per H1/V1/H2/V2 block.
    phases: [f64; 4],
}

/// One propagation path at a given pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Path {
    pub delay_s: f64,
    pub azimuth: f64,
    pub amplitude: f64,
    pub phases: [f64; 4],
    pub is_los: bool,
}

/// Scenario geometry frozen by a seed: scatterer cloud, per-block LoS
/// phases and per-block beam gain offsets.
#[derive(Clone, Debug)]
pub struct ChannelModel {
    params: ScenarioParams,
    path: Loop,
    scatterers: Vec<Scatterer>,
    los_phases: [f64; 4],
    /// Linear amplitude offset per stacked row.
    row_gains: Vec<f64>,
    /// Distance from the BS to the loop centroid, used as amplitude reference.
    reference_distance: f64,
}

impl ChannelModel {
    pub fn new(params: &ScenarioParams, seed: u64) -> Result<Self> {
        let path = Loop::new(&params.waypoints)?;
        let streams = RngStreams::new(seed).derive("channel");
        let mut rng = streams.stream("geometry", 0);
        let centroid = path.centroid();
        let ue_ref = [centroid[0], centroid[1], params.ue_height_m];
        let bs = [0.0, 0.0, params.bs_height_m];
        let reference_distance = dist3(bs, ue_ref);

        let radius = SPEED_OF_LIGHT * params.delay_spread_ns * 1e-9 / 2.0;
        let mut scatterers = Vec::with_capacity(params.n_scatterers);
        for _ in 0..params.n_scatterers {
            let r = radius * rng.random::<f64>().sqrt();
            let theta = 2.0 * PI * rng.random::<f64>();
            let position = [
                centroid[0] + r * theta.cos(),
                centroid[1] + r * theta.sin(),
                SCATTERER_MAX_HEIGHT_M * rng.random::<f64>(),
            ];
            let excess = (dist3(bs, position) + dist3(position, ue_ref) - reference_distance) / SPEED_OF_LIGHT;
            let spread = (params.delay_spread_ns * 1e-9).max(1e-12);
            // exponential power-delay profile with random per-path fading
            let power = Distribution::<f64>::sample(&Exp1, &mut rng) * (-excess / spread).exp();
            let mut phases = [0.0; 4];
            for p in &mut phases {
                *p = 2.0 * PI * rng.random::<f64>();
            }
            scatterers.push(Scatterer {
                position,
                weight: f64::sqrt(power),
                phases,
            });
        }

        // scale scatter power so that LoS / scatter = K at the centroid
        let scatter_power: f64 = scatterers
            .iter()
            .map(|s| {
                let len = dist3(bs, s.position) + dist3(s.position, ue_ref);
                (s.weight * reference_distance / len).powi(2)
            })
            .sum();
        if scatter_power > 0.0 {
            let k = 10f64.powf(params.k_factor_db / 10.0);
            let scale = (1.0 / (k * scatter_power)).sqrt();
            for s in &mut scatterers {
                s.weight *= scale;
            }
        }

        let mut los_phases = [0.0; 4];
        for p in &mut los_phases {
            *p = 2.0 * PI * rng.random::<f64>();
        }
        let row_gains = (0..N_ROWS)
            .map(|_| {
                let db: f64 = BLOCK_GAIN_SIGMA_DB * Distribution::<f64>::sample(&StandardNormal, &mut rng);
                10f64.powf(db / 20.0)
            })
            .collect();

        Ok(ChannelModel {
            params: params.clone(),
            path,
            scatterers,
            los_phases,
            row_gains,
            reference_distance,
        })
    }

    pub fn params(&self) -> &ScenarioParams {
        &self.params
    }

    pub fn perimeter(&self) -> f64 {
        self.path.perimeter()
    }

    /// 3-D BS-to-UE distance at a ground position.
    pub fn los_distance(&self, position: [f64; 2]) -> f64 {
        dist3(
            [0.0, 0.0, self.params.bs_height_m],
            [position[0], position[1], self.params.ue_height_m],
        )
    }

    /// Paths reaching the UE at `pose`, LoS first when visible.
    pub fn paths(&self, pose: &TimedPose) -> Vec<Path> {
        let bs = [0.0, 0.0, self.params.bs_height_m];
        let ue = [pose.position[0], pose.position[1], self.params.ue_height_m];
        let mut out = Vec::with_capacity(self.scatterers.len() + 1);
        if self.params.los_mask.is_visible(pose.arc_fraction) {
            let d = dist3(bs, ue);
            out.push(Path {
                delay_s: d / SPEED_OF_LIGHT,
                azimuth: ue[0].atan2(ue[1]),
                amplitude: self.reference_distance / d,
                phases: self.los_phases,
                is_los: true,
            });
        }
        for s in &self.scatterers {
            let len = dist3(bs, s.position) + dist3(s.position, ue);
            out.push(Path {
                delay_s: len / SPEED_OF_LIGHT,
                azimuth: s.position[0].atan2(s.position[1]),
                amplitude: s.weight * self.reference_distance / len,
                phases: s.phases,
                is_los: false,
            });
        }
        out
    }

    /// Noise-free transfer function at `pose`.
    pub fn clean_ctf(&self, pose: &TimedPose) -> Result<(Vec<f64>, Vec<f64>)> {
        let range = pose.position[0].hypot(pose.position[1]);
        if range > MAX_RANGE_M {
            return Err(Error::Generation(format!(
                "pose at {range:.1} m is beyond {MAX_RANGE_M} m from the BS"
            )));
        }
        let paths = self.paths(pose);
        let mut re = vec![0.0; N_ROWS * N_SUBCARRIERS];
        let mut im = vec![0.0; N_ROWS * N_SUBCARRIERS];
        let mut tones = vec![Complex64::new(0.0, 0.0); N_SUBCARRIERS];
        for p in &paths {
            if p.delay_s >= DELAY_WINDOW_S {
                return Err(Error::Generation(format!(
                    "path delay {:.1} ns exceeds the {:.1} ns unambiguous window",
                    p.delay_s * 1e9,
                    DELAY_WINDOW_S * 1e9
                )));
            }
            let step = Complex64::from_polar(1.0, -2.0 * PI * SUBCARRIER_SPACING_HZ * p.delay_s);
            let mut phasor = Complex64::new(1.0, 0.0);
            for t in tones.iter_mut() {
                *t = phasor;
                phasor *= step;
            }
            for row in 0..N_ROWS {
                let block = row / (N_ROWS / 4);
                let coeff = Complex64::from_polar(p.amplitude * self.row_gains[row], p.phases[block])
                    * beam_gain(row_beam_index(row), p.azimuth);
                let base = row * N_SUBCARRIERS;
                for (k, t) in tones.iter().enumerate() {
                    let v = coeff * t;
                    re[base + k] += v.re;
                    im[base + k] += v.im;
                }
            }
        }
        Ok((re, im))
    }

    /// `ctf[m, k] = sum_p a_p B_m(theta_p) exp(-j 2 pi f_k tau_p) + noise`
    /// with the noise drawn from `rng`.
    pub fn synth_ctf<R: Rng + ?Sized>(&self, pose: &TimedPose, rng: &mut R) -> Result<ChannelSnapshot> {
        let (mut re, mut im) = self.clean_ctf(pose)?;
        if self.params.noise_floor_db.is_finite() {
            let mean_power =
                re.iter().zip(&im).map(|(a, b)| a * a + b * b).sum::<f64>() / re.len() as f64;
            let sigma = (mean_power * 10f64.powf(self.params.noise_floor_db / 10.0) / 2.0).sqrt();
            for (a, b) in re.iter_mut().zip(im.iter_mut()) {
                let n_re: f64 = StandardNormal.sample(rng);
                let n_im: f64 = StandardNormal.sample(rng);
                *a += sigma * n_re;
                *b += sigma * n_im;
            }
        }
        Ok(ChannelSnapshot {
            re,
            im,
            pose: *pose,
            scenario: self.params.scenario,
        })
    }
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Trajectory plus one snapshot per pose. Snapshot `i` draws its noise from
/// its own stream, so the result does not depend on thread scheduling.
pub fn generate_snapshots(params: &ScenarioParams, laps: u32, seed: u64) -> Result<Vec<ChannelSnapshot>> {
    params.validate()?;
    let poses = make_trajectory(params, laps, seed)?;
    let model = ChannelModel::new(params, seed)?;
    let noise = RngStreams::new(seed).derive("noise");
    poses
        .par_iter()
        .enumerate()
        .map(|(i, pose)| model.synth_ctf(pose, &mut noise.stream("snapshot", i as u64)))
        .collect()
}
