use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::ScenarioId;

/// Line-of-sight visibility along the loop, as a function of arc length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LosMask {
    Visible,
    Blocked,
    /// Blocked on each `[start, end)` interval, given as fractions of the
    /// loop perimeter in `[0, 1]`; visible elsewhere.
    BlockedIntervals(Vec<[f64; 2]>),
}

impl LosMask {
    pub fn is_visible(&self, arc_fraction: f64) -> bool {
        match self {
            LosMask::Visible => true,
            LosMask::Blocked => false,
            LosMask::BlockedIntervals(iv) => !iv.iter().any(|&[a, b]| arc_fraction >= a && arc_fraction < b),
        }
    }

    /// Visibility changes per lap, counting the wrap from the end of the
    /// loop back to its start.
    pub fn transitions_per_lap(&self) -> usize {
        match self {
            LosMask::Visible | LosMask::Blocked => 0,
            LosMask::BlockedIntervals(_) => {
                const STEPS: usize = 10_000;
                let states: Vec<bool> = (0..STEPS).map(|i| self.is_visible(i as f64 / STEPS as f64)).collect();
                (0..STEPS).filter(|&i| states[i] != states[(i + 1) % STEPS]).count()
            }
        }
    }
}

/// Everything needed to synthesize one scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub scenario: ScenarioId,
    /// LoS-to-scatter power ratio at the loop centroid.
    pub k_factor_db: f64,
    pub n_scatterers: usize,
    pub los_mask: LosMask,
    /// Maximum excess delay of scatter paths seen from the loop centroid;
    /// scatterers lie within `c * delay_spread / 2` of it.
    pub delay_spread_ns: f64,
    /// Complex Gaussian noise power relative to the mean path power of each
    /// snapshot. Negative infinity disables noise.
    pub noise_floor_db: f64,
    /// Closed loop, meters, BS at the origin.
    pub waypoints: Vec<[f64; 2]>,
    pub bs_height_m: f64,
    pub ue_height_m: f64,
    pub speed_kmh: f64,
    pub snapshot_interval_s: f64,
}

impl ScenarioParams {
    pub fn preset(scenario: ScenarioId) -> Self {
        let base = ScenarioParams {
            scenario,
            k_factor_db: 0.0,
            n_scatterers: 0,
            los_mask: LosMask::Visible,
            delay_spread_ns: 0.0,
            noise_floor_db: -25.0,
            waypoints: Vec::new(),
            bs_height_m: 20.0,
            ue_height_m: 1.5,
            speed_kmh: 15.0,
            snapshot_interval_s: 0.020,
        };
        match scenario {
            // rooftop loop, about 10 m above ground
            ScenarioId::S1 => ScenarioParams {
                k_factor_db: 12.0,
                n_scatterers: 8,
                delay_spread_ns: 150.0,
                waypoints: vec![[10.0, 40.0], [20.0, 40.0], [20.0, 50.0], [10.0, 50.0]],
                ue_height_m: 10.0,
                ..base
            },
            // street level under the BS
            ScenarioId::S2 => ScenarioParams {
                los_mask: LosMask::Blocked,
                n_scatterers: 40,
                delay_spread_ns: 250.0,
                waypoints: vec![[-6.0, 18.0], [6.0, 18.0], [6.0, 26.0], [-6.0, 26.0]],
                ..base
            },
            ScenarioId::S3 => ScenarioParams {
                k_factor_db: 9.0,
                n_scatterers: 20,
                los_mask: LosMask::BlockedIntervals(vec![[0.15, 0.35], [0.6, 0.8]]),
                delay_spread_ns: 200.0,
                waypoints: vec![[-25.0, 35.0], [-11.0, 35.0], [-11.0, 41.0], [-25.0, 41.0]],
                ..base
            },
        }
    }

    /// Checks field ranges and the per-scenario visibility contract.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.waypoints.len() < 3 {
            return bad(format!("loop needs at least 3 waypoints, got {}", self.waypoints.len()));
        }
        for (name, v) in [
            ("speed_kmh", self.speed_kmh),
            ("snapshot_interval_s", self.snapshot_interval_s),
            ("bs_height_m", self.bs_height_m),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.ue_height_m >= 0.0) || !(self.delay_spread_ns >= 0.0) {
            return bad("ue_height_m and delay_spread_ns must be non-negative".into());
        }
        if !self.k_factor_db.is_finite() || self.noise_floor_db.is_nan() {
            return bad("k_factor_db must be finite and noise_floor_db a number".into());
        }
        if let LosMask::BlockedIntervals(iv) = &self.los_mask {
            if iv.iter().any(|&[a, b]| !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a >= b) {
                return bad("blocked LoS intervals must satisfy 0 <= start < end <= 1".into());
            }
        }
        match self.scenario {
            ScenarioId::S1 => {
                if self.los_mask != LosMask::Visible || self.k_factor_db < 10.0 {
                    return bad("s1 requires an always-visible LoS and k_factor_db >= 10".into());
                }
            }
            ScenarioId::S2 => {
                if self.los_mask != LosMask::Blocked {
                    return bad("s2 requires a permanently blocked LoS".into());
                }
            }
            ScenarioId::S3 => {
                if self.los_mask.transitions_per_lap() < 2 {
                    return bad("s3 requires a LoS mask with at least 2 transitions per lap".into());
                }
            }
        }
        Ok(())
    }
}
