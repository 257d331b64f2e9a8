use rand::Rng;
use serde::{Deserialize, Serialize};

use beamloc_tensor::RngStreams;

use crate::error::{Error, Result};
use crate::sim::ScenarioParams;

/// UE pose at one snapshot instant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimedPose {
    pub t: f64,
    pub position: [f64; 2],
    /// 1-based lap number.
    pub lap_index: u32,
    /// Position along the loop as a fraction of its perimeter, in `[0, 1)`.
    pub arc_fraction: f64,
}

/// Closed polygonal loop traversed in waypoint order.
#[derive(Clone, Debug)]
pub struct Loop {
    waypoints: Vec<[f64; 2]>,
    /// Cumulative arc length at the start of each edge.
    starts: Vec<f64>,
    perimeter: f64,
}

impl Loop {
    pub fn new(waypoints: &[[f64; 2]]) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::Config("a loop needs at least two waypoints".into()));
        }
        let mut starts = Vec::with_capacity(waypoints.len());
        let mut total = 0.0;
        for i in 0..waypoints.len() {
            starts.push(total);
            total += dist(waypoints[i], waypoints[(i + 1) % waypoints.len()]);
        }
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Config(format!("degenerate loop with perimeter {total}")));
        }
        Ok(Loop {
            waypoints: waypoints.to_vec(),
            starts,
            perimeter: total,
        })
    }

    pub fn perimeter(&self) -> f64 {
        self.perimeter
    }

    /// Point at arc length `s` (wrapped onto the loop).
    pub fn point_at(&self, s: f64) -> [f64; 2] {
        let s = s.rem_euclid(self.perimeter);
        let edge = self.edge_at(s);
        let a = self.waypoints[edge];
        let b = self.waypoints[(edge + 1) % self.waypoints.len()];
        let len = dist(a, b);
        if len == 0.0 {
            return a;
        }
        let f = (s - self.starts[edge]) / len;
        [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]
    }

    /// Vertex average, used as the scenario reference point.
    pub fn centroid(&self) -> [f64; 2] {
        let n = self.waypoints.len() as f64;
        let (sx, sy) = self.waypoints.iter().fold((0.0, 0.0), |(x, y), p| (x + p[0], y + p[1]));
        [sx / n, sy / n]
    }

    /// Index of the edge containing arc length `s`.
    pub fn edge_at(&self, s: f64) -> usize {
        let s = s.rem_euclid(self.perimeter);
        match self.starts.binary_search_by(|x| x.total_cmp(&s)) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Samples `laps` traversals of the loop at constant speed, one pose per
/// snapshot interval. Every lap holds the same number of poses and the
/// vehicle keeps driving in the same direction; the starting point along
/// the loop is drawn from `seed`.
pub fn make_trajectory(params: &ScenarioParams, laps: u32, seed: u64) -> Result<Vec<TimedPose>> {
    if laps < 1 {
        return Err(Error::Config("laps must be at least 1".into()));
    }
    if !(params.speed_kmh > 0.0 && params.snapshot_interval_s > 0.0) {
        return Err(Error::Config("speed and snapshot interval must be positive".into()));
    }
    let path = Loop::new(&params.waypoints)?;
    let spacing = params.speed_kmh / 3.6 * params.snapshot_interval_s;
    let per_lap = poses_per_lap(path.perimeter(), spacing);
    let start = RngStreams::new(seed).stream("trajectory", 0).random::<f64>() * path.perimeter();
    let total = per_lap * laps as usize;
    Ok((0..total)
        .map(|i| {
            let s = start + i as f64 * spacing;
            TimedPose {
                t: i as f64 * params.snapshot_interval_s,
                position: path.point_at(s),
                lap_index: (i / per_lap) as u32 + 1,
                arc_fraction: s.rem_euclid(path.perimeter()) / path.perimeter(),
            }
        })
        .collect())
}

/// Snapshots needed to cover one perimeter, tolerant of float noise in
/// the ratio.
pub fn poses_per_lap(perimeter: f64, spacing: f64) -> usize {
    ((perimeter / spacing) - 1e-9).ceil().max(1.0) as usize
}
