use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::dataset::CirSample;
use crate::error::{Error, Result};
use crate::sim::{ChannelSnapshot, N_ROWS, N_SUBCARRIERS};

/// Symmetric Hann window, `w[i] = 0.5 (1 - cos(2 pi i / (n - 1)))`.
pub fn hann_window(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Config(format!("hann window needs n >= 2, got {n}")));
    }
    let m = (n - 1) as f64;
    Ok((0..n).map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / m).cos())).collect())
}

/// Windowed inverse DFT along each beam row, keeping magnitudes.
///
/// The IDFT uses the `1/N` convention, so per row
/// `sum |cir|^2 == (1/N) sum |w * ctf|^2`.
#[derive(Clone)]
pub struct CirTransform {
    window: Vec<f64>,
    ifft: Arc<dyn Fft<f64>>,
}

impl Default for CirTransform {
    fn default() -> Self {
        CirTransform::new()
    }
}

impl CirTransform {
    pub fn new() -> Self {
        CirTransform {
            window: hann_window(N_SUBCARRIERS).expect("46 >= 2"),
            ifft: FftPlanner::new().plan_fft_inverse(N_SUBCARRIERS),
        }
    }

    /// CIR amplitudes of a row-major `N_ROWS x N_SUBCARRIERS` CTF given as
    /// real and imaginary planes.
    pub fn amplitudes(&self, re: &[f64], im: &[f64]) -> Result<Vec<f32>> {
        let n = N_ROWS * N_SUBCARRIERS;
        if re.len() != n || im.len() != n {
            return Err(Error::Contract(format!(
                "ctf must be {N_ROWS}x{N_SUBCARRIERS}, got {} / {} values",
                re.len(),
                im.len()
            )));
        }
        let scale = 1.0 / N_SUBCARRIERS as f64;
        let mut buf = vec![Complex64::new(0.0, 0.0); N_SUBCARRIERS];
        let mut out = Vec::with_capacity(n);
        for row in 0..N_ROWS {
            let base = row * N_SUBCARRIERS;
            for (k, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(re[base + k], im[base + k]) * self.window[k];
            }
            self.ifft.process(&mut buf);
            out.extend(buf.iter().map(|c| (c.norm() * scale) as f32));
        }
        Ok(out)
    }

    pub fn convert(&self, snapshot: &ChannelSnapshot) -> Result<CirSample> {
        let cir = self.amplitudes(&snapshot.re, &snapshot.im)?;
        if cir.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite CIR amplitude".into()));
        }
        Ok(CirSample {
            cir,
            label: [snapshot.pose.position[0] as f32, snapshot.pose.position[1] as f32],
            scenario: snapshot.scenario,
            lap_index: snapshot.pose.lap_index,
            t: snapshot.pose.t as f32,
            standardized: false,
        })
    }
}

/// One-off conversion; reuse a [`CirTransform`] for many snapshots.
pub fn ctf_to_cir(snapshot: &ChannelSnapshot) -> Result<CirSample> {
    CirTransform::new().convert(snapshot)
}

/// Fraction of the strongest beam's CIR energy within the 4 delay bins from
/// one before to two after its peak bin (circular). High for LoS channels,
/// where energy sits in a single early arrival.
pub fn early_energy_fraction(cir: &[f32]) -> f64 {
    let rows = cir.chunks_exact(N_SUBCARRIERS);
    let energy = |row: &[f32]| row.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>();
    let strongest = rows
        .max_by(|a, b| energy(a).total_cmp(&energy(b)))
        .expect("at least one row");
    let total = energy(strongest);
    if total == 0.0 {
        return 0.0;
    }
    let peak = (0..N_SUBCARRIERS)
        .max_by(|&a, &b| strongest[a].total_cmp(&strongest[b]))
        .unwrap();
    let early: f64 = (0..4)
        .map(|o| {
            let bin = (peak + N_SUBCARRIERS + o - 1) % N_SUBCARRIERS;
            f64::from(strongest[bin]).powi(2)
        })
        .sum();
    early / total
}
