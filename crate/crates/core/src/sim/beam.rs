use num_complex::Complex64;
use std::f64::consts::PI;

use super::{ARRAY_ELEMENTS, BEAM_GRID, BLOCK_ROWS};

/// Direction cosine `sin(azimuth)` the beam is steered to, on a 2x
/// oversampled DFT grid covering `[-1, 1)`.
fn steering_u(beam_index: usize) -> f64 {
    let u = 2.0 * beam_index as f64 / BEAM_GRID as f64;
    if u >= 1.0 {
        u - 2.0
    } else {
        u
    }
}

/// Azimuth (radians from broadside) of the beam's mainlobe peak.
pub fn steering_azimuth(beam_index: usize) -> f64 {
    steering_u(beam_index).asin()
}

/// Normalized DFT-beam response of a 32-element half-wavelength ULA.
///
/// `|gain| == 1` at the beam's steering azimuth. Over all 64 grid beams
/// `sum |gain|^2 == 2` for every azimuth; over the 32 even (or 32 odd) beams
/// alone it is exactly 1.
pub fn beam_gain(beam_index: usize, azimuth: f64) -> Complex64 {
    assert!(beam_index < BEAM_GRID, "beam index {beam_index} out of range");
    let delta = PI * (azimuth.sin() - steering_u(beam_index));
    let n = ARRAY_ELEMENTS as f64;
    (0..ARRAY_ELEMENTS)
        .map(|e| Complex64::from_polar(1.0, delta * e as f64))
        .sum::<Complex64>()
        / n
}

/// Grid beam feeding a row of the stacked `[H1; V1; H2; V2]` matrix.
/// H blocks use the even grid beams and V blocks the odd ones, each in
/// ascending DFT-index order, so both antenna pairs see all 64 beams.
pub fn row_beam_index(row: usize) -> usize {
    let block = row / BLOCK_ROWS;
    let polarization = block % 2;
    2 * (row % BLOCK_ROWS) + polarization
}
