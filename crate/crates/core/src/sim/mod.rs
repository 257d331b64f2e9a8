//! Synthetic beam-space channel generator.
//!
//! A [`ChannelModel`] fixes scatterer geometry for a scenario seed, so the
//! channel is a deterministic function of UE position plus per-snapshot
//! measurement noise. Vehicles drive closed loops around a base station
//! placed at the origin with its array broadside along +y.

mod beam;
mod channel;
mod params;
mod trajectory;

pub use beam::{beam_gain, row_beam_index, steering_azimuth};
pub use channel::{generate_snapshots, ChannelModel, ChannelSnapshot, Path};
pub use params::{LosMask, ScenarioParams};
pub use trajectory::{make_trajectory, Loop, TimedPose};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Beams on the oversampled steering grid.
pub const BEAM_GRID: usize = 64;
/// Elements of the uniform linear array behind each polarization block.
pub const ARRAY_ELEMENTS: usize = 32;
/// Rows per H/V block of the stacked channel matrix.
pub const BLOCK_ROWS: usize = 32;
/// Rows of the stacked channel matrix: H1, V1, H2, V2 blocks.
pub const N_ROWS: usize = 4 * BLOCK_ROWS;
/// Subcarrier groups per snapshot, and delay bins after the IDFT.
pub const N_SUBCARRIERS: usize = 46;
pub const BANDWIDTH_HZ: f64 = 100e6;
pub const SUBCARRIER_SPACING_HZ: f64 = BANDWIDTH_HZ / N_SUBCARRIERS as f64;
/// Unambiguous delay window of the 46-point IDFT (about 460 ns).
pub const DELAY_WINDOW_S: f64 = 1.0 / SUBCARRIER_SPACING_HZ;
/// Width of one delay bin (about 10 ns).
pub const DELAY_BIN_S: f64 = DELAY_WINDOW_S / N_SUBCARRIERS as f64;
