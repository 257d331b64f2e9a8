//! CTF to CIR conversion and lap-split datasets.

mod cir;
mod dataset;
mod scalers;

pub use cir::{ctf_to_cir, early_energy_fraction, hann_window, CirTransform};
pub use dataset::{build_dataset, build_mixed_dataset, samples_from_snapshots, simulate_samples, CirSample, Dataset, Split};
pub use scalers::{apply_scalers, Direction, Scalers};

/// Features per sample: `N_ROWS x N_SUBCARRIERS`.
pub const N_FEATURES: usize = crate::sim::N_ROWS * crate::sim::N_SUBCARRIERS;
