use std::path::Path;

use serde::{Deserialize, Serialize};

use super::blob::{find, read_blob, write_blob, BlobEntry};
use super::{ensure_dir, read_manifest, write_manifest, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::preprocess::{CirSample, Dataset, Scalers, Split, N_FEATURES};
use crate::scenario::ScenarioId;
use crate::sim::{N_ROWS, N_SUBCARRIERS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: String,
    pub kind: String,
    pub scenarios: Vec<ScenarioId>,
    pub laps: u32,
    pub seed: u64,
    pub val_fraction: f64,
    pub n_samples: usize,
    pub scalers: Scalers,
    pub split: SplitIndices,
    pub blobs: Vec<BlobEntry>,
}

/// Writes `dir/manifest.json` and the sample arrays `cir [n, 128, 46]`,
/// `label [n, 2]`, `lap [n]`, `scenario [n]` (class index) and `t [n]`.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<DatasetManifest> {
    ensure_dir(dir)?;
    let n = ds.len();
    if ds.samples.iter().any(|s| s.standardized) {
        return Err(Error::Contract("datasets are stored in raw units".into()));
    }
    let mut cir = Vec::with_capacity(n * N_FEATURES);
    let mut label = Vec::with_capacity(2 * n);
    for s in &ds.samples {
        cir.extend_from_slice(&s.cir);
        label.extend_from_slice(&s.label);
    }
    let lap: Vec<f32> = ds.samples.iter().map(|s| s.lap_index as f32).collect();
    let scenario: Vec<f32> = ds.samples.iter().map(|s| s.scenario.class_index() as f32).collect();
    let t: Vec<f32> = ds.samples.iter().map(|s| s.t).collect();
    let blobs = vec![
        write_blob(dir, "cir", &[n, N_ROWS, N_SUBCARRIERS], &cir)?,
        write_blob(dir, "label", &[n, 2], &label)?,
        write_blob(dir, "lap", &[n], &lap)?,
        write_blob(dir, "scenario", &[n], &scenario)?,
        write_blob(dir, "t", &[n], &t)?,
    ];
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION.into(),
        kind: "dataset".into(),
        scenarios: ds.scenarios(),
        laps: ds.laps,
        seed: ds.seed,
        val_fraction: ds.val_fraction,
        n_samples: n,
        scalers: ds.scalers.clone(),
        split: SplitIndices {
            train: ds.indices(Split::Train),
            val: ds.indices(Split::Val),
            test: ds.indices(Split::Test),
        },
        blobs,
    };
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

fn exact_u32(v: f32, what: &str) -> Result<u32> {
    if v >= 0.0 && v.fract() == 0.0 && v < 16_777_216.0 {
        Ok(v as u32)
    } else {
        Err(Error::Data(format!("{what} value {v} is not a small non-negative integer")))
    }
}

/// Loads and verifies a dataset directory: digests, shapes, a complete
/// split partition, and the train-only scaler audit.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let m: DatasetManifest = read_manifest(dir, "dataset")?;
    let n = m.n_samples;
    let get = |name: &str, shape: &[usize]| -> Result<Vec<f32>> {
        let e = find(&m.blobs, name)?;
        if e.shape != shape {
            return Err(Error::Data(format!("blob {name} has shape {:?}, expected {shape:?}", e.shape)));
        }
        read_blob(dir, e)
    };
    let cir = get("cir", &[n, N_ROWS, N_SUBCARRIERS])?;
    let label = get("label", &[n, 2])?;
    let lap = get("lap", &[n])?;
    let scenario = get("scenario", &[n])?;
    let t = get("t", &[n])?;

    let mut split = vec![None; n];
    for (which, idx) in [(Split::Train, &m.split.train), (Split::Val, &m.split.val), (Split::Test, &m.split.test)] {
        for &i in idx {
            if i >= n || split[i].is_some() {
                return Err(Error::Data(format!("split index {i} is out of range or repeated")));
            }
            split[i] = Some(which);
        }
    }
    let split: Vec<Split> = split
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or_else(|| Error::Data(format!("sample {i} has no split"))))
        .collect::<Result<_>>()?;

    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let class = exact_u32(scenario[i], "scenario")? as usize;
        samples.push(CirSample {
            cir: cir[i * N_FEATURES..(i + 1) * N_FEATURES].to_vec(),
            label: [label[2 * i], label[2 * i + 1]],
            scenario: ScenarioId::from_class_index(class)
                .ok_or_else(|| Error::Data(format!("unknown scenario class {class}")))?,
            lap_index: exact_u32(lap[i], "lap")?,
            t: t[i],
            standardized: false,
        });
    }
    let ds = Dataset {
        samples,
        split,
        scalers: m.scalers,
        laps: m.laps,
        seed: m.seed,
        val_fraction: m.val_fraction,
    };
    ds.audit()?;
    Ok(ds)
}
