use std::path::Path;

use serde::{Deserialize, Serialize};

use beamloc_tensor::Tensor;

use super::blob::{find, read_blob, write_blob, BlobEntry};
use super::{ensure_dir, read_manifest, write_manifest, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::model::{param_layout, AttentionModel, ModelConfig, Weights};
use crate::preprocess::Scalers;
use crate::router::{Router, RouterConfig, RouterWeights, Specialist, N_CLASSES};
use crate::scenario::ScenarioId;
use crate::train::{Curves, RouterRun, TrainHyper, TrainRun};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    Model,
    Router,
}

impl CheckpointKind {
    fn as_str(self) -> &'static str {
        match self {
            CheckpointKind::Model => "model",
            CheckpointKind::Router => "router",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMeta {
    pub hyper: TrainHyper,
    pub seed: u64,
    pub curves: Curves,
    pub dataset_scenarios: Vec<ScenarioId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format_version: String,
    pub kind: CheckpointKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_config: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub router_config: Option<RouterConfig>,
    pub scalers: Scalers,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingMeta>,
    pub param_count: usize,
    pub blobs: Vec<BlobEntry>,
}

/// A trained regressor with the scalers it was fitted under.
#[derive(Clone, Debug)]
pub struct ModelCheckpoint {
    pub model: AttentionModel<f32>,
    pub scalers: Scalers,
    pub training: Option<TrainingMeta>,
}

impl ModelCheckpoint {
    pub fn from_run(run: &TrainRun, dataset_scenarios: Vec<ScenarioId>) -> Self {
        ModelCheckpoint {
            model: run.model.clone(),
            scalers: run.scalers.clone(),
            training: Some(TrainingMeta {
                hyper: run.hyper.clone(),
                seed: run.seed,
                curves: run.curves.clone(),
                dataset_scenarios,
            }),
        }
    }

    pub fn specialist(&self) -> Specialist {
        Specialist {
            model: self.model.clone(),
            scalers: self.scalers.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RouterCheckpoint {
    pub router: Router,
    pub training: Option<TrainingMeta>,
}

impl RouterCheckpoint {
    pub fn from_run(run: &RouterRun, dataset_scenarios: Vec<ScenarioId>) -> Self {
        RouterCheckpoint {
            router: run.router.clone(),
            training: Some(TrainingMeta {
                hyper: run.hyper.clone(),
                seed: run.seed,
                curves: run.curves.clone(),
                dataset_scenarios,
            }),
        }
    }
}

fn check_scalers(s: &Scalers) -> Result<()> {
    if !s.is_fitted() {
        return Err(Error::State("checkpoint scalers are not fitted".into()));
    }
    Ok(())
}

fn check_count(m: &CheckpointManifest) -> Result<()> {
    let total: usize = m.blobs.iter().map(BlobEntry::numel).sum();
    if total != m.param_count {
        return Err(Error::Data(format!(
            "manifest param_count {} disagrees with {total} stored values",
            m.param_count
        )));
    }
    Ok(())
}

pub fn save_model(ckpt: &ModelCheckpoint, dir: &Path) -> Result<CheckpointManifest> {
    check_scalers(&ckpt.scalers)?;
    ensure_dir(dir)?;
    let mut blobs = Vec::with_capacity(ckpt.model.weights.len());
    for (name, t) in ckpt.model.weights.iter() {
        blobs.push(write_blob(dir, name, t.shape(), t.data())?);
    }
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION.into(),
        kind: CheckpointKind::Model,
        model_config: Some(ckpt.model.config.clone()),
        router_config: None,
        scalers: ckpt.scalers.clone(),
        training: ckpt.training.clone(),
        param_count: ckpt.model.param_count(),
        blobs,
    };
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

pub fn load_model(dir: &Path) -> Result<ModelCheckpoint> {
    let m: CheckpointManifest = read_manifest(dir, CheckpointKind::Model.as_str())?;
    check_count(&m)?;
    let config = m
        .model_config
        .ok_or_else(|| Error::Data("model checkpoint without model_config".into()))?;
    config.validate()?;
    check_scalers(&m.scalers)?;
    let layout = param_layout(&config);
    if layout.len() != m.blobs.len() {
        return Err(Error::Data(format!(
            "checkpoint stores {} tensors, the architecture has {}",
            m.blobs.len(),
            layout.len()
        )));
    }
    let mut weights = Weights::default();
    for (name, shape) in layout {
        let entry = find(&m.blobs, &name)?;
        if entry.shape != shape {
            return Err(Error::Data(format!("{name} has shape {:?}, expected {shape:?}", entry.shape)));
        }
        weights.push(name, Tensor::new(shape, read_blob(dir, entry)?)?)?;
    }
    Ok(ModelCheckpoint {
        model: AttentionModel::from_weights(config, weights)?,
        scalers: m.scalers,
        training: m.training,
    })
}

pub fn save_router(ckpt: &RouterCheckpoint, dir: &Path) -> Result<CheckpointManifest> {
    let r = &ckpt.router;
    r.config.validate()?;
    check_scalers(&r.scalers)?;
    ensure_dir(dir)?;
    let blobs = vec![
        write_blob(dir, "w", r.weights.w.shape(), r.weights.w.data())?,
        write_blob(dir, "b", r.weights.b.shape(), r.weights.b.data())?,
    ];
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION.into(),
        kind: CheckpointKind::Router,
        model_config: None,
        router_config: Some(r.config.clone()),
        scalers: r.scalers.clone(),
        training: ckpt.training.clone(),
        param_count: r.param_count(),
        blobs,
    };
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

pub fn load_router(dir: &Path) -> Result<RouterCheckpoint> {
    let m: CheckpointManifest = read_manifest(dir, CheckpointKind::Router.as_str())?;
    check_count(&m)?;
    let config = m
        .router_config
        .ok_or_else(|| Error::Data("router checkpoint without router_config".into()))?;
    config.validate()?;
    check_scalers(&m.scalers)?;
    let dim = config.input_dim();
    let read = |name: &str, shape: Vec<usize>| -> Result<Tensor<f32>> {
        let entry = find(&m.blobs, name)?;
        if entry.shape != shape {
            return Err(Error::Data(format!("router {name} has shape {:?}, expected {shape:?}", entry.shape)));
        }
        Ok(Tensor::new(shape, read_blob(dir, entry)?)?)
    };
    let weights = RouterWeights {
        w: read("w", vec![dim, N_CLASSES])?,
        b: read("b", vec![N_CLASSES])?,
    };
    Ok(RouterCheckpoint {
        router: Router {
            config,
            weights,
            scalers: m.scalers,
        },
        training: m.training,
    })
}
