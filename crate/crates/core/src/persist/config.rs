use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::router::RouterVariant;
use crate::scenario::ScenarioId;
use crate::sim::{LosMask, ScenarioParams};

/// Architecture grid point written as `el=K,ln=on|off,mp=on|off`.
/// Omitted keys fall back to `el=1`, `ln=off`, `mp=on`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ArchSpec {
    pub encoder_layers: usize,
    pub layer_norm: bool,
    pub max_pool: bool,
}

impl ArchSpec {
    pub fn model_config(&self) -> Result<ModelConfig> {
        let c = ModelConfig::grid(self.encoder_layers, self.layer_norm, self.max_pool);
        c.validate()?;
        Ok(c)
    }
}

fn on_off(key: &str, v: &str) -> Result<bool> {
    match v {
        "on" | "true" | "1" | "+" => Ok(true),
        "off" | "false" | "0" | "-" => Ok(false),
        _ => Err(Error::Config(format!("{key} must be on or off, got `{v}`"))),
    }
}

impl Default for ArchSpec {
    fn default() -> Self {
        ArchSpec {
            encoder_layers: 1,
            layer_norm: false,
            max_pool: true,
        }
    }
}

impl FromStr for ArchSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut spec = ArchSpec::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("arch item `{part}` is not key=value")))?;
            match k.trim() {
                "el" => {
                    spec.encoder_layers = v
                        .trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("el must be an integer, got `{v}`")))?
                }
                "ln" => spec.layer_norm = on_off("ln", v.trim())?,
                "mp" => spec.max_pool = on_off("mp", v.trim())?,
                other => return Err(Error::Config(format!("unknown arch key `{other}` (expected el, ln, mp)"))),
            }
        }
        if !(1..=5).contains(&spec.encoder_layers) {
            return Err(Error::Config(format!("el={} outside 1..=5", spec.encoder_layers)));
        }
        Ok(spec)
    }
}

impl fmt::Display for ArchSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let oo = |b: bool| if b { "on" } else { "off" };
        write!(f, "el={},ln={},mp={}", self.encoder_layers, oo(self.layer_norm), oo(self.max_pool))
    }
}

impl TryFrom<String> for ArchSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ArchSpec> for String {
    fn from(a: ArchSpec) -> String {
        a.to_string()
    }
}

/// `visible`, `blocked`, or blocked intervals `a-b,c-d` in perimeter fractions.
pub fn parse_los_mask(s: &str) -> Result<LosMask> {
    match s.trim() {
        "visible" => Ok(LosMask::Visible),
        "blocked" => Ok(LosMask::Blocked),
        list => list
            .split(',')
            .map(|iv| {
                let (a, b) = iv
                    .split_once('-')
                    .ok_or_else(|| Error::Config(format!("LoS interval `{iv}` is not start-end")))?;
                let p = |x: &str| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("LoS interval bound `{x}` is not a number")))
                };
                Ok([p(a)?, p(b)?])
            })
            .collect::<Result<Vec<_>>>()
            .map(LosMask::BlockedIntervals),
    }
}

/// `x,y;x,y;...` in meters.
pub fn parse_waypoints(s: &str) -> Result<Vec<[f64; 2]>> {
    s.split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let (x, y) = p
                .split_once(',')
                .ok_or_else(|| Error::Config(format!("waypoint `{p}` is not x,y")))?;
            let f = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("waypoint coordinate `{v}` is not a number")))
            };
            Ok([f(x)?, f(y)?])
        })
        .collect()
}

/// Per-field replacements applied on top of a scenario preset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct ScenarioOverrides {
    /// LoS-to-scatter power ratio in dB
    #[arg(long, allow_hyphen_values = true)]
    pub k_factor_db: Option<f64>,
    /// Number of fixed point scatterers
    #[arg(long)]
    pub n_scatterers: Option<usize>,
    /// `visible`, `blocked`, or blocked intervals such as `0.15-0.35,0.6-0.8`
    #[arg(long)]
    pub los_mask: Option<String>,
    /// Maximum scatter excess delay in ns
    #[arg(long)]
    pub delay_spread_ns: Option<f64>,
    /// Noise power relative to mean path power in dB (`-inf` disables noise)
    #[arg(long, allow_hyphen_values = true)]
    pub noise_floor_db: Option<f64>,
    /// Closed loop as `x,y;x,y;...` in meters
    #[arg(long, allow_hyphen_values = true)]
    pub waypoints: Option<String>,
    /// Base station height in m
    #[arg(long)]
    pub bs_height_m: Option<f64>,
    /// UE height in m
    #[arg(long)]
    pub ue_height_m: Option<f64>,
    /// UE speed in km/h
    #[arg(long)]
    pub speed_kmh: Option<f64>,
    /// Time between snapshots in s
    #[arg(long)]
    pub snapshot_interval_s: Option<f64>,
}

impl ScenarioOverrides {
    /// Fields set in `self` win over those in `base`.
    pub fn or(self, base: ScenarioOverrides) -> ScenarioOverrides {
        ScenarioOverrides {
            k_factor_db: self.k_factor_db.or(base.k_factor_db),
            n_scatterers: self.n_scatterers.or(base.n_scatterers),
            los_mask: self.los_mask.or(base.los_mask),
            delay_spread_ns: self.delay_spread_ns.or(base.delay_spread_ns),
            noise_floor_db: self.noise_floor_db.or(base.noise_floor_db),
            waypoints: self.waypoints.or(base.waypoints),
            bs_height_m: self.bs_height_m.or(base.bs_height_m),
            ue_height_m: self.ue_height_m.or(base.ue_height_m),
            speed_kmh: self.speed_kmh.or(base.speed_kmh),
            snapshot_interval_s: self.snapshot_interval_s.or(base.snapshot_interval_s),
        }
    }

    /// Preset of `scenario` with the overrides applied, validated.
    pub fn resolve(&self, scenario: ScenarioId) -> Result<ScenarioParams> {
        let mut p = ScenarioParams::preset(scenario);
        if let Some(v) = self.k_factor_db {
            p.k_factor_db = v;
        }
        if let Some(v) = self.n_scatterers {
            p.n_scatterers = v;
        }
        if let Some(v) = &self.los_mask {
            p.los_mask = parse_los_mask(v)?;
        }
        if let Some(v) = self.delay_spread_ns {
            p.delay_spread_ns = v;
        }
        if let Some(v) = self.noise_floor_db {
            p.noise_floor_db = v;
        }
        if let Some(v) = &self.waypoints {
            p.waypoints = parse_waypoints(v)?;
        }
        if let Some(v) = self.bs_height_m {
            p.bs_height_m = v;
        }
        if let Some(v) = self.ue_height_m {
            p.ue_height_m = v;
        }
        if let Some(v) = self.speed_kmh {
            p.speed_kmh = v;
        }
        if let Some(v) = self.snapshot_interval_s {
            p.snapshot_interval_s = v;
        }
        p.validate()?;
        Ok(p)
    }
}

/// Run settings read from a `key = value` file. Every key is optional;
/// command-line flags take precedence. Scenario overrides live under a
/// `[channel]` table.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Option<ScenarioId>,
    pub laps: Option<u32>,
    pub seed: Option<u64>,
    pub val_fraction: Option<f64>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub arch: Option<ArchSpec>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub dropout_rate: Option<f64>,
    pub variant: Option<RouterVariant>,
    pub bin_index: Option<usize>,
    #[serde(default)]
    pub channel: ScenarioOverrides,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}
