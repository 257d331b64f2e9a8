use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Propagation scenario. The discriminant order is the router's class order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioId {
    /// Line-of-sight dominant.
    S1,
    /// Non-line-of-sight, rich scattering.
    S2,
    /// Intermittent line of sight.
    S3,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 3] = [ScenarioId::S1, ScenarioId::S2, ScenarioId::S3];

    pub fn class_index(self) -> usize {
        self as usize
    }

    pub fn from_class_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioId::S1 => "s1",
            ScenarioId::S2 => "s2",
            ScenarioId::S3 => "s3",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "s1" => Ok(ScenarioId::S1),
            "s2" => Ok(ScenarioId::S2),
            "s3" => Ok(ScenarioId::S3),
            other => Err(Error::Config(format!(
                "unknown scenario `{other}` (expected s1, s2 or s3)"
            ))),
        }
    }
}
