//! Run configuration files.
//!
//! One TOML document holds the simulation, the surface, the training
//! settings (including loss weights and the curriculum), the sampling sizes,
//! the output paths and the seeds. Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use kwet_core::lbm::SimConfig;
use kwet_pinn::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::pipeline::SamplingConfig;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Rough,
    Pillars,
    SquareRough,
    /// 100 x 100 rough domain with the small training net.
    Desk,
}

impl Preset {
    pub fn sim(self) -> SimConfig<f64> {
        match self {
            Preset::Rough => SimConfig::rough(),
            Preset::Pillars => SimConfig::pillars(),
            Preset::SquareRough => SimConfig::square_rough(),
            Preset::Desk => SimConfig::desk_rough(100, 100, 20.0),
        }
    }

    pub fn train(self) -> TrainConfig {
        match self {
            Preset::Desk => TrainConfig::desk(),
            _ => TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub snapshots: PathBuf,
    pub dataset: PathBuf,
    pub training: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { snapshots: "out/snapshots".into(), dataset: "out/dataset.kwdata".into(), training: "out/train".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub sim: SimConfig<f64>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub paths: Paths,
}

impl RunConfig {
    pub fn preset(p: Preset) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            sim: p.sim(),
            train: p.train(),
            sampling: SamplingConfig::default(),
            paths: Paths::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        #[derive(Deserialize)]
        struct Header {
            schema_version: Option<u32>,
        }
        let header: Header = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        match header.schema_version {
            Some(SCHEMA_VERSION) => {}
            Some(v) => return Err(CliError::Config(format!("unsupported schema_version {v}"))),
            None => return Err(CliError::Config("missing schema_version".into())),
        }
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.sim.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.sim.surface.build(self.sim.nx, self.sim.ny).map_err(|e| CliError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    /// Canonical text of the resolved configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    /// SHA-256 of the canonical text.
    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_toml().as_bytes()).into()
    }
}

pub fn hex(hash: &[u8; 32]) -> String {
    hash.iter().map(|b| format!("{b:02x}")).collect()
}
