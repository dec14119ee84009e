//! Run configuration: a TOML document with one table per concern.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::DualAgentConfig;
use crate::baselines::PolicyKind;
use crate::behavior::predictor::FeatureConfig;
use crate::behavior::AcceptanceModel;
use crate::error::{Error, Result};
use crate::world::{DemandConfig, FleetConfig, GridMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapConfig {
    pub width: usize,
    pub height: usize,
    pub cell_edge_km: f64,
    /// Steps per episode.
    pub steps: usize,
    /// Pickup radius in grids (Manhattan).
    pub radius: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            width: 9,
            height: 9,
            cell_edge_km: 1.2,
            steps: 144,
            radius: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Recurrent,
    Frequency,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandForecast {
    Historical,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BehaviorConfig {
    pub acceptance: AcceptanceModel,
    /// Model file from `fit-acceptance`; overrides `acceptance` when set.
    pub acceptance_model_file: Option<PathBuf>,
    pub income_window: usize,
    pub income_scale: [f64; 2],
    pub predictor: PredictorKind,
    pub frequency_alpha: f64,
    pub features: FeatureConfig,
    /// No-reposition episodes used to collect predictor training data.
    pub warmup_episodes: usize,
    pub predictor_epochs: usize,
    pub predictor_lr: f64,
    pub predictor_batch: usize,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        Self {
            acceptance: AcceptanceModel::default(),
            acceptance_model_file: None,
            income_window: 6,
            income_scale: [6.0, 16.0],
            predictor: PredictorKind::Recurrent,
            frequency_alpha: 1.0,
            features: FeatureConfig::default(),
            warmup_episodes: 4,
            predictor_epochs: 3,
            predictor_lr: 3e-3,
            predictor_batch: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub policy: PolicyKind,
    /// Training episodes.
    pub episodes: usize,
    pub seed: u64,
    pub eval_seeds: Vec<u64>,
    pub checkpoint_every: usize,
    pub demand_forecast: DemandForecast,
    /// Replay these requests every episode instead of generating demand.
    pub requests_file: Option<PathBuf>,
    /// Seed driver visit histories from a trajectory log.
    pub trajectories_file: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            policy: PolicyKind::DualAgent,
            episodes: 200,
            seed: 7,
            eval_seeds: vec![1, 2, 3, 4, 5],
            checkpoint_every: 25,
            demand_forecast: DemandForecast::Oracle,
            requests_file: None,
            trajectories_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub map: MapConfig,
    pub fleet: FleetConfig,
    pub demand: DemandConfig,
    pub behavior: BehaviorConfig,
    pub agent: DualAgentConfig,
    pub run: RunSection,
}

/// Pull the offending key out of a TOML error message.
fn toml_error(e: toml::de::Error) -> Error {
    let msg = e.message().to_string();
    let key = msg
        .strip_prefix("unknown field `")
        .and_then(|r| r.split('`').next())
        .unwrap_or("<document>")
        .to_string();
    Error::Config { key, reason: msg }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(toml_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse and validate; relative file paths resolve against the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(toml_error)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.behavior.acceptance_model_file,
            &mut cfg.run.requests_file,
            &mut cfg.run.trajectories_file,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        cfg.check_files()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<document>", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.map;
        if m.width < 3 {
            return Err(Error::config("map.width", "must be >= 3"));
        }
        if m.height < 3 {
            return Err(Error::config("map.height", "must be >= 3"));
        }
        if !(m.cell_edge_km > 0.0) {
            return Err(Error::config("map.cell_edge_km", "must be > 0"));
        }
        if m.steps == 0 {
            return Err(Error::config("map.steps", "must be >= 1"));
        }
        self.fleet.validate()?;
        self.demand.validate()?;
        let map = self.grid_map()?;
        for (i, h) in self.demand.hotspots.iter().enumerate() {
            if map.id(h.x, h.y).is_none() {
                return Err(Error::config(format!("demand.hotspots[{i}]"), "hotspot is off the map"));
            }
        }
        let b = &self.behavior;
        if !b.acceptance.is_finite() {
            return Err(Error::config("behavior.acceptance", "coefficients must be finite"));
        }
        if b.income_window == 0 {
            return Err(Error::config("behavior.income_window", "must be >= 1"));
        }
        if !(b.income_scale[1] > b.income_scale[0]) {
            return Err(Error::config("behavior.income_scale", "needs lo < hi"));
        }
        if !(b.frequency_alpha > 0.0) {
            return Err(Error::config("behavior.frequency_alpha", "must be > 0"));
        }
        if !(b.predictor_lr > 0.0) {
            return Err(Error::config("behavior.predictor_lr", "must be > 0"));
        }
        if b.predictor_batch == 0 {
            return Err(Error::config("behavior.predictor_batch", "must be >= 1"));
        }
        b.features.validate(&map)?;
        self.agent.validate()?;
        let toml_max = i64::MAX as u64;
        if self.run.seed > toml_max {
            return Err(Error::config("run.seed", format!("must be <= {toml_max}")));
        }
        if self.run.eval_seeds.iter().any(|&s| s > toml_max) {
            return Err(Error::config("run.eval_seeds", format!("seeds must be <= {toml_max}")));
        }
        if self.run.eval_seeds.is_empty() {
            return Err(Error::config("run.eval_seeds", "needs at least one seed"));
        }
        if self.run.checkpoint_every == 0 {
            return Err(Error::config("run.checkpoint_every", "must be >= 1"));
        }
        Ok(())
    }

    pub fn check_files(&self) -> Result<()> {
        for p in [
            &self.behavior.acceptance_model_file,
            &self.run.requests_file,
            &self.run.trajectories_file,
        ]
        .into_iter()
        .flatten()
        {
            if !p.exists() {
                return Err(Error::MissingFile(p.clone()));
            }
        }
        Ok(())
    }

    pub fn grid_map(&self) -> Result<GridMap> {
        GridMap::with_cell_edge(self.map.width, self.map.height, self.map.cell_edge_km)
    }

    /// Hash of everything that shapes a trained model; the `run` table is excluded.
    pub fn hash(&self) -> u64 {
        let model = (&self.map, &self.fleet, &self.demand, &self.behavior, &self.agent);
        let text = serde_json::to_string(&model).expect("config serializes");
        let d = Sha256::digest(text.as_bytes());
        u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
    }
}
