//! Experiment configuration files.

use std::path::{Path, PathBuf};

use otfs_ce::channel::ScenarioConfig;
use otfs_ce::neural::TrainConfig;
use otfs_ce::pipic::{EstimatorConfig, RefineCoarse};
use otfs_ce::OtfsConfig;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Pipic,
    DlPipic,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Pipic => "pipic",
            Method::DlPipic => "dl-pipic",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pipic" => Ok(Method::Pipic),
            "dl-pipic" => Ok(Method::DlPipic),
            other => Err(HarnessError::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// Latency benchmark settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyConfig {
    pub n_pairs: usize,
    /// Pairs timed with the brute-force strategy, a prefix of the shared pair list.
    /// `None` times all of them.
    pub full_pairs: Option<usize>,
    pub warmup: usize,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        Self {
            n_pairs: 200,
            full_pairs: None,
            warmup: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub otfs: OtfsConfig,
    pub scenario: ScenarioConfig,
    pub estimator: EstimatorConfig,
    pub methods: Vec<Method>,
    pub model_path: Option<PathBuf>,
    pub psnr_grid_db: Vec<f64>,
    pub output_dir: PathBuf,
    /// Seed for training and latency pairs. Channel and noise draws use `scenario.seed`.
    pub seed: u64,
    pub train: TrainConfig,
    pub latency: LatencyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            otfs: OtfsConfig::reference(),
            scenario: ScenarioConfig::default(),
            estimator: EstimatorConfig::default(),
            methods: vec![Method::Pipic],
            model_path: None,
            psnr_grid_db: (0..9).map(|i| 20.0 + 2.0 * i as f64).collect(),
            output_dir: PathBuf::from("out"),
            seed: 0,
            train: TrainConfig::default(),
            latency: LatencyConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// CPU-sized preset: an 8 x 8 frame, the default scenario rescaled to keep
    /// its paths at the same bin positions, and the reduced training recipe.
    /// The 64-point frame makes full-grid refinement cheap, and it avoids the
    /// neighborhood search locking onto near-collinear pairs.
    pub fn desk() -> Self {
        let otfs = OtfsConfig::new(8, 8);
        Self {
            scenario: ScenarioConfig::scaled_for(&otfs),
            otfs,
            train: TrainConfig::desk(),
            estimator: EstimatorConfig { refine_coarse: RefineCoarse::FullGrid, ..Default::default() },
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn uses(&self, method: Method) -> bool {
        self.methods.contains(&method)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with(false)
    }

    /// As [`validate`](Self::validate); `model_supplied` means a predictor is
    /// handed over in memory, so `model_path` is optional.
    pub fn validate_with(&self, model_supplied: bool) -> Result<()> {
        self.otfs.validate()?;
        self.scenario.validate()?;
        self.estimator.validate()?;
        if self.psnr_grid_db.is_empty() {
            return Err(HarnessError::Config("psnr_grid_db is empty".into()));
        }
        if self.psnr_grid_db.iter().any(|p| !p.is_finite()) {
            return Err(HarnessError::Config("psnr_grid_db has a non-finite entry".into()));
        }
        if self.methods.is_empty() {
            return Err(HarnessError::Config("no methods selected".into()));
        }
        let mut sorted = self.methods.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.methods.len() {
            return Err(HarnessError::Config("methods listed more than once".into()));
        }
        match (self.uses(Method::DlPipic), &self.model_path) {
            (true, None) if !model_supplied => Err(HarnessError::Config("dl-pipic needs model_path".into())),
            (false, Some(_)) => Err(HarnessError::Config("model_path given but dl-pipic not selected".into())),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_preset() {
        let desk = ExperimentConfig::desk();
        desk.validate().unwrap();
        assert_eq!((desk.otfs.m, desk.otfs.n), (8, 8));
        assert_eq!(desk.train, TrainConfig::desk());
        assert_eq!(desk.scenario.fixed_delays.len(), 4);
        assert_eq!(desk.estimator.refine_coarse, RefineCoarse::FullGrid);
        assert_eq!(ExperimentConfig::from_toml_str(&desk.to_toml().unwrap()).unwrap(), desk);
    }

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.psnr_grid_db.first(), Some(&20.0));
        assert_eq!(cfg.psnr_grid_db.last(), Some(&36.0));
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "methods = [\"pipic\", \"dl-pipic\"]\nmodel_path = \"m.bin\"\npsnr_grid_db = [20.0, 30.0]\n[otfs]\nm = 8\nn = 8\n[scenario]\nnum_realizations = 5\n",
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.otfs.m, 8);
        assert_eq!(cfg.otfs.delta_f, 25e3);
        assert_eq!(cfg.scenario.num_realizations, 5);
        assert_eq!(cfg.estimator.p_max, 15);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.methods.push(Method::DlPipic);
        assert!(cfg.validate().is_err());
        cfg.model_path = Some("x".into());
        assert!(cfg.validate().is_ok());
        cfg.psnr_grid_db.clear();
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig { model_path: Some("x".into()), ..Default::default() };
        assert!(cfg.validate().is_err());
        assert!("dl-pipic".parse::<Method>().is_ok());
        assert!("ddipic".parse::<Method>().is_err());
    }
}
