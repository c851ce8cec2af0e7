use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::ScenarioConfig;
use crate::error::{Error, Result};
use crate::estimator::{FineSearchConfig, GridSpec};
use crate::positioning::SelectionPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoundingConfig {
    /// Measurement slots per link.
    pub training_length: usize,
    /// Include direct and scattered paths leaking into every session.
    /// Off gives the isolated single-path model.
    pub leakage: bool,
}

impl Default for SoundingConfig {
    fn default() -> Self {
        Self {
            training_length: 16,
            leakage: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Coarse grid; derived from the array sizes when absent.
    pub grid: Option<GridSpec>,
    pub fine: FineSearchConfig,
}

impl EstimatorConfig {
    pub fn grid_for(&self, n_tx: usize, n_rx: usize) -> GridSpec {
        self.grid.unwrap_or_else(|| GridSpec::for_arrays(n_tx, n_rx))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub trials: usize,
    pub seed: u64,
    /// Worker threads; 0 lets the pool decide.
    pub workers: usize,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            trials: 500,
            seed: 1,
            workers: 0,
            output: PathBuf::from("results"),
        }
    }
}

fn power_sweep() -> Vec<f64> {
    (0..=10).map(|i| 3.0 * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig5Config {
    pub tx_power_dbm: Vec<f64>,
    pub training_lengths: Vec<usize>,
    pub trials: Option<usize>,
}

impl Default for Fig5Config {
    fn default() -> Self {
        Self {
            tx_power_dbm: power_sweep(),
            training_lengths: vec![8, 16],
            trials: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig6Config {
    pub users: Vec<usize>,
    pub draws: usize,
}

impl Default for Fig6Config {
    fn default() -> Self {
        Self {
            users: vec![20, 50, 100],
            draws: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig7Config {
    pub tx_power_dbm: Vec<f64>,
    pub training_lengths: Vec<usize>,
    pub trials: Option<usize>,
}

impl Default for Fig7Config {
    fn default() -> Self {
        Self {
            tx_power_dbm: vec![-20.0, 0.0],
            training_lengths: vec![8, 16, 24, 32, 48, 64, 96, 128, 192, 256],
            trials: Some(2000),
        }
    }
}

/// Full-pipeline figures (position, blockage, refinement).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineFigConfig {
    pub tx_power_dbm: Vec<f64>,
    pub training_lengths: Vec<usize>,
    pub trials: Option<usize>,
}

impl Default for PipelineFigConfig {
    fn default() -> Self {
        Self {
            tx_power_dbm: power_sweep(),
            training_lengths: vec![16],
            trials: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContourConfig {
    pub training_lengths: Vec<usize>,
    pub grid: usize,
    /// Codebook draws for the peak-gap table.
    pub codebooks: usize,
}

impl Default for ContourConfig {
    fn default() -> Self {
        Self {
            training_lengths: vec![4, 8, 12, 16],
            grid: 64,
            codebooks: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub sounding: SoundingConfig,
    pub estimator: EstimatorConfig,
    pub positioning: SelectionPolicy,
    pub run: RunConfig,
    pub fig5: Fig5Config,
    pub fig6: Fig6Config,
    pub fig7: Fig7Config,
    pub fig8: PipelineFigConfig,
    pub fig9: PipelineFigConfig,
    pub fig10: PipelineFigConfig,
    pub contour: ContourConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            sounding: SoundingConfig::default(),
            estimator: EstimatorConfig::default(),
            positioning: SelectionPolicy::default(),
            run: RunConfig::default(),
            fig5: Fig5Config::default(),
            fig6: Fig6Config::default(),
            fig7: Fig7Config::default(),
            fig8: PipelineFigConfig::default(),
            fig9: PipelineFigConfig::default(),
            fig10: PipelineFigConfig {
                training_lengths: vec![8, 16],
                ..Default::default()
            },
            contour: ContourConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.positioning.validate()?;
        self.estimator.fine.validate()?;
        if let Some(g) = &self.estimator.grid {
            g.validate()?;
        }
        if self.sounding.training_length == 0 {
            return Err(Error::Config("training_length must be at least 1".into()));
        }
        if self.run.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        let lengths = self
            .fig5
            .training_lengths
            .iter()
            .chain(&self.fig7.training_lengths)
            .chain(&self.fig8.training_lengths)
            .chain(&self.fig9.training_lengths)
            .chain(&self.fig10.training_lengths)
            .chain(&self.contour.training_lengths);
        if lengths.into_iter().any(|&n| n == 0) {
            return Err(Error::Config("training lengths must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON rendering, ignoring the worker
    /// count and output path.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.run.workers = 0;
        c.run.output = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = ExperimentConfig::from_toml_str("[run]\ntrials = 7\n[scenario]\nusers = 20\n").unwrap();
        assert_eq!(cfg.run.trials, 7);
        assert_eq!(cfg.scenario.users, 20);
        assert_eq!(cfg.scenario.noise_dbm, -84.0);
        assert_eq!(cfg.scenario.irs_positions.len(), 12);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(ExperimentConfig::from_toml_str("[run]\ntrails = 7\n").is_err());
        assert!(ExperimentConfig::from_toml_str("bogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[run]\ntrials = 0\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[scenario]\nbs_antennas = 0\n").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.run.seed = 2;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let mut c = a.clone();
        c.run.workers = 8;
        c.run.output = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), c.hash());
    }
}
