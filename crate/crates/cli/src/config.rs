//! Experiment configuration file (TOML) and its mapping onto the core
//! configs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uc_core::actiongen::ActionGenConfig;
use uc_core::learner::TrainerConfig;
use uc_core::{UcError};

/// A full experiment description, as loaded from `--config`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub paths: Paths,
    pub split: Split,
    #[serde(default)]
    pub trainer: TrainerSection,
    #[serde(default)]
    pub actions: ActionsSection,
    #[serde(default)]
    pub baseline: BaselineSection,
    #[serde(default)]
    pub env: EnvSection,
    #[serde(default)]
    pub scenarios: Vec<Scenario>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Paths {
    pub grid: PathBuf,
    pub loads: PathBuf,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Split {
    pub train_days: usize,
    pub validation_days: usize,
    pub test_days: usize,
}

impl Split {
    pub fn total_days(&self) -> usize {
        self.train_days + self.validation_days + self.test_days
    }

    pub fn validation_start(&self) -> usize {
        self.train_days
    }

    pub fn test_start(&self) -> usize {
        self.train_days + self.validation_days
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerSection {
    pub ensemble_size: usize,
    pub n_step: usize,
    pub discount: f64,
    pub learning_rate: f64,
    pub target_sync: u64,
    pub epsilon_min: f64,
    pub epsilon_max: f64,
    pub episodes: usize,
    pub forecast_window: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainerSection {
    fn default() -> Self {
        let d = TrainerConfig::default();
        TrainerSection {
            ensemble_size: d.ensemble_size,
            n_step: d.n_step,
            discount: d.discount,
            learning_rate: d.learning_rate,
            target_sync: d.target_sync,
            epsilon_min: d.epsilon_min,
            epsilon_max: d.epsilon_max,
            episodes: d.episodes,
            forecast_window: d.forecast_window,
            hidden: d.hidden,
            seed: d.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ActionsSection {
    pub horizon: usize,
    pub search_down: usize,
    pub search_up: usize,
    pub top_k: usize,
    pub omega: f64,
    pub subproblem_nodes: u64,
}

impl Default for ActionsSection {
    fn default() -> Self {
        let d = ActionGenConfig::default();
        ActionsSection {
            horizon: d.horizon,
            search_down: d.search_down,
            search_up: d.search_up,
            top_k: d.top_k,
            omega: d.omega,
            subproblem_nodes: d.subproblem_nodes,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineSection {
    /// Wall-clock limit per solved window, seconds.
    pub time_limit_s: f64,
    /// Relative optimality gap target.
    pub gap: f64,
    /// Optional node cap.
    pub node_limit: Option<u64>,
    /// Lookahead of each baseline solve, in days.
    pub horizon_days: usize,
}

impl Default for BaselineSection {
    fn default() -> Self {
        BaselineSection {
            time_limit_s: 600.0,
            gap: 0.001,
            node_limit: None,
            horizon_days: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvSection {
    /// Termination penalty override; the default scales with the fleet.
    pub zeta: Option<f64>,
    /// Demand multiplier applied at ingestion.
    pub load_scale: f64,
}

impl Default for EnvSection {
    fn default() -> Self {
        EnvSection {
            zeta: None,
            load_scale: 1.0,
        }
    }
}

/// An outage scenario: one unit (by its file id) or one line (1-based).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    Unit { id: usize },
    Line { index: usize },
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, UcError> {
        let text = std::fs::read_to_string(path).map_err(|e| UcError::Config(format!(
            "cannot read config {}: {e}",
            path.display()
        )))?;
        let mut config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| UcError::Config(format!(
                "bad config {}: {}",
                path.display(),
                e.message()
            )))?;
        // Paths are relative to the config file's directory.
        if let Some(dir) = path.parent() {
            for p in [&mut config.paths.grid, &mut config.paths.loads, &mut config.paths.out_dir] {
                if p.is_relative() {
                    *p = dir.join(&p);
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), UcError> {
        if self.split.train_days == 0
            || self.split.validation_days == 0
            || self.split.test_days == 0
        {
            return Err(UcError::Config(
                "split needs at least one day in each of train/validation/test".into(),
            ));
        }
        if !self.paths.grid.exists() {
            return Err(UcError::Config(format!(
                "grid file {} does not exist",
                self.paths.grid.display()
            )));
        }
        if !self.paths.loads.exists() {
            return Err(UcError::Config(format!(
                "loads file {} does not exist",
                self.paths.loads.display()
            )));
        }
        self.trainer_config().validate()?;
        Ok(())
    }

    pub fn trainer_config(&self) -> TrainerConfig {
        TrainerConfig {
            ensemble_size: self.trainer.ensemble_size,
            n_step: self.trainer.n_step,
            discount: self.trainer.discount,
            learning_rate: self.trainer.learning_rate,
            target_sync: self.trainer.target_sync,
            epsilon_min: self.trainer.epsilon_min,
            epsilon_max: self.trainer.epsilon_max,
            episodes: self.trainer.episodes,
            forecast_window: self.trainer.forecast_window,
            hidden: self.trainer.hidden.clone(),
            seed: self.trainer.seed,
        }
    }

    pub fn action_config(&self) -> ActionGenConfig {
        ActionGenConfig {
            horizon: self.actions.horizon,
            search_down: self.actions.search_down,
            search_up: self.actions.search_up,
            top_k: self.actions.top_k,
            omega: self.actions.omega,
            subproblem_nodes: self.actions.subproblem_nodes,
        }
    }

    /// Canonical fingerprint of everything that shapes training results.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::json!({
            "trainer": self.trainer_config(),
            "actions": self.action_config(),
            "split": {
                "train": self.split.train_days,
                "validation": self.split.validation_days,
                "test": self.split.test_days,
            },
            "env": { "zeta": self.env.zeta, "load_scale": self.env.load_scale },
        });
        let mut hasher = Sha256::new();
        hasher.update(canonical.to_string().as_bytes());
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
