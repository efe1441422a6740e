//! Run configuration: a TOML file with one table per concern. Every key is
//! optional and falls back to the default shown by [`RunConfig::default`];
//! command-line flags override file values.
//!
//! ```toml
//! seed = 0
//!
//! [paths]
//! data_dir = "fleet"        # omit to generate a fleet from [fleet]
//! out_dir = "out"
//! model_dir = "models"
//!
//! [fleet]                   # synthetic fleet
//! n_centers = 15
//! n_services = 10
//! length = 533
//!
//! [pipeline]
//! smoothing_window = 7      # 0 disables smoothing
//! difference = true
//! standardize = true
//!
//! [causal]
//! lag_order = 1
//! edge_threshold = 0.1
//!
//! [model]
//! lookback = 12
//! horizon = 10
//! adjacency = "causal"      # causal | all_ones | none
//!
//! [coldstart]
//! strategy = "gmm_sd"       # gmm | gmm_sd | eros | virtual | virtual_mn
//! k = 5
//! gmm_components = 7
//! fill = "zero"             # zero | training_mean
//!
//! [experiment]
//! kind = "forecast"         # forecast | coldstart
//! methods = ["lstm", "lstm_gnn", "cdf"]   # default: every method of the kind
//! seeds = 1
//! ```

use std::path::{Path, PathBuf};

use cdf_core::causal::CausalConfig;
use cdf_core::coldstart::{ColdStartConfig, MissingFill};
use cdf_core::eval::{ColdStartMethod, ExperimentConfig, ForecastMethod, SweepTarget};
use cdf_core::model::{FitConfig, HyperGrid, ModelConfig};
use cdf_core::preprocess::PipelineConfig;
use cdf_core::synth::{FleetSpec, ScenarioKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Fleet directory; `None` means generate the fleet from `[fleet]`.
    pub data_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub model_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { data_dir: None, out_dir: PathBuf::from("out"), model_dir: PathBuf::from("models") }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    /// Trailing median window; 0 disables smoothing.
    pub smoothing_window: usize,
    pub difference: bool,
    pub standardize: bool,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let d = PipelineConfig::default();
        Self { smoothing_window: d.smoothing_window.unwrap_or(0), difference: d.difference, standardize: d.standardize }
    }
}

impl From<PipelineSection> for PipelineConfig {
    fn from(p: PipelineSection) -> Self {
        PipelineConfig {
            smoothing_window: (p.smoothing_window > 0).then_some(p.smoothing_window),
            difference: p.difference,
            standardize: p.standardize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Forecast,
    Coldstart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    /// Method names: `lstm`, `lstm_gnn`, `cdf` for forecasting;
    /// `cdf` and the strategy names for cold start. Defaults to all of the kind.
    pub methods: Option<Vec<String>>,
    /// Number of seeds, starting at the master seed.
    pub seeds: u64,
    pub train_fraction: f64,
    pub validation_fraction: f64,
    /// Tune each forecasting method over `grid` on the validation part.
    pub tune: bool,
    pub grid: Option<HyperGrid>,
    pub scenario: ScenarioKind,
    pub masked_services: usize,
    pub cut_fraction: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        Self {
            kind: ExperimentKind::Forecast,
            methods: None,
            seeds: 1,
            train_fraction: e.train_fraction,
            validation_fraction: e.validation_fraction,
            tune: false,
            grid: None,
            scenario: e.scenario,
            masked_services: e.masked_services,
            cut_fraction: e.cut_fraction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub target: SweepTarget,
    pub k_min: usize,
    pub k_max: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { target: SweepTarget::ErosK, k_min: 1, k_max: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub fleet: FleetSpec,
    pub pipeline: PipelineSection,
    pub causal: CausalConfig,
    pub model: ModelConfig,
    pub coldstart: ColdStartConfig,
    pub experiment: ExperimentSection,
    pub sweep: SweepSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            paths: Paths::default(),
            fleet: FleetSpec::default(),
            pipeline: PipelineSection::default(),
            causal: CausalConfig::default(),
            model: ModelConfig::default(),
            coldstart: ColdStartConfig { fill: MissingFill::Zero, ..ColdStartConfig::default() },
            experiment: ExperimentSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::parse(&text).map_err(|message| ConfigError::Parse { path: path.to_path_buf(), message })
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.fleet.validate().map_err(|e| invalid(&e))?;
        self.model.validate().map_err(|e| invalid(&e))?;
        if self.pipeline.smoothing_window == 1 {
            return Err(ConfigError::Invalid("smoothing window must be 0 (off) or at least 2".into()));
        }
        if self.coldstart.k == 0 || self.coldstart.gmm_components == 0 {
            return Err(ConfigError::Invalid("coldstart k and gmm_components must be at least 1".into()));
        }
        let e = &self.experiment;
        if e.seeds == 0 {
            return Err(ConfigError::Invalid("experiment seeds must be at least 1".into()));
        }
        if !(e.train_fraction > 0.0 && e.validation_fraction >= 0.0 && e.train_fraction + e.validation_fraction < 1.0) {
            return Err(ConfigError::Invalid("train and validation fractions must leave a test part".into()));
        }
        if self.paths.data_dir.is_none() && e.masked_services > self.fleet.n_services {
            return Err(ConfigError::Invalid("masked_services exceeds the fleet's service count".into()));
        }
        if !(e.cut_fraction > 0.0 && e.cut_fraction < 1.0) {
            return Err(ConfigError::Invalid("cut_fraction must lie in (0, 1)".into()));
        }
        match e.kind {
            ExperimentKind::Forecast => {
                self.forecast_methods()?;
            }
            ExperimentKind::Coldstart => {
                self.coldstart_methods()?;
            }
        }
        if self.sweep.k_min == 0 || self.sweep.k_min > self.sweep.k_max {
            return Err(ConfigError::Invalid("sweep needs 1 <= k_min <= k_max".into()));
        }
        if e.tune && e.grid.as_ref().is_some_and(|g| g.configs(&self.model).is_empty()) {
            return Err(ConfigError::Invalid("tuning grid is empty".into()));
        }
        Ok(())
    }

    pub fn forecast_methods(&self) -> Result<Vec<ForecastMethod>, ConfigError> {
        let Some(methods) = &self.experiment.methods else {
            return Ok(ForecastMethod::ALL.to_vec());
        };
        methods
            .iter()
            .map(|m| ForecastMethod::parse(m).ok_or_else(|| ConfigError::Invalid(format!("unknown forecasting method `{m}`"))))
            .collect()
    }

    pub fn coldstart_methods(&self) -> Result<Vec<ColdStartMethod>, ConfigError> {
        let Some(methods) = &self.experiment.methods else {
            return Ok(ColdStartMethod::all());
        };
        methods
            .iter()
            .map(|m| ColdStartMethod::parse(m).ok_or_else(|| ConfigError::Invalid(format!("unknown cold-start method `{m}`"))))
            .collect()
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig { model: ModelConfig { seed: self.seed, ..self.model }, pipeline: self.pipeline.into(), causal: self.causal }
    }

    /// Experiment settings for one seed.
    pub fn experiment_config(&self, seed: u64) -> ExperimentConfig {
        let e = &self.experiment;
        let grid = e.tune.then(|| e.grid.clone().unwrap_or_else(HyperGrid::desk));
        ExperimentConfig {
            fit: self.fit_config(),
            coldstart: self.coldstart,
            train_fraction: e.train_fraction,
            validation_fraction: e.validation_fraction,
            grid,
            scenario: e.scenario,
            masked_services: e.masked_services,
            cut_fraction: e.cut_fraction,
            seed,
        }
    }

    /// Seeds of a multi-seed run: `seed, seed + 1, ...`.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.experiment.seeds).map(|i| self.seed.wrapping_add(i)).collect()
    }

    pub fn sweep_ks(&self) -> Vec<usize> {
        (self.sweep.k_min..=self.sweep.k_max).collect()
    }
}
