//! The forecasting model: network assembly, windowed datasets, training,
//! grid search, and prediction in original units.
//!
//! Three variants share the same code and differ only in the propagation
//! matrix handed to the graph layer:
//!
//! | [`AdjacencyMode`] | graph layer                                  |
//! |-------------------|----------------------------------------------|
//! | `Causal`          | discovered propagation matrix                |
//! | `AllOnes`         | all-ones adjacency, column normalized (`1/A`) |
//! | `None`            | skipped; plain stacked LSTM                  |

mod forecast;
mod network;
mod train;
mod windows;

pub use forecast::{fit_model, predict, predict_with_fill, predict_with_values, CdfModel, FitConfig, FittedModel, ForecastResult};
pub use network::{CdfNetwork, Trace, Widths};
pub use train::{evaluate_loss, train, tune, HyperGrid, TrainReport, TuneOutcome};
pub use windows::{make_windows, make_windows_in, window_at, WindowSample};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::causal::CausalError;
use crate::data::DataError;
use crate::linalg::Matrix;
use crate::nn::NnError;
use crate::preprocess::PreprocessError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("panel has {rows} rows, need at least {needed}")]
    PanelTooShort { rows: usize, needed: usize },
    #[error("no complete training window")]
    EmptyTrainingSet,
    #[error("no complete validation window")]
    EmptyValidationSet,
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("lookback window ending at {origin} is incomplete")]
    InsufficientHistory { origin: usize },
    #[error("known future values after {origin} are unavailable")]
    MissingKnownFuture { origin: usize },
    #[error("panel schema does not match the model schema")]
    SchemaMismatch,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Causal(#[from] CausalError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencyMode {
    Causal,
    AllOnes,
    None,
}

/// Architecture and optimizer settings for one model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Lookback `U`.
    pub lookback: usize,
    /// Horizon `H`.
    pub horizon: usize,
    /// Graph layer width `D_g`.
    pub graph_width: usize,
    /// LSTM hidden width `D_l`.
    pub lstm_width: usize,
    pub lstm_layers: usize,
    pub adjacency: AdjacencyMode,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            lookback: 12,
            horizon: 10,
            graph_width: 20,
            lstm_width: 20,
            lstm_layers: 1,
            adjacency: AdjacencyMode::Causal,
            learning_rate: 1e-2,
            epochs: 30,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.lookback == 0 || self.horizon == 0 {
            return Err(ModelError::InvalidConfig("lookback and horizon must be at least 1"));
        }
        if self.graph_width == 0 || self.lstm_width == 0 || self.lstm_layers == 0 {
            return Err(ModelError::InvalidConfig("layer widths and LSTM depth must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(ModelError::InvalidConfig("batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::InvalidConfig("learning rate must be positive"));
        }
        Ok(())
    }

    pub fn widths(&self) -> Widths {
        Widths { graph: self.graph_width, lstm: self.lstm_width, lstm_layers: self.lstm_layers }
    }
}

/// Column-normalized all-ones adjacency: every entry `1/A`.
pub fn all_ones_propagation(attributes: usize) -> Matrix {
    Matrix::filled(attributes, attributes, 1.0 / attributes as f64)
}
