use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{fit_model, FitConfig, ModelConfig, ModelError, WindowSample};
use super::network::CdfNetwork;
use crate::data::Panel;
use crate::nn::{mse_loss, rmsprop_step, zeros_like, Parameters, RmsPropState};
use crate::rng;

/// Mean per-sample loss for each epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    /// Empty when no validation samples were supplied.
    pub val_loss: Vec<f64>,
}

impl TrainReport {
    pub fn final_val_loss(&self) -> Option<f64> {
        self.val_loss.last().copied()
    }
}

/// Mean MSE of the network over `samples`; `NaN` for an empty set.
pub fn evaluate_loss(net: &CdfNetwork, samples: &[WindowSample]) -> Result<f64, ModelError> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for s in samples {
        let out = net.forward(&s.x, &s.known_future)?;
        total += mse_loss(&out, &s.target)?.0;
    }
    Ok(total / samples.len() as f64)
}

/// Mini-batch RMSProp. The batch gradient is the mean of per-sample
/// gradients; sample order is reshuffled every epoch from `config.seed`.
pub fn train(
    net: &mut CdfNetwork,
    samples: &[WindowSample],
    validation: &[WindowSample],
    config: &ModelConfig,
) -> Result<TrainReport, ModelError> {
    if samples.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    config.validate()?;
    let mut report = TrainReport::default();
    let mut opt = RmsPropState::with_learning_rate(config.learning_rate);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut shuffle = rng::seeded(rng::derive_seed(config.seed, 0x5348_5546));
    let mut grads = zeros_like(net);
    for _ in 0..config.epochs {
        order.shuffle(&mut shuffle);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let s = &samples[i];
                let (out, trace) = net.forward_trace(&s.x, &s.known_future)?;
                let (loss, mut dout) = mse_loss(&out, &s.target)?;
                epoch_loss += loss;
                dout.scale(scale);
                net.backward(&trace, &dout, &mut grads)?;
            }
            rmsprop_step(&mut opt, net, &grads)?;
        }
        report.train_loss.push(epoch_loss / samples.len() as f64);
        if !validation.is_empty() {
            report.val_loss.push(evaluate_loss(net, validation)?);
        }
    }
    Ok(report)
}

/// Hyperparameter grid, enumerated in field order with the last field
/// varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperGrid {
    pub learning_rates: Vec<f64>,
    pub epochs: Vec<usize>,
    pub batch_sizes: Vec<usize>,
    /// Applied to both the graph and LSTM widths.
    pub hidden_units: Vec<usize>,
    pub lstm_layers: Vec<usize>,
}

impl HyperGrid {
    /// The full search space (1440 points).
    pub fn full() -> Self {
        Self {
            learning_rates: vec![1e-1, 1e-2, 1e-3, 1e-4],
            epochs: vec![10, 20, 30, 50, 70, 100],
            batch_sizes: vec![16, 32, 64, 128],
            hidden_units: vec![10, 20, 100, 200, 300],
            lstm_layers: vec![1, 2, 3],
        }
    }

    /// A subset of [`HyperGrid::full`] that runs in seconds per panel.
    pub fn desk() -> Self {
        Self {
            learning_rates: vec![1e-2, 1e-3],
            epochs: vec![30],
            batch_sizes: vec![32],
            hidden_units: vec![10, 20],
            lstm_layers: vec![1],
        }
    }

    /// Grid containing only `base`'s own values.
    pub fn singleton(base: &ModelConfig) -> Self {
        Self {
            learning_rates: vec![base.learning_rate],
            epochs: vec![base.epochs],
            batch_sizes: vec![base.batch_size],
            hidden_units: vec![base.lstm_width],
            lstm_layers: vec![base.lstm_layers],
        }
    }

    pub fn configs(&self, base: &ModelConfig) -> Vec<ModelConfig> {
        let mut out = Vec::new();
        for &learning_rate in &self.learning_rates {
            for &epochs in &self.epochs {
                for &batch_size in &self.batch_sizes {
                    for &h in &self.hidden_units {
                        for &lstm_layers in &self.lstm_layers {
                            out.push(ModelConfig {
                                learning_rate,
                                epochs,
                                batch_size,
                                graph_width: h,
                                lstm_width: h,
                                lstm_layers,
                                ..*base
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    pub best: ModelConfig,
    /// Every evaluated configuration with its validation loss, in grid order.
    pub evaluated: Vec<(ModelConfig, f64)>,
}

/// Trains one model per grid point on rows `[0, train_end)` and keeps the
/// configuration with the lowest validation loss on targets in
/// `[train_end, val_end)`. Ties go to the earlier grid point.
pub fn tune(
    panel: &Panel,
    train_end: usize,
    val_end: usize,
    base: &FitConfig,
    grid: &HyperGrid,
) -> Result<TuneOutcome, ModelError> {
    let configs = grid.configs(&base.model);
    if configs.is_empty() {
        return Err(ModelError::EmptyGrid);
    }
    let mut evaluated = Vec::with_capacity(configs.len());
    let mut best: Option<(ModelConfig, f64)> = None;
    for model in configs {
        let cfg = FitConfig { model, ..*base };
        let fitted = fit_model(panel, train_end, val_end, &cfg)?;
        let loss = fitted.validation_loss;
        if loss.is_nan() {
            return Err(ModelError::EmptyValidationSet);
        }
        if best.as_ref().is_none_or(|(_, b)| loss < *b) {
            best = Some((model, loss));
        }
        evaluated.push((model, loss));
    }
    let (best, _) = best.ok_or(ModelError::EmptyGrid)?;
    Ok(TuneOutcome { best, evaluated })
}
