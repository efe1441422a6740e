use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::network::CdfNetwork;
use super::train::{evaluate_loss, train, TrainReport};
use super::windows::make_windows_in;
use super::{all_ones_propagation, AdjacencyMode, ModelConfig, ModelError};
use crate::causal::{discover, CausalConfig, CausalGraph};
use crate::data::{AttributeSchema, Panel};
use crate::linalg::Matrix;
use crate::preprocess::{preprocess_pipeline, PipelineConfig, PipelineState};
use crate::rng;

/// Everything needed to fit one model from a raw panel.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub model: ModelConfig,
    pub pipeline: PipelineConfig,
    pub causal: CausalConfig,
}

/// A trained model with the state needed to map raw panels into model space
/// and forecasts back out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfModel {
    pub config: ModelConfig,
    pub schema: AttributeSchema,
    pub pipeline: PipelineState,
    /// Present for `AdjacencyMode::Causal`.
    pub graph: Option<CausalGraph>,
    pub network: CdfNetwork,
    /// Per-attribute mean of the raw training values; stands in for the level
    /// of a target attribute that is unobserved at the forecast origin.
    pub level_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub model: CdfModel,
    pub report: TrainReport,
    /// Loss on the validation windows after training; `NaN` without any.
    pub validation_loss: f64,
}

/// `H × |targets|` forecast in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub panel_id: String,
    /// Last row whose values the forecast may depend on (besides known futures).
    pub origin: usize,
    pub attributes: Vec<String>,
    pub values: Matrix,
}

impl ForecastResult {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.attributes.iter().position(|a| a == name).map(|k| self.values.column(k))
    }
}

/// Fits the pipeline and the causal graph on rows `[0, train_end)`, trains on
/// windows whose targets lie in that range and validates on windows whose
/// targets lie in `[train_end, val_end)`. Rows at or after `val_end` are
/// never read.
pub fn fit_model(panel: &Panel, train_end: usize, val_end: usize, config: &FitConfig) -> Result<FittedModel, ModelError> {
    let mc = &config.model;
    mc.validate()?;
    let val_end = val_end.min(panel.rows()).max(train_end);
    let training = panel.slice(0, train_end)?;
    let visible = panel.slice(0, val_end)?;
    let (transformed, state) = preprocess_pipeline(&training, &config.pipeline)?;
    let offset = state.row_offset();
    let full = state.transform(&visible)?;

    let train_w = make_windows_in(&full, mc.lookback, mc.horizon, 0, train_end - offset)?;
    if train_w.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let val_w = if val_end > train_end {
        make_windows_in(&full, mc.lookback, mc.horizon, train_end - offset, val_end - offset)?
    } else {
        Vec::new()
    };

    let a = panel.cols();
    let (graph, propagation) = match mc.adjacency {
        AdjacencyMode::Causal => {
            let g = discover(&transformed, &config.causal)?;
            let p = g.propagation.clone();
            (Some(g), Some(p))
        }
        AdjacencyMode::AllOnes => (None, Some(all_ones_propagation(a))),
        AdjacencyMode::None => (None, None),
    };

    let schema = panel.schema().clone();
    let mut init = rng::seeded(mc.seed);
    let mut network = CdfNetwork::new(propagation, a, mc.horizon, schema.known_indices(), mc.widths(), &mut init)?;
    let report = train(&mut network, &train_w, &val_w, mc)?;
    let validation_loss = evaluate_loss(&network, &val_w)?;

    let level_means = (0..a)
        .map(|j| {
            let vals: Vec<f64> = (0..training.rows()).filter_map(|t| training.get(t, j)).collect();
            if vals.is_empty() {
                0.0
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            }
        })
        .collect();

    let model = CdfModel { config: *mc, schema, pipeline: state, graph, network, level_means };
    Ok(FittedModel { model, report, validation_loss })
}

/// Forecast for the `H` rows after `origin`. The lookback rows and the
/// target levels at the origin must be observed, as must the known futures.
pub fn predict(model: &CdfModel, panel: &Panel, origin: usize) -> Result<ForecastResult, ModelError> {
    forecast(model, panel, origin, None)
}

/// Like [`predict`], but unobserved cells in the window are filled with the
/// model's per-attribute training mean (raw units) instead of being rejected.
pub fn predict_with_fill(model: &CdfModel, panel: &Panel, origin: usize) -> Result<ForecastResult, ModelError> {
    forecast(model, panel, origin, Some(&model.level_means))
}

/// Like [`predict_with_fill`] with caller-chosen raw fill values, one per attribute.
pub fn predict_with_values(model: &CdfModel, panel: &Panel, origin: usize, fill: &[f64]) -> Result<ForecastResult, ModelError> {
    if fill.len() != model.schema.len() {
        return Err(ModelError::SchemaMismatch);
    }
    forecast(model, panel, origin, Some(fill))
}

fn forecast(model: &CdfModel, panel: &Panel, origin: usize, fill: Option<&[f64]>) -> Result<ForecastResult, ModelError> {
    if panel.schema().names() != model.schema.names() || panel.schema().known_future() != model.schema.known_future() {
        return Err(ModelError::SchemaMismatch);
    }
    let (u, h) = (model.config.lookback, model.config.horizon);
    let state = &model.pipeline;
    let offset = state.row_offset();
    if origin + h >= panel.rows() {
        return Err(ModelError::MissingKnownFuture { origin });
    }
    if origin + 1 < u + offset {
        return Err(ModelError::InsufficientHistory { origin });
    }
    let start = (origin + 1).saturating_sub(u + offset + state.warmup());
    let known_flags = model.schema.known_future();
    let local_origin = origin - start;
    // Target columns after the origin are dropped before any transform runs.
    let mut view = panel.slice(start, origin + h + 1)?.hide(|t, j| t > local_origin && !known_flags[j]);
    if let Some(fill) = fill {
        view = view.impute_with(|j| fill[j]);
    }
    let smoothed = state.smooth(&view)?;
    let transformed = state.transform_smoothed(&smoothed)?;

    let a = panel.cols();
    let mut x = Matrix::zeros(u, a);
    for r in 0..u {
        let row = local_origin + 1 - u + r - offset;
        for j in 0..a {
            x[(r, j)] = match transformed.get(row, j) {
                Some(v) => v,
                None => return Err(ModelError::InsufficientHistory { origin }),
            };
        }
    }
    let known = model.schema.known_indices();
    let mut kf = Matrix::zeros(h, known.len());
    for step in 0..h {
        let row = local_origin + 1 + step - offset;
        for (k, &j) in known.iter().enumerate() {
            kf[(step, k)] = match transformed.get(row, j) {
                Some(v) => v,
                None => return Err(ModelError::MissingKnownFuture { origin }),
            };
        }
    }
    let targets = model.schema.target_indices();
    let mut anchor = Vec::with_capacity(targets.len());
    for &j in &targets {
        anchor.push(match smoothed.get(local_origin, j) {
            Some(v) => v,
            None if !state.config.difference => model.level_means[j],
            None => return Err(ModelError::InsufficientHistory { origin }),
        });
    }

    let out = model.network.forward(&x, &kf)?;
    let values = state.invert(&out, &targets, &anchor)?;
    Ok(ForecastResult {
        panel_id: String::from(panel.id()),
        origin,
        attributes: targets.iter().map(|&j| model.schema.names()[j].clone()).collect(),
        values,
    })
}
