//! Forecasting for a panel whose attributes lack history, by borrowing from
//! similar panels ("donors") that have full history and trained models.
//!
//! | [`Strategy`]  | donors ranked by | forecast                                            |
//! |---------------|------------------|-----------------------------------------------------|
//! | `Gmm`         | GMM              | mean of the top-k donor models' forecasts           |
//! | `GmmSd`       | GMM              | [`sd_filter_average`] of those forecasts            |
//! | `Eros`        | Eros             | mean of the top-k donor models' forecasts           |
//! | `Virtual`     | GMM              | model trained on the pointwise mean of top-k donors |
//! | `VirtualMn`   | GMM              | same, donors weighted by inverse Manhattan distance |
//!
//! Donor models always run on the target's own input window and known
//! futures. Cells the target lacks are filled per [`MissingFill`].

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Panel};
use crate::fmath;
use crate::linalg::Matrix;
use crate::model::{fit_model, predict_with_values, CdfModel, FitConfig, ForecastResult, ModelError};
use crate::similarity::{
    eros_from_summaries, eros_summary, eros_weights, gmm_fit, gmm_rank, manhattan_distance, observed_attributes,
    panel_features, standardize_features, SimilarityError, SimilarityMethod, SimilarityRanking,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ColdStartError {
    #[error("no eligible donors")]
    NoEligibleDonors,
    #[error("no candidate forecasts to combine")]
    EmptyCandidates,
    #[error("strategy precondition failed: {0}")]
    StrategyPreconditionFailed(&'static str),
    #[error("donor panels differ in schema or length")]
    SchemaMismatch,
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Gmm,
    GmmSd,
    Eros,
    Virtual,
    VirtualMn,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [Strategy::Gmm, Strategy::GmmSd, Strategy::Eros, Strategy::Virtual, Strategy::VirtualMn];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Gmm => "gmm",
            Strategy::GmmSd => "gmm_sd",
            Strategy::Eros => "eros",
            Strategy::Virtual => "virtual",
            Strategy::VirtualMn => "virtual_mn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }
}

/// Raw value substituted for target cells without history when a donor
/// model reads them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingFill {
    /// The donor model's per-attribute training mean.
    #[default]
    TrainingMean,
    /// Zero, i.e. the attribute did not exist yet.
    Zero,
}

impl MissingFill {
    fn values(self, model: &CdfModel) -> Vec<f64> {
        match self {
            MissingFill::TrainingMean => model.level_means.clone(),
            MissingFill::Zero => alloc::vec![0.0; model.level_means.len()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColdStartConfig {
    pub strategy: Strategy,
    /// Number of donors used.
    pub k: usize,
    /// GMM component count.
    pub gmm_components: usize,
    pub fill: MissingFill,
    pub seed: u64,
}

impl Default for ColdStartConfig {
    fn default() -> Self {
        Self { strategy: Strategy::GmmSd, k: 5, gmm_components: 7, fill: MissingFill::TrainingMean, seed: 0 }
    }
}

/// A panel with full history and the model trained on it.
#[derive(Debug, Clone, Copy)]
pub struct Donor<'a> {
    pub panel: &'a Panel,
    pub model: &'a CdfModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateForecast {
    pub source: String,
    pub values: Matrix,
}

/// Iteratively drops candidates whose L2 distance to the candidate mean
/// exceeds the mean distance by more than one (population) standard
/// deviation of the distances; stops when nothing is dropped or at most two
/// remain. Returns the mean of the survivors.
pub fn sd_filter_average(candidates: &[Matrix]) -> Result<Matrix, ColdStartError> {
    let first = candidates.first().ok_or(ColdStartError::EmptyCandidates)?;
    if candidates.iter().any(|c| c.shape() != first.shape()) {
        return Err(ColdStartError::SchemaMismatch);
    }
    let mut alive: Vec<&Matrix> = candidates.iter().collect();
    while alive.len() > 2 {
        let m = mean_matrix(&alive);
        let d: Vec<f64> = alive
            .iter()
            .map(|c| fmath::sqrt(c.data().iter().zip(m.data()).map(|(a, b)| (a - b) * (a - b)).sum()))
            .collect();
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let sd = fmath::sqrt(d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n);
        let cut = mean + sd;
        let keep: Vec<&Matrix> = alive.iter().zip(&d).filter(|(_, &di)| di <= cut).map(|(c, _)| *c).collect();
        if keep.len() == alive.len() {
            break;
        }
        alive = keep;
    }
    Ok(mean_matrix(&alive))
}

fn mean_matrix(ms: &[&Matrix]) -> Matrix {
    let mut out = Matrix::zeros(ms[0].rows(), ms[0].cols());
    for m in ms {
        for (o, v) in out.data_mut().iter_mut().zip(m.data()) {
            *o += v;
        }
    }
    out.scale(1.0 / ms.len() as f64);
    out
}

/// Elementwise mean of candidate forecasts.
pub fn mean_forecast(candidates: &[Matrix]) -> Result<Matrix, ColdStartError> {
    if candidates.is_empty() {
        return Err(ColdStartError::EmptyCandidates);
    }
    let refs: Vec<&Matrix> = candidates.iter().collect();
    Ok(mean_matrix(&refs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VirtualWeights {
    Uniform,
    Manhattan,
}

/// Inverse-distance weights `(1/d_c) / Σ 1/d`; a zero distance takes all the weight.
pub fn inverse_distance_weights(distances: &[f64]) -> Vec<f64> {
    if let Some(z) = distances.iter().position(|&d| d == 0.0) {
        return (0..distances.len()).map(|i| if i == z { 1.0 } else { 0.0 }).collect();
    }
    let inv: Vec<f64> = distances.iter().map(|d| 1.0 / d).collect();
    let s: f64 = inv.iter().sum();
    inv.iter().map(|v| v / s).collect()
}

/// Weighted pointwise combination of donor panels (rows `[0, rows)`), all
/// cells observed. `weights` must sum to 1.
pub fn build_virtual_panel(id: &str, donors: &[&Panel], weights: &[f64], rows: usize) -> Result<Panel, ColdStartError> {
    let first = donors.first().ok_or(ColdStartError::NoEligibleDonors)?;
    if weights.len() != donors.len() {
        return Err(ColdStartError::StrategyPreconditionFailed("one weight per donor"));
    }
    if donors.iter().any(|d| d.schema() != first.schema() || d.rows() < rows) || rows == 0 {
        return Err(ColdStartError::SchemaMismatch);
    }
    let a = first.cols();
    let mut values = Matrix::zeros(rows, a);
    for (d, &w) in donors.iter().zip(weights) {
        for t in 0..rows {
            for j in 0..a {
                let v = d.get(t, j).ok_or(ColdStartError::StrategyPreconditionFailed("donor panels must be fully observed"))?;
                values[(t, j)] += w * v;
            }
        }
    }
    Ok(Panel::from_values(id, first.schema().clone(), values)?)
}

enum Members<'a> {
    Donors(Vec<Donor<'a>>),
    Virtual(CdfModel),
}

/// Ranking and donor selection (or the virtual model) for one target;
/// reusable for every forecast origin of that target.
pub struct ColdStartPlan<'a> {
    pub config: ColdStartConfig,
    pub ranking: SimilarityRanking,
    pub selected: Vec<String>,
    members: Members<'a>,
}

/// Compares the target and donors on the attributes the target observes
/// over `[0, history_end)` and prepares the configured strategy.
///
/// Only rows before `history_end` of the target are read, and only
/// observed cells. Donor order does not matter.
pub fn plan<'a>(
    target: &Panel,
    history_end: usize,
    donors: &[Donor<'a>],
    config: &ColdStartConfig,
    fit: &FitConfig,
) -> Result<ColdStartPlan<'a>, ColdStartError> {
    if config.k == 0 {
        return Err(ColdStartError::StrategyPreconditionFailed("k must be at least 1"));
    }
    let mut donors: Vec<Donor<'a>> =
        donors.iter().filter(|d| d.panel.id() != target.id()).copied().collect();
    if donors.is_empty() {
        return Err(ColdStartError::NoEligibleDonors);
    }
    donors.sort_by(|a, b| a.panel.id().cmp(b.panel.id()));
    if donors.iter().any(|d| d.panel.schema() != target.schema() || d.panel.rows() < history_end) {
        return Err(ColdStartError::SchemaMismatch);
    }
    let attrs: Vec<usize> = observed_attributes(target, 0, history_end)
        .into_iter()
        .filter(|&j| donors.iter().all(|d| d.panel.column_observed_in(j, 0, history_end)))
        .collect();
    if attrs.is_empty() {
        return Err(ColdStartError::StrategyPreconditionFailed("target observes no attribute over the history window"));
    }

    let ranking = match config.strategy {
        Strategy::Eros => {
            let ts = eros_summary(target, &attrs, 0, history_end)?;
            let ds = donors
                .iter()
                .map(|d| eros_summary(d.panel, &attrs, 0, history_end))
                .collect::<Result<Vec<_>, _>>()?;
            let mut all = ds.clone();
            all.push(ts.clone());
            let w = eros_weights(&all)?;
            let entries = donors
                .iter()
                .zip(&ds)
                .map(|(d, s)| Ok((String::from(d.panel.id()), eros_from_summaries(&ts, s, &w)?)))
                .collect::<Result<Vec<_>, SimilarityError>>()?;
            SimilarityRanking::new(SimilarityMethod::Eros, entries)
        }
        _ => {
            let mut feats = Vec::with_capacity(donors.len() + 1);
            feats.push(panel_features(target, &attrs, 0, history_end)?.values);
            for d in &donors {
                feats.push(panel_features(d.panel, &attrs, 0, history_end)?.values);
            }
            standardize_features(&mut feats);
            let components = config.gmm_components.min(feats.len());
            let model = gmm_fit(&feats, components, config.seed)?;
            let candidates: Vec<(String, Vec<f64>)> =
                donors.iter().zip(&feats[1..]).map(|(d, f)| (String::from(d.panel.id()), f.clone())).collect();
            gmm_rank(&feats[0], &model, &candidates)
        }
    };
    let selected = ranking.top(config.k);
    let chosen: Vec<Donor<'a>> = selected
        .iter()
        .filter_map(|id| donors.iter().find(|d| d.panel.id() == id).copied())
        .collect();

    let members = match config.strategy {
        Strategy::Virtual | Strategy::VirtualMn => {
            let mut chosen = chosen;
            chosen.sort_by(|a, b| a.panel.id().cmp(b.panel.id()));
            let panels: Vec<&Panel> = chosen.iter().map(|d| d.panel).collect();
            let weights = if config.strategy == Strategy::VirtualMn {
                let d = panels
                    .iter()
                    .map(|p| manhattan_distance(target, p, &attrs, 0, history_end))
                    .collect::<Result<Vec<_>, _>>()?;
                inverse_distance_weights(&d)
            } else {
                alloc::vec![1.0 / panels.len() as f64; panels.len()]
            };
            let id = alloc::format!("virtual:{}", target.id());
            let virtual_panel = build_virtual_panel(&id, &panels, &weights, history_end)?;
            let fitted = fit_model(&virtual_panel, history_end, history_end, fit)?;
            Members::Virtual(fitted.model)
        }
        _ => Members::Donors(chosen),
    };
    Ok(ColdStartPlan { config: *config, ranking, selected, members })
}

impl ColdStartPlan<'_> {
    /// Per-donor forecasts for the target at `origin` (empty for virtual strategies).
    pub fn candidates(&self, target: &Panel, origin: usize) -> Result<Vec<CandidateForecast>, ColdStartError> {
        match &self.members {
            Members::Donors(ds) => {
                let mut out = Vec::with_capacity(ds.len());
                for d in ds {
                    let f = predict_with_values(d.model, target, origin, &self.config.fill.values(d.model))?;
                    out.push(CandidateForecast { source: String::from(d.panel.id()), values: f.values });
                }
                out.sort_by(|a, b| a.source.cmp(&b.source));
                Ok(out)
            }
            Members::Virtual(_) => Ok(Vec::new()),
        }
    }

    pub fn forecast(&self, target: &Panel, origin: usize) -> Result<ForecastResult, ColdStartError> {
        match &self.members {
            Members::Virtual(model) => Ok(predict_with_values(model, target, origin, &self.config.fill.values(model))?),
            Members::Donors(ds) => {
                let first = ds.first().ok_or(ColdStartError::NoEligibleDonors)?;
                let cands = self.candidates(target, origin)?;
                let values: Vec<Matrix> = cands.into_iter().map(|c| c.values).collect();
                let combined = match self.config.strategy {
                    Strategy::GmmSd => sd_filter_average(&values)?,
                    _ => mean_forecast(&values)?,
                };
                let targets = first.model.schema.target_indices();
                Ok(ForecastResult {
                    panel_id: String::from(target.id()),
                    origin,
                    attributes: targets.iter().map(|&j| first.model.schema.names()[j].clone()).collect(),
                    values: combined,
                })
            }
        }
    }
}

/// One-shot [`plan`] followed by a forecast at `origin`.
pub fn coldstart_forecast(
    target: &Panel,
    history_end: usize,
    donors: &[Donor<'_>],
    config: &ColdStartConfig,
    fit: &FitConfig,
    origin: usize,
) -> Result<ForecastResult, ColdStartError> {
    plan(target, history_end, donors, config, fit)?.forecast(target, origin)
}
