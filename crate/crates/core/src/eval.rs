//! Error metrics and the experiment harness: per-center forecasting
//! comparisons, leave-one-out cold-start runs and k sweeps.
//!
//! Every runner is split into per-center units (`forecast_center`,
//! `fit_donors`, `coldstart_center`, `sweep_center`) so a caller can fan
//! them out and concatenate the results in center order; the `run_*`
//! functions do exactly that sequentially.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coldstart::{self, ColdStartConfig, ColdStartError, Donor, Strategy};
use crate::data::{Fleet, Panel};
use crate::fmath;
use crate::model::{fit_model, predict, tune, AdjacencyMode, CdfModel, FitConfig, ForecastResult, HyperGrid, ModelError};
use crate::synth::{make_scenario, ScenarioKind, SynthError};

/// Smallest `|actual|` that enters MAPE.
pub const MAPE_EPSILON: f64 = 1e-8;

/// Attribute every experiment scores.
pub const TOTAL: &str = "total";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("prediction has {pred} values, actual has {actual}")]
    DimensionMismatch { pred: usize, actual: usize },
    #[error("no values to score")]
    Empty,
    #[error("non-finite value in prediction or actual")]
    NonFinite,
    #[error("every actual value is below the MAPE threshold")]
    AllTermsExcluded,
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("panel has no `{TOTAL}` attribute")]
    MissingTotal,
    #[error("fleet needs at least {needed} centers, has {found}")]
    TooFewCenters { needed: usize, found: usize },
    #[error("no scorable forecast origin")]
    NoOrigins,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    ColdStart(#[from] ColdStartError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mse: f64,
    pub mae: f64,
    /// `None` when every actual is below [`MAPE_EPSILON`].
    pub mape: Option<f64>,
    pub mape_excluded: usize,
    pub count: usize,
}

impl MetricReport {
    pub fn mape(&self) -> Result<f64, EvalError> {
        self.mape.ok_or(EvalError::AllTermsExcluded)
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Mse => Some(self.mse),
            Metric::Mae => Some(self.mae),
            Metric::Mape => self.mape,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mse,
    Mae,
    Mape,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Mse, Metric::Mae, Metric::Mape];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::Mae => "mae",
            Metric::Mape => "mape",
        }
    }
}

/// MSE, MAE and MAPE (as a ratio) over paired values.
pub fn metrics(pred: &[f64], actual: &[f64]) -> Result<MetricReport, EvalError> {
    if pred.len() != actual.len() {
        return Err(EvalError::DimensionMismatch { pred: pred.len(), actual: actual.len() });
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    if pred.iter().chain(actual).any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let n = pred.len() as f64;
    let (mut se, mut ae, mut pe, mut kept) = (0.0, 0.0, 0.0, 0usize);
    for (p, a) in pred.iter().zip(actual) {
        let d = p - a;
        se += d * d;
        ae += fmath::abs(d);
        if fmath::abs(*a) >= MAPE_EPSILON {
            pe += fmath::abs(d) / fmath::abs(*a);
            kept += 1;
        }
    }
    Ok(MetricReport {
        mse: se / n,
        mae: ae / n,
        mape: (kept > 0).then(|| pe / kept as f64),
        mape_excluded: pred.len() - kept,
        count: pred.len(),
    })
}

/// Median of the finite values; `None` if there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// Chronological split boundaries: train `[0, train_end)`, validation
/// `[train_end, val_end)`, test `[val_end, rows)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train_end: usize,
    pub val_end: usize,
    pub rows: usize,
}

pub fn chronological_split(rows: usize, train: f64, validation: f64) -> Result<Split, EvalError> {
    if !(train > 0.0 && validation >= 0.0 && train + validation < 1.0) {
        return Err(EvalError::InvalidConfig("split fractions must be positive and leave a test part"));
    }
    let train_end = (rows as f64 * train) as usize;
    let val_end = (rows as f64 * (train + validation)) as usize;
    if train_end == 0 || val_end >= rows {
        return Err(EvalError::InvalidConfig("panel too short for the split"));
    }
    Ok(Split { train_end, val_end, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastMethod {
    /// Stacked LSTM without a graph layer.
    Lstm,
    /// Graph layer over the all-ones adjacency.
    LstmGnn,
    /// Graph layer over the discovered causal graph.
    Cdf,
}

impl ForecastMethod {
    pub const ALL: [ForecastMethod; 3] = [ForecastMethod::Lstm, ForecastMethod::LstmGnn, ForecastMethod::Cdf];

    pub fn name(self) -> &'static str {
        match self {
            ForecastMethod::Lstm => "lstm",
            ForecastMethod::LstmGnn => "lstm_gnn",
            ForecastMethod::Cdf => "cdf",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn adjacency(self) -> AdjacencyMode {
        match self {
            ForecastMethod::Lstm => AdjacencyMode::None,
            ForecastMethod::LstmGnn => AdjacencyMode::AllOnes,
            ForecastMethod::Cdf => AdjacencyMode::Causal,
        }
    }
}

/// A cold-start method: the target's own model without any transfer, or a
/// donor-based strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColdStartMethod {
    Cdf,
    #[serde(untagged)]
    Strategy(Strategy),
}

impl ColdStartMethod {
    pub fn all() -> Vec<ColdStartMethod> {
        let mut v = alloc::vec![ColdStartMethod::Cdf];
        v.extend(Strategy::ALL.map(ColdStartMethod::Strategy));
        v
    }

    pub fn name(self) -> &'static str {
        match self {
            ColdStartMethod::Cdf => "cdf",
            ColdStartMethod::Strategy(s) => s.name(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        if s == "cdf" {
            return Some(ColdStartMethod::Cdf);
        }
        Strategy::parse(s).map(ColdStartMethod::Strategy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub fit: FitConfig,
    pub coldstart: ColdStartConfig,
    pub train_fraction: f64,
    pub validation_fraction: f64,
    /// When set, every forecasting method is tuned on the validation part.
    pub grid: Option<HyperGrid>,
    pub scenario: ScenarioKind,
    pub masked_services: usize,
    /// Cold-start cut as a fraction of the panel length.
    pub cut_fraction: f64,
    /// Master seed; overrides the model and cold-start seeds.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            coldstart: ColdStartConfig::default(),
            train_fraction: 0.8,
            validation_fraction: 0.1,
            grid: None,
            scenario: ScenarioKind::Added,
            masked_services: 3,
            cut_fraction: 0.75,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    fn seeded_fit(&self, adjacency: AdjacencyMode) -> FitConfig {
        let mut fit = self.fit;
        fit.model.adjacency = adjacency;
        fit.model.seed = self.seed;
        fit
    }

    fn seeded_coldstart(&self, strategy: Strategy) -> ColdStartConfig {
        ColdStartConfig { strategy, seed: self.seed, ..self.coldstart }
    }

    pub fn cut(&self, rows: usize) -> Result<usize, EvalError> {
        let cut = (rows as f64 * self.cut_fraction) as usize;
        if !(self.cut_fraction > 0.0 && self.cut_fraction < 1.0) || cut == 0 || cut >= rows {
            return Err(EvalError::InvalidConfig("cut fraction must lie in (0, 1)"));
        }
        Ok(cut)
    }
}

/// Metrics of one method on one center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub seed: u64,
    pub center: String,
    pub method: String,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
}

impl ExperimentResult {
    /// Method names in first-seen order.
    pub fn methods(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.method) {
                out.push(r.method.clone());
            }
        }
        out
    }

    /// Median of `metric` over the centers scored with `method`.
    pub fn median(&self, method: &str, metric: Metric) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.method == method).filter_map(|r| r.report.get(metric)).collect();
        median(&v)
    }

    /// Long format `(seed, center, method, metric, value)`; a missing MAPE is skipped.
    pub fn long_rows(&self) -> Vec<(u64, &str, &str, &'static str, f64)> {
        let mut out = Vec::with_capacity(self.rows.len() * 3);
        for r in &self.rows {
            for m in Metric::ALL {
                if let Some(v) = r.report.get(m) {
                    out.push((r.seed, r.center.as_str(), r.method.as_str(), m.name(), v));
                }
            }
        }
        out
    }
}

fn total_index(panel: &Panel) -> Result<usize, EvalError> {
    panel.schema().index_of(TOTAL).ok_or(EvalError::MissingTotal)
}

/// Pools the `total` forecasts of every origin against the raw actuals.
fn score_total<F>(truth: &Panel, origins: core::ops::RangeInclusive<usize>, mut forecast: F) -> Result<MetricReport, EvalError>
where
    F: FnMut(usize) -> Result<ForecastResult, EvalError>,
{
    let j = total_index(truth)?;
    let (mut pred, mut actual) = (Vec::new(), Vec::new());
    for origin in origins {
        let f = forecast(origin)?;
        let col = f.column(TOTAL).ok_or(EvalError::MissingTotal)?;
        for (h, p) in col.into_iter().enumerate() {
            let a = truth.get(origin + 1 + h, j).ok_or(EvalError::NoOrigins)?;
            pred.push(p);
            actual.push(a);
        }
    }
    if pred.is_empty() {
        return Err(EvalError::NoOrigins);
    }
    metrics(&pred, &actual)
}

/// Origins whose whole horizon lies in the test part.
pub fn test_origins(split: &Split, horizon: usize) -> Result<core::ops::RangeInclusive<usize>, EvalError> {
    let first = split.val_end.checked_sub(1).ok_or(EvalError::NoOrigins)?;
    let last = split.rows.checked_sub(horizon + 1).ok_or(EvalError::NoOrigins)?;
    if last < first {
        return Err(EvalError::NoOrigins);
    }
    Ok(first..=last)
}

/// Trains and scores each method on one fully observed center.
pub fn forecast_center(
    panel: &Panel,
    methods: &[ForecastMethod],
    config: &ExperimentConfig,
) -> Result<Vec<ResultRow>, EvalError> {
    let split = chronological_split(panel.rows(), config.train_fraction, config.validation_fraction)?;
    let origins = test_origins(&split, config.fit.model.horizon)?;
    let mut rows = Vec::with_capacity(methods.len());
    for &method in methods {
        let mut fit = config.seeded_fit(method.adjacency());
        if let Some(grid) = &config.grid {
            fit.model = tune(panel, split.train_end, split.val_end, &fit, grid)?.best;
        }
        let model = fit_model(panel, split.train_end, split.val_end, &fit)?.model;
        let report = score_total(panel, origins.clone(), |o| Ok(predict(&model, panel, o)?))?;
        rows.push(ResultRow { seed: config.seed, center: panel.id().to_string(), method: method.name().to_string(), report });
    }
    Ok(rows)
}

pub fn run_forecast_experiment(
    fleet: &Fleet,
    methods: &[ForecastMethod],
    config: &ExperimentConfig,
) -> Result<ExperimentResult, EvalError> {
    let mut rows = Vec::new();
    if methods.is_empty() {
        return Ok(ExperimentResult { rows });
    }
    for p in fleet.panels() {
        rows.extend(forecast_center(p, methods, config)?);
    }
    Ok(ExperimentResult { rows })
}

/// Trains the donor model of one center on rows `[0, cut)`.
pub fn fit_donor(panel: &Panel, config: &ExperimentConfig) -> Result<CdfModel, EvalError> {
    let cut = config.cut(panel.rows())?;
    Ok(fit_model(panel, cut, cut, &config.seeded_fit(AdjacencyMode::Causal))?.model)
}

pub fn fit_donors(fleet: &Fleet, config: &ExperimentConfig) -> Result<Vec<CdfModel>, EvalError> {
    fleet.panels().iter().map(|p| fit_donor(p, config)).collect()
}

/// Scored origins for a cold-start target: from the last masked row until
/// the lookback no longer reaches into the masked part, limited to origins
/// whose horizon fits in the panel.
pub fn coldstart_origins(rows: usize, cut: usize, config: &ExperimentConfig) -> Result<core::ops::RangeInclusive<usize>, EvalError> {
    let m = &config.fit.model;
    let first = cut.checked_sub(1).ok_or(EvalError::NoOrigins)?;
    let last = (cut + m.lookback - 2).min(rows.checked_sub(m.horizon + 1).ok_or(EvalError::NoOrigins)?);
    if last < first {
        return Err(EvalError::NoOrigins);
    }
    Ok(first..=last)
}

fn check_coldstart_fleet(fleet: &Fleet, models: &[CdfModel]) -> Result<(), EvalError> {
    if fleet.len() < 3 {
        return Err(EvalError::TooFewCenters { needed: 3, found: fleet.len() });
    }
    if models.len() != fleet.len() {
        return Err(EvalError::InvalidConfig("one donor model per center"));
    }
    Ok(())
}

/// Target's own model without transfer: masked cells are treated as a
/// constant zero signal, in training and at prediction.
fn plain_cdf(scenario_panel: &Panel, masked: &[usize], cut: usize, config: &ExperimentConfig) -> Result<(CdfModel, Panel), EvalError> {
    let mut filled = scenario_panel.clone();
    for &j in masked {
        filled = filled.with_constant_column(j, 0.0);
    }
    let model = fit_model(&filled, cut, cut, &config.seeded_fit(AdjacencyMode::Causal))?.model;
    Ok((model, filled))
}

/// Makes center `target` the cold-start target, with every other center as
/// a donor, and scores each method on the post-cut `total` forecasts.
pub fn coldstart_center(
    fleet: &Fleet,
    models: &[CdfModel],
    target: usize,
    methods: &[ColdStartMethod],
    config: &ExperimentConfig,
) -> Result<Vec<ResultRow>, EvalError> {
    check_coldstart_fleet(fleet, models)?;
    let t = fleet.panels()[target].rows();
    let cut = config.cut(t)?;
    let scenario = make_scenario(config.scenario, fleet, target, config.masked_services, cut)?;
    let panel = &scenario.fleet.panels()[target];
    let donors = donors_except(fleet, models, target);
    let origins = coldstart_origins(t, cut, config)?;
    let mut out = Vec::with_capacity(methods.len());
    for &method in methods {
        let report = match method {
            ColdStartMethod::Cdf => {
                let masked: Vec<usize> = scenario.masked.iter().filter_map(|n| panel.schema().index_of(n)).collect();
                let (model, filled) = plain_cdf(panel, &masked, cut, config)?;
                score_total(&scenario.truth, origins.clone(), |o| Ok(predict(&model, &filled, o)?))?
            }
            ColdStartMethod::Strategy(s) => {
                let cs = config.seeded_coldstart(s);
                let fit = config.seeded_fit(AdjacencyMode::Causal);
                let plan = coldstart::plan(panel, cut, &donors, &cs, &fit)?;
                score_total(&scenario.truth, origins.clone(), |o| Ok(plan.forecast(panel, o)?))?
            }
        };
        out.push(ResultRow {
            seed: config.seed,
            center: panel.id().to_string(),
            method: method.name().to_string(),
            report,
        });
    }
    Ok(out)
}

fn donors_except<'a>(fleet: &'a Fleet, models: &'a [CdfModel], target: usize) -> Vec<Donor<'a>> {
    fleet
        .panels()
        .iter()
        .zip(models)
        .enumerate()
        .filter(|(i, _)| *i != target)
        .map(|(_, (panel, model))| Donor { panel, model })
        .collect()
}

/// Leave-one-out cold-start experiment over every center.
pub fn run_coldstart_experiment(
    fleet: &Fleet,
    methods: &[ColdStartMethod],
    config: &ExperimentConfig,
) -> Result<ExperimentResult, EvalError> {
    let mut rows = Vec::new();
    if methods.is_empty() {
        return Ok(ExperimentResult { rows });
    }
    let models = fit_donors(fleet, config)?;
    for target in 0..fleet.len() {
        rows.extend(coldstart_center(fleet, &models, target, methods, config)?);
    }
    Ok(ExperimentResult { rows })
}

/// Which cold-start parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepTarget {
    /// Number of donors of the Eros strategy.
    #[serde(rename = "eros")]
    ErosK,
    /// Component count of the GMM strategy.
    #[serde(rename = "gmm")]
    GmmComponents,
}

impl SweepTarget {
    pub fn name(self) -> &'static str {
        match self {
            SweepTarget::ErosK => "eros",
            SweepTarget::GmmComponents => "gmm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [SweepTarget::ErosK, SweepTarget::GmmComponents].into_iter().find(|t| t.name() == s)
    }

    fn config(self, base: &ColdStartConfig, k: usize) -> ColdStartConfig {
        match self {
            SweepTarget::ErosK => ColdStartConfig { strategy: Strategy::Eros, k, ..*base },
            SweepTarget::GmmComponents => ColdStartConfig { strategy: Strategy::Gmm, gmm_components: k, ..*base },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub mse: f64,
    pub mae: f64,
    pub mape: Option<f64>,
}

/// Per-`k` metrics of one cold-start target.
pub fn sweep_center(
    fleet: &Fleet,
    models: &[CdfModel],
    target: usize,
    sweep: SweepTarget,
    ks: &[usize],
    config: &ExperimentConfig,
) -> Result<Vec<MetricReport>, EvalError> {
    check_coldstart_fleet(fleet, models)?;
    let t = fleet.panels()[target].rows();
    let cut = config.cut(t)?;
    let scenario = make_scenario(config.scenario, fleet, target, config.masked_services, cut)?;
    let panel = &scenario.fleet.panels()[target];
    let donors = donors_except(fleet, models, target);
    let origins = coldstart_origins(t, cut, config)?;
    let fit = config.seeded_fit(AdjacencyMode::Causal);
    let base = ColdStartConfig { seed: config.seed, ..config.coldstart };
    ks.iter()
        .map(|&k| {
            let plan = coldstart::plan(panel, cut, &donors, &sweep.config(&base, k), &fit)?;
            score_total(&scenario.truth, origins.clone(), |o| Ok(plan.forecast(panel, o)?))
        })
        .collect()
}

/// Medians over targets of each `k`'s metrics. `per_center[c][i]` belongs to `ks[i]`.
pub fn aggregate_sweep(ks: &[usize], per_center: &[Vec<MetricReport>]) -> Vec<SweepRow> {
    ks.iter()
        .enumerate()
        .map(|(i, &k)| {
            let col = |m: Metric| {
                let v: Vec<f64> = per_center.iter().filter_map(|c| c.get(i).and_then(|r| r.get(m))).collect();
                median(&v)
            };
            SweepRow {
                k,
                mse: col(Metric::Mse).unwrap_or(f64::NAN),
                mae: col(Metric::Mae).unwrap_or(f64::NAN),
                mape: col(Metric::Mape),
            }
        })
        .collect()
}

/// Repeats the cold-start experiment for every `k`, reusing one set of
/// donor models.
pub fn sweep_k(fleet: &Fleet, sweep: SweepTarget, ks: &[usize], config: &ExperimentConfig) -> Result<Vec<SweepRow>, EvalError> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(EvalError::InvalidConfig("k range must be non-empty and start at 1 or more"));
    }
    let models = fit_donors(fleet, config)?;
    let per_center = (0..fleet.len())
        .map(|target| sweep_center(fleet, &models, target, sweep, ks, config))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate_sweep(ks, &per_center))
}
