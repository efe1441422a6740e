//! Smoothing, differencing and standardization, each with the inverse needed
//! to bring forecasts back to original units.
//!
//! All transforms respect the observation mask: unobserved cells are never
//! read as numbers, and a derived cell is unobserved whenever its inputs are.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Panel};
use crate::fmath;
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PreprocessError {
    #[error("rolling window must be at least 1")]
    ZeroWindow,
    #[error("differencing needs at least 2 rows, got {0}")]
    TooShort(usize),
    #[error("attribute {attr} has {observed} observed values, need at least 2")]
    InsufficientData { attr: usize, observed: usize },
    #[error("attribute {0} has no observed level to anchor differences")]
    Unanchored(usize),
    #[error("dimension mismatch: expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Data(#[from] DataError),
}

fn median_in_place(buf: &mut [f64]) -> f64 {
    buf.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    let n = buf.len();
    if n % 2 == 1 {
        buf[n / 2]
    } else {
        0.5 * (buf[n / 2 - 1] + buf[n / 2])
    }
}

/// Trailing rolling median: `out[t] = median(series[max(0, t-window+1) ..= t])`.
pub fn rolling_median(series: &[f64], window: usize) -> Result<Vec<f64>, PreprocessError> {
    let opt: Vec<Option<f64>> = series.iter().copied().map(Some).collect();
    Ok(rolling_median_masked(&opt, window)?
        .into_iter()
        .map(|v| v.expect("fully observed input"))
        .collect())
}

/// Trailing rolling median over observed entries only. A cell whose window
/// holds no observed entry stays unobserved.
pub fn rolling_median_masked(series: &[Option<f64>], window: usize) -> Result<Vec<Option<f64>>, PreprocessError> {
    if window == 0 {
        return Err(PreprocessError::ZeroWindow);
    }
    let mut buf = Vec::with_capacity(window);
    Ok((0..series.len())
        .map(|t| {
            buf.clear();
            let start = (t + 1).saturating_sub(window);
            buf.extend(series[start..=t].iter().flatten());
            if buf.is_empty() {
                None
            } else {
                Some(median_in_place(&mut buf))
            }
        })
        .collect())
}

/// Final observed level of every attribute, used to undo differencing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceAnchor {
    pub last_levels: Vec<f64>,
}

fn difference_unanchored(panel: &Panel) -> Result<Panel, PreprocessError> {
    let (t, a) = (panel.rows(), panel.cols());
    if t < 2 {
        return Err(PreprocessError::TooShort(t));
    }
    let mut values = Matrix::zeros(t - 1, a);
    let mut observed = vec![false; (t - 1) * a];
    for r in 0..t - 1 {
        for j in 0..a {
            if let (Some(x0), Some(x1)) = (panel.get(r, j), panel.get(r + 1, j)) {
                values[(r, j)] = x1 - x0;
                observed[r * a + j] = true;
            }
        }
    }
    Ok(Panel::new(panel.id(), panel.schema().clone(), values, observed)?)
}

/// Last observed level of each column.
pub fn last_levels(panel: &Panel) -> Vec<Option<f64>> {
    (0..panel.cols())
        .map(|j| (0..panel.rows()).rev().find_map(|t| panel.get(t, j)))
        .collect()
}

/// First-order differences: row `t` of the output is `x[t+1] - x[t]`.
pub fn difference(panel: &Panel) -> Result<(Panel, DifferenceAnchor), PreprocessError> {
    let diffs = difference_unanchored(panel)?;
    let last_levels = last_levels(panel)
        .into_iter()
        .enumerate()
        .map(|(j, v)| v.ok_or(PreprocessError::Unanchored(j)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((diffs, DifferenceAnchor { last_levels }))
}

/// Cumulative sum starting from the anchor: `out[0] = anchor + d[0]`,
/// `out[h] = out[h-1] + d[h]`.
pub fn inverse_difference(diffs: &Matrix, anchor: &DifferenceAnchor) -> Result<Matrix, PreprocessError> {
    if anchor.last_levels.len() != diffs.cols() {
        return Err(PreprocessError::DimensionMismatch { expected: diffs.cols(), got: anchor.last_levels.len() });
    }
    let mut out = Matrix::zeros(diffs.rows(), diffs.cols());
    let mut level = anchor.last_levels.clone();
    for h in 0..diffs.rows() {
        for (j, l) in level.iter_mut().enumerate() {
            *l += diffs[(h, j)];
            out[(h, j)] = *l;
        }
    }
    Ok(out)
}

/// Per-attribute mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScoreParams {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    /// `true` where the fitted deviation was zero; those attributes use `sigma = 1`.
    pub degenerate: Vec<bool>,
}

impl ZScoreParams {
    /// Parameters of the listed attributes, in the given order.
    pub fn select(&self, cols: &[usize]) -> ZScoreParams {
        ZScoreParams {
            mu: cols.iter().map(|&j| self.mu[j]).collect(),
            sigma: cols.iter().map(|&j| self.sigma[j]).collect(),
            degenerate: cols.iter().map(|&j| self.degenerate[j]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
}

pub fn zscore_fit(panel: &Panel) -> Result<ZScoreParams, PreprocessError> {
    let a = panel.cols();
    let mut params = ZScoreParams { mu: vec![0.0; a], sigma: vec![1.0; a], degenerate: vec![false; a] };
    for j in 0..a {
        let vals: Vec<f64> = (0..panel.rows()).filter_map(|t| panel.get(t, j)).collect();
        if vals.len() < 2 {
            return Err(PreprocessError::InsufficientData { attr: j, observed: vals.len() });
        }
        let n = vals.len() as f64;
        let mu = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        let sd = fmath::sqrt(var);
        params.mu[j] = mu;
        // relative cutoff so float noise around a constant column counts as degenerate
        if sd <= 1e-12 * (1.0 + fmath::abs(mu)) {
            params.degenerate[j] = true;
        } else {
            params.sigma[j] = sd;
        }
    }
    Ok(params)
}

/// `cell <- (cell - mu) / sigma` on observed cells.
pub fn zscore_apply(panel: &Panel, params: &ZScoreParams) -> Result<Panel, PreprocessError> {
    let (t, a) = (panel.rows(), panel.cols());
    if params.len() != a {
        return Err(PreprocessError::DimensionMismatch { expected: a, got: params.len() });
    }
    let mut values = Matrix::zeros(t, a);
    for r in 0..t {
        for j in 0..a {
            if let Some(v) = panel.get(r, j) {
                values[(r, j)] = (v - params.mu[j]) / params.sigma[j];
            }
        }
    }
    Ok(Panel::new(panel.id(), panel.schema().clone(), values, panel.mask().to_vec())?)
}

/// Exact inverse of [`zscore_apply`] on a dense matrix.
pub fn zscore_invert(m: &Matrix, params: &ZScoreParams) -> Result<Matrix, PreprocessError> {
    if params.len() != m.cols() {
        return Err(PreprocessError::DimensionMismatch { expected: m.cols(), got: params.len() });
    }
    let mut out = m.clone();
    for r in 0..m.rows() {
        for j in 0..m.cols() {
            out[(r, j)] = m[(r, j)] * params.sigma[j] + params.mu[j];
        }
    }
    Ok(out)
}

/// Which stages run, in order: rolling median, differencing, z-score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Trailing median window; `None` disables smoothing.
    pub smoothing_window: Option<usize>,
    pub difference: bool,
    pub standardize: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { smoothing_window: Some(7), difference: true, standardize: true }
    }
}

impl PipelineConfig {
    pub fn identity() -> Self {
        Self { smoothing_window: None, difference: false, standardize: false }
    }
}

/// Fitted pipeline: enough to transform new rows the same way and to map
/// forecasts back to original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineState {
    pub config: PipelineConfig,
    pub zscore: Option<ZScoreParams>,
    /// Last smoothed levels of the fitting panel.
    pub anchor: Option<DifferenceAnchor>,
}

impl PipelineState {
    pub fn identity() -> Self {
        Self { config: PipelineConfig::identity(), zscore: None, anchor: None }
    }

    /// Rows lost at the front of the panel (1 when differencing).
    pub fn row_offset(&self) -> usize {
        usize::from(self.config.difference)
    }

    /// Rows of raw history needed before the first transformed row so that
    /// the smoothing window is full.
    pub fn warmup(&self) -> usize {
        self.config.smoothing_window.map_or(0, |w| w - 1)
    }

    /// Rolling-median stage only.
    pub fn smooth(&self, panel: &Panel) -> Result<Panel, PreprocessError> {
        smooth_panel(panel, self.config.smoothing_window)
    }

    /// Differencing and standardization of an already smoothed panel.
    pub fn transform_smoothed(&self, smoothed: &Panel) -> Result<Panel, PreprocessError> {
        let diffed = if self.config.difference { difference_unanchored(smoothed)? } else { smoothed.clone() };
        match &self.zscore {
            Some(z) => zscore_apply(&diffed, z),
            None => Ok(diffed),
        }
    }

    /// Full forward transform with the fitted parameters.
    pub fn transform(&self, panel: &Panel) -> Result<Panel, PreprocessError> {
        self.transform_smoothed(&self.smooth(panel)?)
    }

    /// Maps model-space values of the attributes `cols` back to (smoothed)
    /// levels. `anchor` holds the level of each listed attribute at the
    /// forecast origin; it is ignored when differencing is off.
    pub fn invert(&self, m: &Matrix, cols: &[usize], anchor: &[f64]) -> Result<Matrix, PreprocessError> {
        if m.cols() != cols.len() {
            return Err(PreprocessError::DimensionMismatch { expected: cols.len(), got: m.cols() });
        }
        let unscaled = match &self.zscore {
            Some(z) => zscore_invert(m, &z.select(cols))?,
            None => m.clone(),
        };
        if self.config.difference {
            inverse_difference(&unscaled, &DifferenceAnchor { last_levels: anchor.to_vec() })
        } else {
            Ok(unscaled)
        }
    }
}

fn smooth_panel(panel: &Panel, window: Option<usize>) -> Result<Panel, PreprocessError> {
    let Some(w) = window else {
        return Ok(panel.clone());
    };
    let (t, a) = (panel.rows(), panel.cols());
    let mut values = Matrix::zeros(t, a);
    let mut observed = vec![false; t * a];
    for j in 0..a {
        let col = rolling_median_masked(&panel.column(j), w)?;
        for (r, v) in col.into_iter().enumerate() {
            if let Some(v) = v {
                values[(r, j)] = v;
                observed[r * a + j] = true;
            }
        }
    }
    Ok(Panel::new(panel.id(), panel.schema().clone(), values, observed)?)
}

/// Fits the pipeline on `panel` and returns the transformed panel.
pub fn preprocess_pipeline(panel: &Panel, config: &PipelineConfig) -> Result<(Panel, PipelineState), PreprocessError> {
    let smoothed = smooth_panel(panel, config.smoothing_window)?;
    let (diffed, anchor) = if config.difference {
        let (d, anchor) = difference(&smoothed)?;
        (d, Some(anchor))
    } else {
        (smoothed, None)
    };
    let (out, zscore) = if config.standardize {
        let z = zscore_fit(&diffed)?;
        (zscore_apply(&diffed, &z)?, Some(z))
    } else {
        (diffed, None)
    };
    Ok((out, PipelineState { config: *config, zscore, anchor }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::AttributeSchema;

    fn col_panel(col: &[f64]) -> Panel {
        Panel::from_values(
            "c",
            AttributeSchema::plain(&["x"]).unwrap(),
            Matrix::from_vec(col.len(), 1, col.to_vec()),
        )
        .unwrap()
    }

    #[test]
    fn rolling_median_examples() {
        assert_eq!(rolling_median(&[5.0; 4], 7).unwrap(), vec![5.0; 4]);
        assert_eq!(rolling_median(&[1.0, 1.0, 100.0, 1.0, 1.0], 3).unwrap(), vec![1.0; 5]);
        let s = [3.0, -1.0, 4.0, 1.5];
        assert_eq!(rolling_median(&s, 1).unwrap(), s.to_vec());
        assert_eq!(rolling_median(&s, 0), Err(PreprocessError::ZeroWindow));
        // even-sized leading window averages the middle pair
        assert_eq!(rolling_median(&[1.0, 3.0], 7).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn masked_median_skips_unobserved() {
        let s = [None, Some(2.0), None, Some(4.0), Some(9.0)];
        assert_eq!(
            rolling_median_masked(&s, 3).unwrap(),
            vec![None, Some(2.0), Some(2.0), Some(3.0), Some(6.5)]
        );
        assert_eq!(rolling_median_masked(&[None, None], 2).unwrap(), vec![None, None]);
    }

    #[test]
    fn difference_examples() {
        let (d, anchor) = difference(&col_panel(&[5.0, 7.0, 4.0])).unwrap();
        assert_eq!(d.column(0), vec![Some(2.0), Some(-3.0)]);
        assert_eq!(anchor.last_levels, vec![4.0]);
        let (d, _) = difference(&col_panel(&[3.0; 5])).unwrap();
        assert!(d.column(0).iter().all(|v| *v == Some(0.0)));
        assert_eq!(difference(&col_panel(&[1.0])).unwrap_err(), PreprocessError::TooShort(1));
    }

    #[test]
    fn difference_masks_when_either_operand_missing() {
        let p = Panel::new(
            "m",
            AttributeSchema::plain(&["x"]).unwrap(),
            Matrix::from_vec(4, 1, vec![1.0, 0.0, 3.0, 6.0]),
            vec![true, false, true, true],
        )
        .unwrap();
        let (d, anchor) = difference(&p).unwrap();
        assert_eq!(d.column(0), vec![None, None, Some(3.0)]);
        assert_eq!(anchor.last_levels, vec![6.0]);
    }

    #[test]
    fn inverse_difference_examples() {
        let d = Matrix::from_vec(2, 1, vec![2.0, -3.0]);
        let out = inverse_difference(&d, &DifferenceAnchor { last_levels: vec![5.0] }).unwrap();
        assert_eq!(out.data(), &[7.0, 4.0]);
        let z = inverse_difference(&Matrix::zeros(3, 1), &DifferenceAnchor { last_levels: vec![2.5] }).unwrap();
        assert_eq!(z.data(), &[2.5; 3]);
        assert!(matches!(
            inverse_difference(&d, &DifferenceAnchor { last_levels: vec![1.0, 2.0] }),
            Err(PreprocessError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zscore_examples() {
        let z = zscore_fit(&col_panel(&[1.0, 3.0])).unwrap();
        assert_eq!((z.mu[0], z.sigma[0], z.degenerate[0]), (2.0, 1.0, false));
        let applied = zscore_apply(&col_panel(&[1.0, 3.0]), &z).unwrap();
        assert_eq!(applied.column(0), vec![Some(-1.0), Some(1.0)]);

        let z = zscore_fit(&col_panel(&[4.0, 4.0, 4.0])).unwrap();
        assert_eq!((z.mu[0], z.sigma[0], z.degenerate[0]), (4.0, 1.0, true));
        let applied = zscore_apply(&col_panel(&[4.0, 5.0]), &z).unwrap();
        assert_eq!(applied.column(0), vec![Some(0.0), Some(1.0)]);

        let single = Panel::new(
            "s",
            AttributeSchema::plain(&["x"]).unwrap(),
            Matrix::from_vec(2, 1, vec![1.0, 0.0]),
            vec![true, false],
        )
        .unwrap();
        assert_eq!(zscore_fit(&single), Err(PreprocessError::InsufficientData { attr: 0, observed: 1 }));
    }

    #[test]
    fn identity_pipeline_is_identity() {
        let p = col_panel(&[1.0, 4.0, 2.0, 8.0]);
        let (out, state) = preprocess_pipeline(&p, &PipelineConfig::identity()).unwrap();
        assert_eq!(out, p);
        let m = Matrix::from_vec(2, 1, vec![3.0, 4.0]);
        assert_eq!(state.invert(&m, &[0], &[100.0]).unwrap(), m);
    }

    #[test]
    fn pipeline_inverts_true_future_diffs() {
        let series: Vec<f64> = (0..40).map(|t| 10.0 + 0.3 * t as f64 + ((t * 7) % 5) as f64).collect();
        let cfg = PipelineConfig { smoothing_window: None, ..PipelineConfig::default() };
        let (_, state) = preprocess_pipeline(&col_panel(&series[..30]), &cfg).unwrap();
        let z = state.zscore.as_ref().unwrap();
        // future diffs in model space
        let fut: Vec<f64> = (30..40).map(|t| (series[t] - series[t - 1] - z.mu[0]) / z.sigma[0]).collect();
        let anchor = state.anchor.as_ref().unwrap().last_levels.clone();
        let levels = state.invert(&Matrix::from_vec(10, 1, fut), &[0], &anchor).unwrap();
        for h in 0..10 {
            assert!((levels[(h, 0)] - series[30 + h]).abs() < 1e-9);
        }
    }
}
