use alloc::vec::Vec;

use super::ModelError;
use crate::data::Panel;
use crate::linalg::Matrix;

/// One supervised example: the lookback window, the known future values and
/// the targets for the horizon following `origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub origin: usize,
    /// `U × A`, rows `origin-U+1 ..= origin`.
    pub x: Matrix,
    /// `H × |known|`, rows `origin+1 ..= origin+H`.
    pub known_future: Matrix,
    /// `H × |targets|`, same rows.
    pub target: Matrix,
}

/// Builds the sample at `origin`, or `None` if any required cell is unobserved.
pub fn window_at(panel: &Panel, origin: usize, lookback: usize, horizon: usize) -> Option<WindowSample> {
    if origin + 1 < lookback || origin + horizon >= panel.rows() {
        return None;
    }
    let schema = panel.schema();
    let known = schema.known_indices();
    let targets = schema.target_indices();
    let a = panel.cols();
    let mut x = Matrix::zeros(lookback, a);
    for (r, t) in (origin + 1 - lookback..=origin).enumerate() {
        for j in 0..a {
            x[(r, j)] = panel.get(t, j)?;
        }
    }
    let mut known_future = Matrix::zeros(horizon, known.len());
    let mut target = Matrix::zeros(horizon, targets.len());
    for h in 0..horizon {
        let t = origin + 1 + h;
        for (k, &j) in known.iter().enumerate() {
            known_future[(h, k)] = panel.get(t, j)?;
        }
        for (k, &j) in targets.iter().enumerate() {
            target[(h, k)] = panel.get(t, j)?;
        }
    }
    Some(WindowSample { origin, x, known_future, target })
}

/// Every complete sample with origin in `[U-1, T-H-1]`; samples touching an
/// unobserved cell are dropped.
pub fn make_windows(panel: &Panel, lookback: usize, horizon: usize) -> Result<Vec<WindowSample>, ModelError> {
    make_windows_in(panel, lookback, horizon, 0, panel.rows())
}

/// Like [`make_windows`], restricted to origins `t` whose target rows lie in
/// `[first_target, end)`, i.e. `t + 1 >= first_target` and `t + H < end`.
pub fn make_windows_in(
    panel: &Panel,
    lookback: usize,
    horizon: usize,
    first_target: usize,
    end: usize,
) -> Result<Vec<WindowSample>, ModelError> {
    if lookback == 0 || horizon == 0 {
        return Err(ModelError::InvalidConfig("lookback and horizon must be at least 1"));
    }
    if panel.rows() < lookback + horizon {
        return Err(ModelError::PanelTooShort { rows: panel.rows(), needed: lookback + horizon });
    }
    let end = end.min(panel.rows());
    let lo = (lookback - 1).max(first_target.saturating_sub(1));
    if end < horizon + 1 {
        return Ok(Vec::new());
    }
    let hi = end - horizon - 1;
    Ok((lo..=hi).filter_map(|t| window_at(panel, t, lookback, horizon)).collect())
}
