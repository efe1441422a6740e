//! Similarity between panels: summary features with a diagonal Gaussian
//! mixture, Eros eigenstructure similarity, and Manhattan distance.
//!
//! All comparisons run on a shared window of rows and a shared set of
//! attributes, normally the attributes the cold-start target observes on
//! every row of the window. Values are used in original units.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Panel;
use crate::fmath;
use crate::linalg::{symmetric_eigen, Matrix};
use crate::rng;

/// Lower bound on every GMM variance.
pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimilarityError {
    #[error("attribute {attr} has {observed} observed values in the window, need at least {needed}")]
    InsufficientData { attr: usize, observed: usize, needed: usize },
    #[error("{samples} samples cannot support {components} mixture components")]
    TooFewSamples { samples: usize, components: usize },
    #[error("component count must be at least 1")]
    ZeroComponents,
    #[error("feature vectors have different lengths")]
    FeatureLength,
    #[error("covariance of panel `{0}` is degenerate")]
    DegenerateCovariance(String),
    #[error("panels do not share a schema")]
    SchemaMismatch,
    #[error("window [{t0}, {t1}) is invalid for a panel with {rows} rows")]
    LengthMismatch { t0: usize, t1: usize, rows: usize },
    #[error("cell ({row}, {col}) of panel `{panel}` is unobserved")]
    Unobserved { panel: String, row: usize, col: usize },
    #[error("no attributes to compare")]
    NoAttributes,
    #[error("weight vector length {got} does not match {expected} attributes")]
    WeightLength { expected: usize, got: usize },
}

/// Attributes observed on every row of `[t0, t1)` of `panel`.
pub fn observed_attributes(panel: &Panel, t0: usize, t1: usize) -> Vec<usize> {
    (0..panel.cols()).filter(|&j| panel.column_observed_in(j, t0, t1.min(panel.rows()))).collect()
}

fn check_window(panel: &Panel, t0: usize, t1: usize) -> Result<(), SimilarityError> {
    if t0 >= t1 || t1 > panel.rows() {
        return Err(SimilarityError::LengthMismatch { t0, t1, rows: panel.rows() });
    }
    Ok(())
}

/// Per-attribute mean, population standard deviation and lag-1
/// autocorrelation over a window, flattened in attribute order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelFeatures {
    pub attributes: Vec<usize>,
    pub values: Vec<f64>,
}

/// Summary features of `panel` on `attrs` over rows `[t0, t1)`. Only
/// observed cells are read. A constant attribute has autocorrelation 0.
pub fn panel_features(panel: &Panel, attrs: &[usize], t0: usize, t1: usize) -> Result<PanelFeatures, SimilarityError> {
    check_window(panel, t0, t1)?;
    let mut values = Vec::with_capacity(3 * attrs.len());
    for &j in attrs {
        let col: Vec<Option<f64>> = (t0..t1).map(|t| panel.get(t, j)).collect();
        let obs: Vec<f64> = col.iter().flatten().copied().collect();
        if obs.len() < 3 {
            return Err(SimilarityError::InsufficientData { attr: j, observed: obs.len(), needed: 3 });
        }
        let n = obs.len() as f64;
        let mean = obs.iter().sum::<f64>() / n;
        let var = obs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let mut num = 0.0;
        for w in col.windows(2) {
            if let (Some(a), Some(b)) = (w[0], w[1]) {
                num += (a - mean) * (b - mean);
            }
        }
        let denom = var * n;
        let ac = if denom > 0.0 { num / denom } else { 0.0 };
        values.extend_from_slice(&[mean, fmath::sqrt(var), ac]);
    }
    Ok(PanelFeatures { attributes: attrs.to_vec(), values })
}

/// Rescales each feature dimension to zero mean and unit variance across
/// the samples; constant dimensions are only centered.
pub fn standardize_features(samples: &mut [Vec<f64>]) {
    let Some(d) = samples.first().map(Vec::len) else {
        return;
    };
    let n = samples.len() as f64;
    for i in 0..d {
        let mean = samples.iter().map(|s| s[i]).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s[i] - mean) * (s[i] - mean)).sum::<f64>() / n;
        let sd = fmath::sqrt(var);
        for s in samples.iter_mut() {
            s[i] -= mean;
            if sd > 0.0 {
                s[i] /= sd;
            }
        }
    }
}

/// Gaussian mixture with diagonal covariances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    /// Total log-likelihood at every E-step, in order.
    pub history: Vec<f64>,
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn component_log_density(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    let mut s = 0.0;
    for ((xi, mi), vi) in x.iter().zip(mean).zip(var) {
        let d = xi - mi;
        s += LN_2PI + fmath::ln(*vi) + d * d / vi;
    }
    -0.5 * s
}

impl GmmModel {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    /// Posterior component probabilities of `x` and its log density.
    pub fn responsibilities(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let logs: Vec<f64> = (0..self.components())
            .map(|c| {
                if self.weights[c] > 0.0 {
                    fmath::ln(self.weights[c]) + component_log_density(x, &self.means[c], &self.variances[c])
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let total = fmath::log_sum_exp(&logs);
        (logs.iter().map(|l| fmath::exp(l - total)).collect(), total)
    }

    /// Component with the largest responsibility (lowest index on ties).
    pub fn assign(&self, x: &[f64]) -> usize {
        let (r, _) = self.responsibilities(x);
        let mut best = 0;
        for (c, &v) in r.iter().enumerate() {
            if v > r[best] {
                best = c;
            }
        }
        best
    }
}

/// EM for a `k`-component diagonal mixture.
///
/// Initial means are `k` distinct samples drawn with the seeded generator,
/// initial variances the per-dimension variance of all samples, weights
/// uniform. Stops when the log-likelihood changes by less than `1e-6` or
/// after 200 iterations.
pub fn gmm_fit(samples: &[Vec<f64>], k: usize, seed: u64) -> Result<GmmModel, SimilarityError> {
    if k == 0 {
        return Err(SimilarityError::ZeroComponents);
    }
    let n = samples.len();
    if n < k {
        return Err(SimilarityError::TooFewSamples { samples: n, components: k });
    }
    let d = samples[0].len();
    if samples.iter().any(|s| s.len() != d) {
        return Err(SimilarityError::FeatureLength);
    }
    let nf = n as f64;
    let mut global_var = vec![0.0; d];
    for i in 0..d {
        let mean = samples.iter().map(|s| s[i]).sum::<f64>() / nf;
        global_var[i] = (samples.iter().map(|s| (s[i] - mean) * (s[i] - mean)).sum::<f64>() / nf).max(VARIANCE_FLOOR);
    }
    let mut g = rng::seeded(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = g.gen_range(i..n);
        idx.swap(i, j);
    }
    let mut model = GmmModel {
        weights: vec![1.0 / k as f64; k],
        means: idx[..k].iter().map(|&i| samples[i].clone()).collect(),
        variances: vec![global_var; k],
        log_likelihood: f64::NEG_INFINITY,
        history: Vec::new(),
    };
    let mut resp = vec![vec![0.0; k]; n];
    for _ in 0..200 {
        let mut ll = 0.0;
        for (i, s) in samples.iter().enumerate() {
            let (r, l) = model.responsibilities(s);
            resp[i] = r;
            ll += l;
        }
        let prev = model.log_likelihood;
        model.log_likelihood = ll;
        model.history.push(ll);
        if prev.is_finite() && fmath::abs(ll - prev) < 1e-6 {
            break;
        }
        for c in 0..k {
            let nk: f64 = resp.iter().map(|r| r[c]).sum();
            if nk <= 0.0 {
                model.weights[c] = 0.0;
                continue;
            }
            model.weights[c] = nk / nf;
            for i in 0..d {
                let mean = samples.iter().zip(&resp).map(|(s, r)| r[c] * s[i]).sum::<f64>() / nk;
                let var = samples.iter().zip(&resp).map(|(s, r)| r[c] * (s[i] - mean) * (s[i] - mean)).sum::<f64>() / nk;
                model.means[c][i] = mean;
                model.variances[c][i] = var.max(VARIANCE_FLOOR);
            }
        }
    }
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMethod {
    Gmm,
    Eros,
    Manhattan,
}

/// Candidates from most to least similar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRanking {
    pub method: SimilarityMethod,
    pub entries: Vec<(String, f64)>,
}

impl SimilarityRanking {
    /// Sorts by score descending, ties by id, so the result does not depend
    /// on the input order.
    pub fn new(method: SimilarityMethod, mut entries: Vec<(String, f64)>) -> Self {
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self { method, entries }
    }

    /// Ids of the first `k` entries.
    pub fn top(&self, k: usize) -> Vec<String> {
        self.entries.iter().take(k).map(|(id, _)| id.clone()).collect()
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    fmath::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Candidates in the target's mixture component first, then the rest, each
/// group by Euclidean feature distance. Score = `[same component] + 1/(1+distance)`.
pub fn gmm_rank(target: &[f64], model: &GmmModel, candidates: &[(String, Vec<f64>)]) -> SimilarityRanking {
    let home = model.assign(target);
    let entries = candidates
        .iter()
        .map(|(id, f)| {
            let same = if model.assign(f) == home { 1.0 } else { 0.0 };
            (id.clone(), same + 1.0 / (1.0 + euclidean(target, f)))
        })
        .collect();
    SimilarityRanking::new(SimilarityMethod::Gmm, entries)
}

/// Eigen-decomposition of a panel's covariance over a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSummary {
    /// Descending, clamped at 0.
    pub values: Vec<f64>,
    /// Column `i` is the eigenvector of `values[i]`.
    pub vectors: Matrix,
}

/// Population covariance of `attrs` over rows `[t0, t1)` and its
/// eigenstructure. Every cell read must be observed.
pub fn eros_summary(panel: &Panel, attrs: &[usize], t0: usize, t1: usize) -> Result<EigenSummary, SimilarityError> {
    check_window(panel, t0, t1)?;
    let a = attrs.len();
    if a == 0 {
        return Err(SimilarityError::NoAttributes);
    }
    if t1 - t0 < a + 1 {
        return Err(SimilarityError::InsufficientData { attr: attrs[0], observed: t1 - t0, needed: a + 1 });
    }
    let n = (t1 - t0) as f64;
    let mut x = Matrix::zeros(t1 - t0, a);
    for t in t0..t1 {
        for (c, &j) in attrs.iter().enumerate() {
            x[(t - t0, c)] = panel.get(t, j).ok_or_else(|| SimilarityError::Unobserved {
                panel: String::from(panel.id()),
                row: t,
                col: j,
            })?;
        }
    }
    let means: Vec<f64> = (0..a).map(|c| x.column(c).iter().sum::<f64>() / n).collect();
    let mut cov = Matrix::zeros(a, a);
    for r in 0..x.rows() {
        for i in 0..a {
            let di = x[(r, i)] - means[i];
            for k in i..a {
                cov[(i, k)] += di * (x[(r, k)] - means[k]);
            }
        }
    }
    for i in 0..a {
        for k in i..a {
            let v = cov[(i, k)] / n;
            cov[(i, k)] = v;
            cov[(k, i)] = v;
        }
    }
    let (values, vectors) = symmetric_eigen(&cov);
    let values: Vec<f64> = values.into_iter().map(|v| v.max(0.0)).collect();
    if values.iter().sum::<f64>() <= 0.0 {
        return Err(SimilarityError::DegenerateCovariance(String::from(panel.id())));
    }
    Ok(EigenSummary { values, vectors })
}

/// `Σ_i w_i |⟨u_i, v_i⟩|`, clamped to `[0, 1]`.
pub fn eros_from_summaries(a: &EigenSummary, b: &EigenSummary, w: &[f64]) -> Result<f64, SimilarityError> {
    let n = a.values.len();
    if b.values.len() != n {
        return Err(SimilarityError::SchemaMismatch);
    }
    if w.len() != n {
        return Err(SimilarityError::WeightLength { expected: n, got: w.len() });
    }
    let mut s = 0.0;
    for (i, wi) in w.iter().enumerate() {
        let dot: f64 = (0..n).map(|r| a.vectors[(r, i)] * b.vectors[(r, i)]).sum();
        s += wi * fmath::abs(dot);
    }
    Ok(s.clamp(0.0, 1.0))
}

/// Eros similarity of two panels on `attrs` over `[t0, t1)`.
pub fn eros_similarity(
    a: &Panel,
    b: &Panel,
    attrs: &[usize],
    t0: usize,
    t1: usize,
    w: &[f64],
) -> Result<f64, SimilarityError> {
    if a.schema().names() != b.schema().names() {
        return Err(SimilarityError::SchemaMismatch);
    }
    eros_from_summaries(&eros_summary(a, attrs, t0, t1)?, &eros_summary(b, attrs, t0, t1)?, w)
}

/// Mean over panels of the normalized eigenvalue spectra, renormalized to sum 1.
pub fn eros_weights(summaries: &[EigenSummary]) -> Result<Vec<f64>, SimilarityError> {
    let first = summaries.first().ok_or(SimilarityError::NoAttributes)?;
    let n = first.values.len();
    let mut w = vec![0.0; n];
    for s in summaries {
        if s.values.len() != n {
            return Err(SimilarityError::SchemaMismatch);
        }
        let total: f64 = s.values.iter().sum();
        for (wi, v) in w.iter_mut().zip(&s.values) {
            *wi += v / total;
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

/// `Σ_t Σ_j |a[t][j] - b[t][j]|` over `attrs` and rows `[t0, t1)`.
pub fn manhattan_distance(a: &Panel, b: &Panel, attrs: &[usize], t0: usize, t1: usize) -> Result<f64, SimilarityError> {
    if a.schema().names() != b.schema().names() {
        return Err(SimilarityError::SchemaMismatch);
    }
    check_window(a, t0, t1)?;
    check_window(b, t0, t1)?;
    let mut d = 0.0;
    for t in t0..t1 {
        for &j in attrs {
            let unobserved = |p: &Panel| SimilarityError::Unobserved { panel: String::from(p.id()), row: t, col: j };
            let x = a.get(t, j).ok_or_else(|| unobserved(a))?;
            let y = b.get(t, j).ok_or_else(|| unobserved(b))?;
            d += fmath::abs(x - y);
        }
    }
    Ok(d)
}
