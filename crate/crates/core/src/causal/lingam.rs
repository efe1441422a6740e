//! DirectLiNGAM on VAR residuals.
//!
//! The causal order is built greedily: at each step the most exogenous of the
//! remaining variables is the one whose pairwise likelihood-ratio scores
//! against every other remaining variable are least negative. Differential
//! entropies use the maximum-entropy approximation with the usual LiNGAM
//! constants.

use alloc::vec;
use alloc::vec::Vec;

use super::CausalError;
use crate::fmath;
use crate::linalg::{self, Matrix};

pub const MIN_SAMPLES: usize = 50;

const K1: f64 = 79.047;
const K2: f64 = 7.4129;
const GAMMA: f64 = 0.37457;
/// Entropy of a standard normal, `(1 + ln 2π) / 2`.
const GAUSS_ENTROPY: f64 = 1.418_938_533_204_672_7;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn std_dev(x: &[f64]) -> f64 {
    let m = mean(x);
    fmath::sqrt(x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64)
}

fn standardize(x: &[f64]) -> Vec<f64> {
    let m = mean(x);
    let s = std_dev(x).max(1e-300);
    x.iter().map(|v| (v - m) / s).collect()
}

/// Maximum-entropy approximation of the differential entropy of a
/// standardized sample.
pub fn entropy(u: &[f64]) -> f64 {
    let n = u.len() as f64;
    let lc = u.iter().map(|&v| fmath::ln_cosh(v)).sum::<f64>() / n;
    let ge = u.iter().map(|&v| v * fmath::exp(-0.5 * v * v)).sum::<f64>() / n;
    GAUSS_ENTROPY - K1 * (lc - GAMMA) * (lc - GAMMA) - K2 * ge * ge
}

/// `xi - (cov(xi, xj) / var(xj)) xj` for zero-mean inputs.
fn residual(xi: &[f64], xj: &[f64]) -> Vec<f64> {
    let mi = mean(xi);
    let mj = mean(xj);
    let n = xi.len() as f64;
    let cov = xi.iter().zip(xj).map(|(a, b)| (a - mi) * (b - mj)).sum::<f64>() / n;
    let var = xj.iter().map(|b| (b - mj) * (b - mj)).sum::<f64>() / n;
    let beta = if var > 0.0 { cov / var } else { 0.0 };
    xi.iter().zip(xj).map(|(a, b)| a - beta * b).collect()
}

/// Likelihood-ratio score of "i causes j" against "j causes i" for
/// standardized columns with precomputed entropies. Positive favours i → j.
fn pairwise_score(xi: &[f64], xj: &[f64], hi: f64, hj: f64) -> f64 {
    let ri = residual(xi, xj);
    let rj = residual(xj, xi);
    let si = std_dev(&ri);
    let sj = std_dev(&rj);
    if si < 1e-12 || sj < 1e-12 {
        // perfectly collinear pair carries no direction information
        return 0.0;
    }
    let ri: Vec<f64> = ri.iter().map(|v| v / si).collect();
    let rj: Vec<f64> = rj.iter().map(|v| v / sj).collect();
    (hj + entropy(&ri)) - (hi + entropy(&rj))
}

/// Column-wise view of `m` (columns are what every step works on).
fn columns(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.cols()).map(|j| m.column(j)).collect()
}

/// Causal order of the columns of `residuals`.
pub fn causal_order(residuals: &Matrix) -> Result<Vec<usize>, CausalError> {
    let (n, a) = residuals.shape();
    if n < MIN_SAMPLES {
        return Err(CausalError::TooFewSamples { samples: n, needed: MIN_SAMPLES });
    }
    let mut x = columns(residuals);
    for (j, c) in x.iter().enumerate() {
        if std_dev(c) <= 1e-12 * (1.0 + fmath::abs(mean(c))) {
            return Err(CausalError::DegenerateColumn(j));
        }
    }
    let mut remaining: Vec<usize> = (0..a).collect();
    let mut order = Vec::with_capacity(a);
    while !remaining.is_empty() {
        let chosen = if remaining.len() == 1 {
            remaining[0]
        } else {
            let std_cols: Vec<Vec<f64>> = remaining.iter().map(|&j| standardize(&x[j])).collect();
            let ent: Vec<f64> = std_cols.iter().map(|c| entropy(c)).collect();
            let mut best = (f64::INFINITY, remaining[0]);
            for (pi, &i) in remaining.iter().enumerate() {
                let mut m = 0.0;
                for pj in 0..remaining.len() {
                    if pj == pi {
                        continue;
                    }
                    let s = pairwise_score(&std_cols[pi], &std_cols[pj], ent[pi], ent[pj]);
                    let neg = s.min(0.0);
                    m += neg * neg;
                }
                if m < best.0 {
                    best = (m, i);
                }
            }
            best.1
        };
        remaining.retain(|&j| j != chosen);
        let root = x[chosen].clone();
        for &j in &remaining {
            x[j] = residual(&x[j], &root);
        }
        order.push(chosen);
    }
    Ok(order)
}

/// Instantaneous effect matrix consistent with `order`: each variable is
/// regressed on all of its predecessors by least squares, then coefficients
/// with magnitude at or below `prune` are zeroed. Entry `(j, k)` is the
/// effect of `k` on `j`.
pub fn estimate_b0(residuals: &Matrix, order: &[usize], prune: f64) -> Result<Matrix, CausalError> {
    let a = residuals.cols();
    let cols = columns(residuals);
    let centered: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| {
            let m = mean(c);
            c.iter().map(|v| v - m).collect()
        })
        .collect();
    let mut b0 = Matrix::zeros(a, a);
    for pos in 1..order.len() {
        let target = order[pos];
        let preds = &order[..pos];
        let k = preds.len();
        let mut xtx = Matrix::zeros(k, k);
        let mut xty = vec![0.0; k];
        for (r, &pr) in preds.iter().enumerate() {
            for (c, &pc) in preds.iter().enumerate().skip(r) {
                let v = linalg::dot(&centered[pr], &centered[pc]);
                xtx[(r, c)] = v;
                xtx[(c, r)] = v;
            }
            xty[r] = linalg::dot(&centered[pr], &centered[target]);
        }
        let scale = (0..k).map(|i| xtx[(i, i)]).fold(0.0, f64::max).max(1.0);
        for i in 0..k {
            xtx[(i, i)] += 1e-10 * scale;
        }
        let l = linalg::cholesky(&xtx).ok_or(CausalError::SingularDesign)?;
        let beta = linalg::cholesky_solve(&l, &xty);
        for (r, &pr) in preds.iter().enumerate() {
            if fmath::abs(beta[r]) > prune {
                b0[(target, pr)] = beta[r];
            }
        }
    }
    Ok(b0)
}

/// DirectLiNGAM: causal order plus the pruned instantaneous effect matrix.
pub fn direct_lingam(residuals: &Matrix, prune: f64) -> Result<(Vec<usize>, Matrix), CausalError> {
    let order = causal_order(residuals)?;
    let b0 = estimate_b0(residuals, &order, prune)?;
    Ok((order, b0))
}
