//! VARLiNGAM causal discovery and the propagation matrix fed to the graph
//! layer.
//!
//! Pipeline: least-squares VAR → DirectLiNGAM on the VAR residuals →
//! lagged effects `B_τ = (I - B0) M_τ` → thresholded adjacency → column
//! normalized propagation matrix with self loops.
//!
//! Two index conventions are in play. Effect matrices (`b0`, `lagged`) use
//! the structural-equation layout: entry `(j, k)` is the effect of `k` on
//! `j`. Adjacency and propagation use the graph layout: entry `(k, j)` is the
//! edge `k → j`, so that `X · propagation` mixes each column with its causes.

mod lingam;
mod var;

pub use lingam::{causal_order, direct_lingam, entropy, estimate_b0, MIN_SAMPLES};
pub use var::{fit_var_matrix, VarFit, VAR_RIDGE};

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Panel;
use crate::fmath;
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CausalError {
    #[error("lag order must be at least 1")]
    InvalidLagOrder,
    #[error("{rows} rows is too few for the VAR design, need at least {needed}")]
    InsufficientRows { rows: usize, needed: usize },
    #[error("least-squares design is singular")]
    SingularDesign,
    #[error("panel has unobserved cells; causal discovery needs a fully observed panel")]
    MaskedInput,
    #[error("residual column {0} has zero variance")]
    DegenerateColumn(usize),
    #[error("{samples} samples is too few for DirectLiNGAM, need at least {needed}")]
    TooFewSamples { samples: usize, needed: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CausalConfig {
    pub lag_order: usize,
    /// Effects with magnitude at or below this are treated as absent, both
    /// when pruning `b0` and when building the adjacency.
    pub edge_threshold: f64,
}

impl Default for CausalConfig {
    fn default() -> Self {
        Self { lag_order: 1, edge_threshold: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalGraph {
    pub attributes: Vec<String>,
    pub threshold: f64,
    pub causal_order: Vec<usize>,
    /// Instantaneous effects, `(j, k)` = effect of `k` on `j`.
    pub b0: Matrix,
    /// Lagged effects `B_τ`, same layout as `b0`.
    pub lagged: Vec<Matrix>,
    /// Binary adjacency, `(k, j) = 1` for an edge `k → j`. Zero diagonal.
    pub adjacency: Matrix,
    /// `adjacency + I`, each column normalized to sum 1.
    pub propagation: Matrix,
}

impl CausalGraph {
    /// Graph from a user-supplied binary adjacency (graph layout), bypassing
    /// discovery.
    pub fn from_adjacency(attributes: Vec<String>, adjacency: &Matrix) -> Result<Self, CausalError> {
        let a = attributes.len();
        if adjacency.shape() != (a, a) {
            return Err(CausalError::DimensionMismatch("adjacency must be A x A"));
        }
        let mut m = Matrix::zeros(a, a);
        for k in 0..a {
            for j in 0..a {
                if k != j && adjacency[(k, j)] != 0.0 {
                    m[(k, j)] = 1.0;
                }
            }
        }
        let propagation = propagation_matrix(&m);
        Ok(Self {
            attributes,
            threshold: 0.0,
            causal_order: (0..a).collect(),
            b0: Matrix::zeros(a, a),
            lagged: Vec::new(),
            adjacency: m,
            propagation,
        })
    }

    /// Edges `k → j` with `k != j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let a = self.adjacency.rows();
        (0..a)
            .flat_map(|k| (0..a).map(move |j| (k, j)))
            .filter(|&(k, j)| self.adjacency[(k, j)] != 0.0)
            .collect()
    }
}

/// VAR(p) on a fully observed panel.
pub fn fit_var(panel: &Panel, p: usize) -> Result<VarFit, CausalError> {
    let x = panel.dense().ok_or(CausalError::MaskedInput)?;
    fit_var_matrix(&x, p)
}

/// `B_τ = (I - B0) M_τ` for every lag.
pub fn compose_lagged_effects(varfit: &VarFit, b0: &Matrix) -> Result<Vec<Matrix>, CausalError> {
    let a = b0.rows();
    if b0.cols() != a || varfit.coefficients.iter().any(|m| m.shape() != (a, a)) {
        return Err(CausalError::DimensionMismatch("B0 and VAR coefficients must be A x A"));
    }
    let mut i_minus_b0 = Matrix::identity(a);
    for r in 0..a {
        for c in 0..a {
            i_minus_b0[(r, c)] -= b0[(r, c)];
        }
    }
    Ok(varfit.coefficients.iter().map(|m| i_minus_b0.matmul(m)).collect())
}

/// Column-normalizes `adjacency + I`.
pub fn propagation_matrix(adjacency: &Matrix) -> Matrix {
    let a = adjacency.rows();
    let mut p = adjacency.clone();
    for i in 0..a {
        p[(i, i)] += 1.0;
    }
    for j in 0..a {
        let s: f64 = (0..a).map(|k| p[(k, j)]).sum();
        if s > 0.0 {
            for k in 0..a {
                p[(k, j)] /= s;
            }
        }
    }
    p
}

/// Thresholds a combined-influence matrix (graph layout, `(k, j)` = influence
/// of `k` on `j`) into the adjacency and its propagation matrix. Diagonal
/// entries never become edges.
pub fn adjacency_from_influence(influence: &Matrix, threshold: f64) -> (Matrix, Matrix) {
    let a = influence.rows();
    let mut m = Matrix::zeros(a, a);
    for k in 0..a {
        for j in 0..a {
            if k != j && influence[(k, j)] > threshold {
                m[(k, j)] = 1.0;
            }
        }
    }
    let p = propagation_matrix(&m);
    (m, p)
}

/// Combined influence `|B0| + Σ|B_τ|`, transposed into graph layout.
pub fn combined_influence(b0: &Matrix, lagged: &[Matrix]) -> Matrix {
    let a = b0.rows();
    let mut c = Matrix::zeros(a, a);
    for k in 0..a {
        for j in 0..a {
            c[(k, j)] = fmath::abs(b0[(j, k)]) + lagged.iter().map(|b| fmath::abs(b[(j, k)])).sum::<f64>();
        }
    }
    c
}

pub fn extract_adjacency(b0: &Matrix, lagged: &[Matrix], threshold: f64) -> (Matrix, Matrix) {
    adjacency_from_influence(&combined_influence(b0, lagged), threshold)
}

/// Full VARLiNGAM discovery on a fully observed (normally preprocessed) panel.
///
/// Attributes that are constant over the panel carry no information about
/// direction; they are left out of the VAR and LiNGAM stages and end up with
/// no edges.
pub fn discover(panel: &Panel, config: &CausalConfig) -> Result<CausalGraph, CausalError> {
    let x = panel.dense().ok_or(CausalError::MaskedInput)?;
    let a = x.cols();
    let active: Vec<usize> = (0..a)
        .filter(|&j| {
            let col = x.column(j);
            col.iter().any(|v| *v != col[0])
        })
        .collect();
    let attributes: Vec<String> = panel.schema().names().to_vec();

    let mut b0 = Matrix::zeros(a, a);
    let mut lagged = alloc::vec![Matrix::zeros(a, a); config.lag_order];
    let mut order: Vec<usize> = Vec::with_capacity(a);

    if !active.is_empty() {
        let sub = x.select_columns(&active);
        let fit = fit_var_matrix(&sub, config.lag_order)?;
        let (sub_order, sub_b0) = direct_lingam(&fit.residuals, config.edge_threshold)?;
        let sub_lagged = compose_lagged_effects(&fit, &sub_b0)?;
        for (r, &jr) in active.iter().enumerate() {
            for (c, &jc) in active.iter().enumerate() {
                b0[(jr, jc)] = sub_b0[(r, c)];
                for (tau, l) in sub_lagged.iter().enumerate() {
                    lagged[tau][(jr, jc)] = l[(r, c)];
                }
            }
        }
        order.extend(sub_order.iter().map(|&i| active[i]));
    }
    order.extend((0..a).filter(|j| !active.contains(j)));

    let (adjacency, propagation) = extract_adjacency(&b0, &lagged, config.edge_threshold);
    Ok(CausalGraph {
        attributes,
        threshold: config.edge_threshold,
        causal_order: order,
        b0,
        lagged,
        adjacency,
        propagation,
    })
}

/// Largest `|entry|` on or above the diagonal of `b0` after permuting rows
/// and columns into `order`; zero for an acyclic instantaneous graph.
pub fn upper_triangle_violation(b0: &Matrix, order: &[usize]) -> f64 {
    let mut worst: f64 = 0.0;
    for (r, &jr) in order.iter().enumerate() {
        for &jc in &order[r..] {
            worst = worst.max(fmath::abs(b0[(jr, jc)]));
        }
    }
    worst
}
