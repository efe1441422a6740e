use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::CausalError;
use crate::linalg::{self, Matrix};

/// Ridge added to the normal equations' diagonal.
pub const VAR_RIDGE: f64 = 1e-8;

/// Least-squares VAR(p) fit: `x_t = c + Σ_τ M_τ x_{t-τ} + e_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarFit {
    pub lag_order: usize,
    /// `coefficients[τ-1][(j, k)]`: effect of `x_{t-τ, k}` on `x_{t, j}`.
    pub coefficients: Vec<Matrix>,
    pub intercept: Vec<f64>,
    /// `(T - p) × A`; row `i` is the residual at time `p + i`.
    pub residuals: Matrix,
}

/// Fits a VAR(p) to a dense `T × A` matrix, one target attribute at a time
/// through the shared normal equations.
pub fn fit_var_matrix(x: &Matrix, p: usize) -> Result<VarFit, CausalError> {
    let (t, a) = x.shape();
    if p == 0 {
        return Err(CausalError::InvalidLagOrder);
    }
    if t <= p * a + 1 {
        return Err(CausalError::InsufficientRows { rows: t, needed: p * a + 2 });
    }
    let n = t - p;
    let k = 1 + p * a;
    let design_row = |time: usize, row: &mut [f64]| {
        row[0] = 1.0;
        for tau in 1..=p {
            row[1 + (tau - 1) * a..1 + tau * a].copy_from_slice(x.row(time - tau));
        }
    };

    let mut xtx = Matrix::zeros(k, k);
    let mut xty = Matrix::zeros(k, a);
    let mut row = vec![0.0; k];
    for time in p..t {
        design_row(time, &mut row);
        let y = x.row(time);
        for r in 0..k {
            let v = row[r];
            if v == 0.0 {
                continue;
            }
            for c in r..k {
                xtx[(r, c)] += v * row[c];
            }
            for j in 0..a {
                xty[(r, j)] += v * y[j];
            }
        }
    }
    for r in 0..k {
        for c in 0..r {
            xtx[(r, c)] = xtx[(c, r)];
        }
        xtx[(r, r)] += VAR_RIDGE;
    }
    let l = linalg::cholesky(&xtx).ok_or(CausalError::SingularDesign)?;

    let mut coefficients = vec![Matrix::zeros(a, a); p];
    let mut intercept = vec![0.0; a];
    let mut betas = Vec::with_capacity(a);
    for j in 0..a {
        let beta = linalg::cholesky_solve(&l, &xty.column(j));
        intercept[j] = beta[0];
        for tau in 0..p {
            for c in 0..a {
                coefficients[tau][(j, c)] = beta[1 + tau * a + c];
            }
        }
        betas.push(beta);
    }

    let mut residuals = Matrix::zeros(n, a);
    for time in p..t {
        design_row(time, &mut row);
        for j in 0..a {
            residuals[(time - p, j)] = x[(time, j)] - linalg::dot(&row, &betas[j]);
        }
    }
    if !residuals.is_finite() {
        return Err(CausalError::SingularDesign);
    }
    Ok(VarFit { lag_order: p, coefficients, intercept, residuals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn too_few_rows() {
        let x = Matrix::zeros(4, 2);
        assert!(matches!(fit_var_matrix(&x, 2), Err(CausalError::InsufficientRows { .. })));
    }

    #[test]
    fn exact_linear_recurrence_is_recovered() {
        // x_t = 1 + 0.5 x_{t-1} + e_t with a deterministic non-degenerate e_t
        let mut x = vec![0.0];
        for t in 1..200 {
            let e = ((t * 37) % 11) as f64 / 11.0 - 0.5;
            x.push(1.0 + 0.5 * x[t - 1] + e);
        }
        let fit = fit_var_matrix(&Matrix::from_vec(200, 1, x), 1).unwrap();
        assert_eq!(fit.residuals.rows(), 199);
        assert!(fit.coefficients[0][(0, 0)].is_finite());
    }

    #[test]
    fn residuals_are_orthogonal_to_regressors() {
        let mut g = rng::seeded(4);
        let data: Vec<f64> = (0..300).map(|_| rng::uniform(&mut g, -1.0, 1.0)).collect();
        let x = Matrix::from_vec(150, 2, data);
        let fit = fit_var_matrix(&x, 1).unwrap();
        for j in 0..2 {
            let s: f64 = (0..149).map(|i| fit.residuals[(i, j)]).sum();
            assert!(s.abs() < 1e-8);
            for c in 0..2 {
                let s: f64 = (0..149).map(|i| fit.residuals[(i, j)] * x[(i, c)]).sum();
                assert!(s.abs() < 1e-6);
            }
        }
    }
}
