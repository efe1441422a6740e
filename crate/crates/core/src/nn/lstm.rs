use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{glorot, NnError, Parameters};
use crate::fmath;
use crate::linalg::Matrix;
use crate::rng::Rng;

/// Standard LSTM cell unrolled over a sequence.
///
/// With `v_t = [x_t, h_{t-1}]`:
///
/// ```text
/// f = σ(v W_f + b_f)   i = σ(v W_i + b_i)   o = σ(v W_o + b_o)
/// g = tanh(v W_c + b_c)
/// c_t = f ⊙ c_{t-1} + i ⊙ g
/// h_t = o ⊙ tanh(c_t)
/// ```
///
/// Initial hidden and cell states are zero. Gate matrices are
/// `(input + hidden) × hidden`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_f: Matrix,
    pub w_i: Matrix,
    pub w_o: Matrix,
    pub w_c: Matrix,
    pub b_f: Vec<f64>,
    pub b_i: Vec<f64>,
    pub b_o: Vec<f64>,
    pub b_c: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Step {
    v: Vec<f64>,
    f: Vec<f64>,
    i: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    steps: Vec<Step>,
}

fn affine(v: &[f64], w: &Matrix, b: &[f64]) -> Vec<f64> {
    let mut z = b.to_vec();
    for (r, &vr) in v.iter().enumerate() {
        if vr == 0.0 {
            continue;
        }
        for (zo, wo) in z.iter_mut().zip(w.row(r)) {
            *zo += vr * wo;
        }
    }
    z
}

impl LstmLayer {
    /// Glorot-uniform gate weights, zero biases except the forget gate (1.0).
    pub fn glorot(input_dim: usize, hidden_dim: usize, rng: &mut Rng) -> Self {
        let n = input_dim + hidden_dim;
        Self {
            input_dim,
            hidden_dim,
            w_f: glorot(n, hidden_dim, n, hidden_dim, rng),
            w_i: glorot(n, hidden_dim, n, hidden_dim, rng),
            w_o: glorot(n, hidden_dim, n, hidden_dim, rng),
            w_c: glorot(n, hidden_dim, n, hidden_dim, rng),
            b_f: vec![1.0; hidden_dim],
            b_i: vec![0.0; hidden_dim],
            b_o: vec![0.0; hidden_dim],
            b_c: vec![0.0; hidden_dim],
        }
    }

    /// All-zero weights and biases.
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let n = input_dim + hidden_dim;
        Self {
            input_dim,
            hidden_dim,
            w_f: Matrix::zeros(n, hidden_dim),
            w_i: Matrix::zeros(n, hidden_dim),
            w_o: Matrix::zeros(n, hidden_dim),
            w_c: Matrix::zeros(n, hidden_dim),
            b_f: vec![0.0; hidden_dim],
            b_i: vec![0.0; hidden_dim],
            b_o: vec![0.0; hidden_dim],
            b_c: vec![0.0; hidden_dim],
        }
    }

    /// Hidden states for every step (`U × hidden`) and the final hidden state.
    pub fn forward(&self, seq: &Matrix) -> Result<(Matrix, Vec<f64>), NnError> {
        if seq.cols() != self.input_dim {
            return Err(NnError::DimensionMismatch("lstm input width"));
        }
        if seq.rows() == 0 {
            return Err(NnError::DimensionMismatch("lstm needs at least one step"));
        }
        let (hs, _) = self.forward_cached(seq);
        let last = hs.row(hs.rows() - 1).to_vec();
        Ok((hs, last))
    }

    pub fn forward_cached(&self, seq: &Matrix) -> (Matrix, LstmCache) {
        let hd = self.hidden_dim;
        let mut h = vec![0.0; hd];
        let mut c = vec![0.0; hd];
        let mut hs = Matrix::zeros(seq.rows(), hd);
        let mut steps = Vec::with_capacity(seq.rows());
        for t in 0..seq.rows() {
            let mut v = Vec::with_capacity(self.input_dim + hd);
            v.extend_from_slice(seq.row(t));
            v.extend_from_slice(&h);
            let f: Vec<f64> = affine(&v, &self.w_f, &self.b_f).into_iter().map(fmath::sigmoid).collect();
            let i: Vec<f64> = affine(&v, &self.w_i, &self.b_i).into_iter().map(fmath::sigmoid).collect();
            let o: Vec<f64> = affine(&v, &self.w_o, &self.b_o).into_iter().map(fmath::sigmoid).collect();
            let g: Vec<f64> = affine(&v, &self.w_c, &self.b_c).into_iter().map(fmath::tanh).collect();
            let c_prev = c.clone();
            for k in 0..hd {
                c[k] = f[k] * c_prev[k] + i[k] * g[k];
            }
            let tanh_c: Vec<f64> = c.iter().map(|&x| fmath::tanh(x)).collect();
            for k in 0..hd {
                h[k] = o[k] * tanh_c[k];
            }
            hs.row_mut(t).copy_from_slice(&h);
            steps.push(Step { v, f, i, o, g, c_prev, tanh_c });
        }
        (hs, LstmCache { steps })
    }

    /// Backpropagation through time. `dh` holds `∂L/∂h_t` for every step
    /// (rows of zeros where a step's output is unused). Accumulates weight
    /// gradients into `grads` and returns `∂L/∂x_t` as a `U × input` matrix.
    pub fn backward(&self, cache: &LstmCache, dh: &Matrix, grads: &mut LstmLayer) -> Matrix {
        let hd = self.hidden_dim;
        let n_in = self.input_dim;
        let steps = &cache.steps;
        let mut dx = Matrix::zeros(steps.len(), n_in);
        let mut dh_next = vec![0.0; hd];
        let mut dc_next = vec![0.0; hd];
        let mut dzf = vec![0.0; hd];
        let mut dzi = vec![0.0; hd];
        let mut dzo = vec![0.0; hd];
        let mut dzg = vec![0.0; hd];
        for t in (0..steps.len()).rev() {
            let s = &steps[t];
            for k in 0..hd {
                let dh_k = dh[(t, k)] + dh_next[k];
                let d_o = dh_k * s.tanh_c[k];
                let dc = dh_k * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]) + dc_next[k];
                let d_f = dc * s.c_prev[k];
                let d_i = dc * s.g[k];
                let d_g = dc * s.i[k];
                dc_next[k] = dc * s.f[k];
                dzf[k] = d_f * s.f[k] * (1.0 - s.f[k]);
                dzi[k] = d_i * s.i[k] * (1.0 - s.i[k]);
                dzo[k] = d_o * s.o[k] * (1.0 - s.o[k]);
                dzg[k] = d_g * (1.0 - s.g[k] * s.g[k]);
            }
            for k in 0..hd {
                grads.b_f[k] += dzf[k];
                grads.b_i[k] += dzi[k];
                grads.b_o[k] += dzo[k];
                grads.b_c[k] += dzg[k];
            }
            for (r, &vr) in s.v.iter().enumerate() {
                if vr != 0.0 {
                    for (gw, d) in [
                        (&mut grads.w_f, &dzf),
                        (&mut grads.w_i, &dzi),
                        (&mut grads.w_o, &dzo),
                        (&mut grads.w_c, &dzg),
                    ] {
                        for (g, dv) in gw.row_mut(r).iter_mut().zip(d.iter()) {
                            *g += vr * dv;
                        }
                    }
                }
                let mut dv = 0.0;
                for (w, d) in [(&self.w_f, &dzf), (&self.w_i, &dzi), (&self.w_o, &dzo), (&self.w_c, &dzg)] {
                    dv += w.row(r).iter().zip(d.iter()).map(|(a, b)| a * b).sum::<f64>();
                }
                if r < n_in {
                    dx[(t, r)] = dv;
                } else {
                    dh_next[r - n_in] = dv;
                }
            }
        }
        dx
    }
}

impl Parameters for LstmLayer {
    fn slices(&self) -> Vec<&[f64]> {
        vec![
            self.w_f.data(),
            self.w_i.data(),
            self.w_o.data(),
            self.w_c.data(),
            &self.b_f,
            &self.b_i,
            &self.b_o,
            &self.b_c,
        ]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_f.data_mut(),
            self.w_i.data_mut(),
            self.w_o.data_mut(),
            self.w_c.data_mut(),
            &mut self.b_f,
            &mut self.b_i,
            &mut self.b_o,
            &mut self.b_c,
        ]
    }
}
