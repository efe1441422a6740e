use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{glorot, NnError, Parameters};
use crate::linalg::Matrix;
use crate::rng::Rng;

/// Graph propagation layer `Z = ReLU((X · P) · W)`.
///
/// `P` is the fixed `A × A` propagation matrix (column `j` mixes attribute
/// `j` with its causes); `W` is the learned `A × D_g` weight, shared across
/// time steps. `P` is not a trainable parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphLayer {
    pub propagation: Matrix,
    pub weight: Matrix,
}

#[derive(Debug, Clone)]
pub struct GraphCache {
    mixed: Matrix,
    pre: Matrix,
}

impl GraphLayer {
    pub fn new(propagation: Matrix, weight: Matrix) -> Result<Self, NnError> {
        if propagation.rows() != propagation.cols() || weight.rows() != propagation.rows() {
            return Err(NnError::DimensionMismatch("graph layer: propagation A x A, weight A x D_g"));
        }
        Ok(Self { propagation, weight })
    }

    pub fn glorot(propagation: Matrix, out_dim: usize, rng: &mut Rng) -> Self {
        let a = propagation.rows();
        Self { weight: glorot(a, out_dim, a, out_dim, rng), propagation }
    }

    pub fn attributes(&self) -> usize {
        self.propagation.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix, NnError> {
        if x.cols() != self.attributes() {
            return Err(NnError::DimensionMismatch("graph layer input width"));
        }
        Ok(self.forward_cached(x).0)
    }

    pub fn forward_cached(&self, x: &Matrix) -> (Matrix, GraphCache) {
        let mixed = x.matmul(&self.propagation);
        let pre = mixed.matmul(&self.weight);
        let mut z = pre.clone();
        z.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        (z, GraphCache { mixed, pre })
    }

    /// Accumulates `∂L/∂W`. The input is data, so no input gradient is formed.
    pub fn backward(&self, cache: &GraphCache, dz: &Matrix, grads: &mut GraphLayer) {
        let (u, dg) = dz.shape();
        let a = self.attributes();
        for t in 0..u {
            let mixed = cache.mixed.row(t);
            let pre = cache.pre.row(t);
            let dzr = dz.row(t);
            let dpre: Vec<f64> = (0..dg).map(|k| if pre[k] > 0.0 { dzr[k] } else { 0.0 }).collect();
            for i in 0..a {
                let m = mixed[i];
                if m == 0.0 {
                    continue;
                }
                for (g, d) in grads.weight.row_mut(i).iter_mut().zip(&dpre) {
                    *g += m * d;
                }
            }
        }
    }
}

impl Parameters for GraphLayer {
    fn slices(&self) -> Vec<&[f64]> {
        vec![self.weight.data()]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weight.data_mut()]
    }
}
