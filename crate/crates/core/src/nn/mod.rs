//! Fixed-architecture neural-network kernels with hand-written backward
//! passes. Everything is `f64`.
//!
//! Layers hold their parameters in plain matrices and vectors. A gradient is
//! stored in a value of the same type as the layer, so optimizers and
//! gradient checks can walk parameters and gradients in lockstep through
//! [`Parameters::slices`].

mod dense;
mod graph;
mod loss;
mod lstm;
mod rmsprop;

pub use dense::{Activation, DenseCache, DenseLayer};
pub use graph::{GraphCache, GraphLayer};
pub use loss::mse_loss;
pub use lstm::{LstmCache, LstmLayer};
pub use rmsprop::{rmsprop_step, RmsPropState};

use alloc::vec::Vec;

use thiserror::Error;

use crate::fmath;
use crate::linalg::Matrix;
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
}

/// Trainable parameters exposed as flat slices in a fixed order.
pub trait Parameters {
    fn slices(&self) -> Vec<&[f64]>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    fn fill(&mut self, value: f64) {
        for s in self.slices_mut() {
            s.fill(value);
        }
    }

    /// All parameters concatenated in slice order.
    fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    fn scale_all(&mut self, factor: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// Same-shaped value with every parameter zero; used as a gradient buffer.
pub fn zeros_like<P: Parameters + Clone>(p: &P) -> P {
    let mut z = p.clone();
    z.fill(0.0);
    z
}

/// Glorot-uniform matrix: entries in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Matrix {
    let limit = fmath::sqrt(6.0 / (fan_in + fan_out) as f64);
    let data = (0..rows * cols).map(|_| rng::uniform(rng, -limit, limit)).collect();
    Matrix::from_vec(rows, cols, data)
}
