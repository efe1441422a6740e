use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{NnError, Parameters};
use crate::fmath;

/// RMSProp: `acc ← ρ acc + (1-ρ) g²`, `θ ← θ - η g / sqrt(acc + ε)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsPropState {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    accumulators: Vec<Vec<f64>>,
}

impl RmsPropState {
    pub fn new(learning_rate: f64, rho: f64, epsilon: f64) -> Self {
        Self { learning_rate, rho, epsilon, accumulators: Vec::new() }
    }

    /// `ρ = 0.9`, `ε = 1e-8`.
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self::new(learning_rate, 0.9, 1e-8)
    }

    pub fn accumulators(&self) -> &[Vec<f64>] {
        &self.accumulators
    }

    /// Update of a single slice; `acc` must have the same length.
    pub fn step_slice(&self, acc: &mut [f64], params: &mut [f64], grads: &[f64]) {
        for ((a, p), &g) in acc.iter_mut().zip(params.iter_mut()).zip(grads) {
            *a = self.rho * *a + (1.0 - self.rho) * g * g;
            *p -= self.learning_rate * g / fmath::sqrt(*a + self.epsilon);
        }
    }
}

pub fn rmsprop_step<P: Parameters>(state: &mut RmsPropState, params: &mut P, grads: &P) -> Result<(), NnError> {
    let gs = grads.slices();
    let mut ps = params.slices_mut();
    if gs.len() != ps.len() || gs.iter().zip(ps.iter()).any(|(g, p)| g.len() != p.len()) {
        return Err(NnError::DimensionMismatch("rmsprop: parameter and gradient layouts differ"));
    }
    if state.accumulators.is_empty() {
        state.accumulators = gs.iter().map(|g| vec![0.0; g.len()]).collect();
    } else if state.accumulators.len() != gs.len() || state.accumulators.iter().zip(&gs).any(|(a, g)| a.len() != g.len()) {
        return Err(NnError::DimensionMismatch("rmsprop: accumulator layout differs from parameters"));
    }
    let mut accs = core::mem::take(&mut state.accumulators);
    for ((acc, p), g) in accs.iter_mut().zip(ps.iter_mut()).zip(gs) {
        state.step_slice(acc, p, g);
    }
    state.accumulators = accs;
    Ok(())
}
