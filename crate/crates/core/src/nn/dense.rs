use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{glorot, NnError, Parameters};
use crate::linalg::Matrix;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

/// `activation(Wᵀx + b)` with `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Vec<f64>,
    pre: Vec<f64>,
}

impl DenseCache {
    pub fn input(&self) -> &[f64] {
        &self.input
    }
}

impl DenseLayer {
    pub fn new(weight: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self, NnError> {
        if bias.len() != weight.cols() {
            return Err(NnError::DimensionMismatch("dense bias length must equal output width"));
        }
        Ok(Self { weight, bias, activation })
    }

    pub fn glorot(input: usize, output: usize, activation: Activation, rng: &mut Rng) -> Self {
        Self { weight: glorot(input, output, input, output, rng), bias: vec![0.0; output], activation }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        if x.len() != self.input_dim() {
            return Err(NnError::DimensionMismatch("dense input length"));
        }
        Ok(self.forward_cached(x).0)
    }

    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, DenseCache) {
        let mut pre = self.bias.clone();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (p, w) in pre.iter_mut().zip(self.weight.row(i)) {
                *p += xi * w;
            }
        }
        let out = match self.activation {
            Activation::Identity => pre.clone(),
            Activation::Relu => pre.iter().map(|&v| v.max(0.0)).collect(),
        };
        (out, DenseCache { input: x.to_vec(), pre })
    }

    /// Accumulates parameter gradients into `grads` and returns `∂L/∂x`.
    pub fn backward(&self, cache: &DenseCache, dout: &[f64], grads: &mut DenseLayer) -> Vec<f64> {
        let dpre: Vec<f64> = match self.activation {
            Activation::Identity => dout.to_vec(),
            Activation::Relu => dout.iter().zip(&cache.pre).map(|(d, p)| if *p > 0.0 { *d } else { 0.0 }).collect(),
        };
        for (b, d) in grads.bias.iter_mut().zip(&dpre) {
            *b += d;
        }
        let mut dx = vec![0.0; self.input_dim()];
        for (i, &xi) in cache.input.iter().enumerate() {
            let grow = grads.weight.row_mut(i);
            if xi != 0.0 {
                for (g, d) in grow.iter_mut().zip(&dpre) {
                    *g += xi * d;
                }
            }
            dx[i] = self.weight.row(i).iter().zip(&dpre).map(|(w, d)| w * d).sum();
        }
        dx
    }
}

impl Parameters for DenseLayer {
    fn slices(&self) -> Vec<&[f64]> {
        vec![self.weight.data(), &self.bias]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weight.data_mut(), &mut self.bias]
    }
}
