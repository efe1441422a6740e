use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::nn::{
    Activation, DenseCache, DenseLayer, GraphCache, GraphLayer, LstmCache, LstmLayer, NnError, Parameters,
};
use crate::rng::Rng;

/// The forecasting network.
///
/// ```text
/// Z      = ReLU((X · P) · W_g)                     U × D_g   (skipped without a graph layer)
/// h      = LSTM_s(... LSTM_1(Z))                   final state, D_l
/// prelim = head(h)                                 H × A
/// fused  = prelim with known-future columns replaced by the supplied values
/// out    = fusion(flatten(fused))                  H × |targets|
/// ```
///
/// `known` and `targets` partition the attribute indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfNetwork {
    pub graph: Option<GraphLayer>,
    pub lstm: Vec<LstmLayer>,
    pub head: DenseLayer,
    pub fusion: DenseLayer,
    attributes: usize,
    horizon: usize,
    known: Vec<usize>,
    targets: Vec<usize>,
}

/// Intermediate values of one forward pass, consumed by [`CdfNetwork::backward`].
#[derive(Debug, Clone)]
pub struct Trace {
    graph: Option<GraphCache>,
    lstm: Vec<LstmCache>,
    steps: usize,
    head: DenseCache,
    fusion: DenseCache,
}

/// Layer widths of a [`CdfNetwork`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Widths {
    pub graph: usize,
    pub lstm: usize,
    pub lstm_layers: usize,
}

impl CdfNetwork {
    /// Glorot-initialized network. `propagation = None` builds the plain LSTM variant.
    pub fn new(
        propagation: Option<Matrix>,
        attributes: usize,
        horizon: usize,
        known: Vec<usize>,
        widths: Widths,
        rng: &mut Rng,
    ) -> Result<Self, NnError> {
        if attributes == 0 || horizon == 0 || widths.lstm == 0 || widths.lstm_layers == 0 || widths.graph == 0 {
            return Err(NnError::DimensionMismatch("network sizes must be positive"));
        }
        if known.iter().any(|&j| j >= attributes) {
            return Err(NnError::DimensionMismatch("known-future index out of range"));
        }
        let targets: Vec<usize> = (0..attributes).filter(|j| !known.contains(j)).collect();
        if targets.is_empty() {
            return Err(NnError::DimensionMismatch("network needs at least one target attribute"));
        }
        let graph = match propagation {
            Some(p) => {
                if p.shape() != (attributes, attributes) {
                    return Err(NnError::DimensionMismatch("propagation must be A x A"));
                }
                Some(GraphLayer::glorot(p, widths.graph, rng))
            }
            None => None,
        };
        let mut input = graph.as_ref().map_or(attributes, |g| g.output_dim());
        let mut lstm = Vec::with_capacity(widths.lstm_layers);
        for _ in 0..widths.lstm_layers {
            lstm.push(LstmLayer::glorot(input, widths.lstm, rng));
            input = widths.lstm;
        }
        let head = DenseLayer::glorot(widths.lstm, horizon * attributes, Activation::Identity, rng);
        let fusion = DenseLayer::glorot(horizon * attributes, horizon * targets.len(), Activation::Identity, rng);
        Ok(Self { graph, lstm, head, fusion, attributes, horizon, known, targets })
    }

    /// Assembles a network from explicit layers; shapes are checked.
    pub fn from_layers(
        graph: Option<GraphLayer>,
        lstm: Vec<LstmLayer>,
        head: DenseLayer,
        fusion: DenseLayer,
        horizon: usize,
        known: Vec<usize>,
    ) -> Result<Self, NnError> {
        let attributes = head.output_dim() / horizon.max(1);
        let targets: Vec<usize> = (0..attributes).filter(|j| !known.contains(j)).collect();
        let mut input = graph.as_ref().map_or(attributes, |g| g.output_dim());
        if let Some(g) = &graph {
            if g.attributes() != attributes {
                return Err(NnError::DimensionMismatch("graph layer width differs from attribute count"));
            }
        }
        if lstm.is_empty() {
            return Err(NnError::DimensionMismatch("at least one LSTM layer is required"));
        }
        for l in &lstm {
            if l.input_dim != input {
                return Err(NnError::DimensionMismatch("LSTM stack widths do not chain"));
            }
            input = l.hidden_dim;
        }
        if horizon == 0
            || head.output_dim() != horizon * attributes
            || head.input_dim() != input
            || fusion.input_dim() != horizon * attributes
            || fusion.output_dim() != horizon * targets.len()
        {
            return Err(NnError::DimensionMismatch("head shapes inconsistent with horizon and attributes"));
        }
        Ok(Self { graph, lstm, head, fusion, attributes, horizon, known, targets })
    }

    pub fn attributes(&self) -> usize {
        self.attributes
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn known(&self) -> &[usize] {
        &self.known
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    fn check(&self, x: &Matrix, known_future: &Matrix) -> Result<(), NnError> {
        if x.cols() != self.attributes || x.rows() == 0 {
            return Err(NnError::DimensionMismatch("input window must be U x A with U >= 1"));
        }
        if known_future.shape() != (self.horizon, self.known.len()) {
            return Err(NnError::DimensionMismatch("known future must be H x |known|"));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix, known_future: &Matrix) -> Result<Matrix, NnError> {
        Ok(self.forward_trace(x, known_future)?.0)
    }

    /// The `H · A` fusion input for a window: preliminary forecasts with the
    /// known-future positions overwritten.
    pub fn fusion_input(&self, x: &Matrix, known_future: &Matrix) -> Result<Vec<f64>, NnError> {
        self.check(x, known_future)?;
        let (_, trace) = self.forward_trace(x, known_future)?;
        Ok(trace.fusion_input().to_vec())
    }

    pub fn forward_trace(&self, x: &Matrix, known_future: &Matrix) -> Result<(Matrix, Trace), NnError> {
        self.check(x, known_future)?;
        let (mut seq, graph) = match &self.graph {
            Some(g) => {
                let (z, c) = g.forward_cached(x);
                (z, Some(c))
            }
            None => (x.clone(), None),
        };
        let mut lstm = Vec::with_capacity(self.lstm.len());
        for l in &self.lstm {
            let (hs, c) = l.forward_cached(&seq);
            lstm.push(c);
            seq = hs;
        }
        let last = seq.row(seq.rows() - 1);
        let (mut fused, head) = self.head.forward_cached(last);
        let a = self.attributes;
        for h in 0..self.horizon {
            for (k, &j) in self.known.iter().enumerate() {
                fused[h * a + j] = known_future[(h, k)];
            }
        }
        let (out, fusion) = self.fusion.forward_cached(&fused);
        let trace = Trace { graph, lstm, steps: x.rows(), head, fusion };
        Ok((Matrix::from_vec(self.horizon, self.targets.len(), out), trace))
    }

    /// Accumulates `∂L/∂θ` into `grads` given `∂L/∂out` (`H × |targets|`).
    /// No gradient reaches the known-future inputs: their positions in the
    /// fusion vector are data, not functions of the parameters.
    pub fn backward(&self, trace: &Trace, dout: &Matrix, grads: &mut CdfNetwork) -> Result<(), NnError> {
        if dout.shape() != (self.horizon, self.targets.len()) {
            return Err(NnError::DimensionMismatch("output gradient must be H x |targets|"));
        }
        let mut dfused = self.fusion.backward(&trace.fusion, dout.data(), &mut grads.fusion);
        let a = self.attributes;
        for h in 0..self.horizon {
            for &j in &self.known {
                dfused[h * a + j] = 0.0;
            }
        }
        let dlast = self.head.backward(&trace.head, &dfused, &mut grads.head);
        let top = self.lstm.last().map_or(0, |l| l.hidden_dim);
        let mut dseq = Matrix::zeros(trace.steps, top);
        dseq.row_mut(trace.steps - 1).copy_from_slice(&dlast);
        for (i, l) in self.lstm.iter().enumerate().rev() {
            dseq = l.backward(&trace.lstm[i], &dseq, &mut grads.lstm[i]);
        }
        if let (Some(g), Some(cache), Some(gg)) = (&self.graph, &trace.graph, grads.graph.as_mut()) {
            g.backward(cache, &dseq, gg);
        }
        Ok(())
    }
}

impl Trace {
    pub fn fusion_input(&self) -> &[f64] {
        self.fusion.input()
    }
}

impl Parameters for CdfNetwork {
    fn slices(&self) -> Vec<&[f64]> {
        let mut out = vec![];
        if let Some(g) = &self.graph {
            out.extend(g.slices());
        }
        for l in &self.lstm {
            out.extend(l.slices());
        }
        out.extend(self.head.slices());
        out.extend(self.fusion.slices());
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![];
        if let Some(g) = &mut self.graph {
            out.extend(g.slices_mut());
        }
        for l in &mut self.lstm {
            out.extend(l.slices_mut());
        }
        out.extend(self.head.slices_mut());
        out.extend(self.fusion.slices_mut());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::zeros_like;
    use crate::rng;

    fn small(prop: Option<Matrix>) -> CdfNetwork {
        let widths = Widths { graph: 3, lstm: 4, lstm_layers: 2 };
        CdfNetwork::new(prop, 4, 2, vec![0, 2], widths, &mut rng::seeded(5)).unwrap()
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut net = small(Some(Matrix::identity(4)));
        net.fill(0.0);
        let out = net.forward(&Matrix::filled(3, 4, 1.5), &Matrix::filled(2, 2, 7.0)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn known_future_positions_are_overwritten_exactly() {
        let net = small(None);
        let kf = Matrix::from_rows(&[[0.1, 0.2], [0.3, 0.4]]);
        let fused = net.fusion_input(&Matrix::filled(3, 4, 0.5), &kf).unwrap();
        assert_eq!(fused[0], 0.1);
        assert_eq!(fused[2], 0.2);
        assert_eq!(fused[4], 0.3);
        assert_eq!(fused[6], 0.4);
    }

    #[test]
    fn output_depends_on_known_future() {
        let net = small(Some(Matrix::identity(4)));
        let x = Matrix::filled(3, 4, 0.5);
        let a = net.forward(&x, &Matrix::zeros(2, 2)).unwrap();
        let b = net.forward(&x, &Matrix::filled(2, 2, 1.0)).unwrap();
        assert!(a.max_abs_diff(&b) > 0.0);
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradient() {
        let net = small(Some(Matrix::identity(4)));
        let (_, trace) = net.forward_trace(&Matrix::filled(3, 4, 0.5), &Matrix::zeros(2, 2)).unwrap();
        let mut g = zeros_like(&net);
        net.backward(&trace, &Matrix::zeros(2, 2), &mut g).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_shapes() {
        let net = small(None);
        assert!(net.forward(&Matrix::zeros(3, 3), &Matrix::zeros(2, 2)).is_err());
        assert!(net.forward(&Matrix::zeros(3, 4), &Matrix::zeros(1, 2)).is_err());
        assert!(net.forward(&Matrix::zeros(0, 4), &Matrix::zeros(2, 2)).is_err());
    }
}
