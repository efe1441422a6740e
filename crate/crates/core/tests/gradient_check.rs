use cdf_core::causal::propagation_matrix;
use cdf_core::linalg::Matrix;
use cdf_core::model::{CdfNetwork, Widths};
use cdf_core::nn::{mse_loss, zeros_like, Parameters};
use cdf_core::rng;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut g = rng::seeded(seed);
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng::uniform(&mut g, -1.0, 1.0)).collect())
}

fn loss(net: &CdfNetwork, x: &Matrix, kf: &Matrix, y: &Matrix) -> f64 {
    mse_loss(&net.forward(x, kf).unwrap(), y).unwrap().0
}

/// Largest relative error between analytic and central-difference gradients.
fn max_relative_error(net: &CdfNetwork, x: &Matrix, kf: &Matrix, y: &Matrix) -> (f64, usize) {
    let (out, trace) = net.forward_trace(x, kf).unwrap();
    let (_, dout) = mse_loss(&out, y).unwrap();
    let mut grads = zeros_like(net);
    net.backward(&trace, &dout, &mut grads).unwrap();
    let analytic = grads.flatten();

    let eps = 1e-5;
    let sizes: Vec<usize> = net.slices().iter().map(|s| s.len()).collect();
    let mut worst = 0.0f64;
    let mut flat = 0;
    for (si, &len) in sizes.iter().enumerate() {
        for k in 0..len {
            let mut plus = net.clone();
            plus.slices_mut()[si][k] += eps;
            let mut minus = net.clone();
            minus.slices_mut()[si][k] -= eps;
            let numeric = (loss(&plus, x, kf, y) - loss(&minus, x, kf, y)) / (2.0 * eps);
            let a = analytic[flat];
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((a - numeric).abs() / denom);
            flat += 1;
        }
    }
    (worst, flat)
}

fn chain_adjacency(a: usize) -> Matrix {
    let mut m = Matrix::zeros(a, a);
    for k in 0..a - 1 {
        m[(k, k + 1)] = 1.0;
    }
    m[(0, a - 1)] = 1.0;
    m
}

#[test]
fn full_network_gradients_match_finite_differences() {
    let (a, u, h) = (5, 6, 3);
    let widths = Widths { graph: 4, lstm: 8, lstm_layers: 2 };
    let known = vec![0, 1];
    let mut init = rng::seeded(11);
    let net = CdfNetwork::new(Some(propagation_matrix(&chain_adjacency(a))), a, h, known.clone(), widths, &mut init).unwrap();
    let x = random_matrix(u, a, 1);
    let kf = random_matrix(h, known.len(), 2);
    let y = random_matrix(h, a - known.len(), 3);
    let (err, n) = max_relative_error(&net, &x, &kf, &y);
    assert_eq!(n, net.param_count());
    assert!(err < 1e-4, "max relative gradient error {err}");
}

#[test]
fn plain_lstm_gradients_match_finite_differences() {
    let (a, u, h) = (4, 5, 2);
    let widths = Widths { graph: 1, lstm: 6, lstm_layers: 1 };
    let mut init = rng::seeded(5);
    let net = CdfNetwork::new(None, a, h, vec![3], widths, &mut init).unwrap();
    let (err, _) = max_relative_error(&net, &random_matrix(u, a, 7), &random_matrix(h, 1, 8), &random_matrix(h, 3, 9));
    assert!(err < 1e-4, "max relative gradient error {err}");
}
