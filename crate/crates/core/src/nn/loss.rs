use super::NnError;
use crate::linalg::Matrix;

/// Mean squared error over all entries and its gradient `2 (pred - target) / n`.
pub fn mse_loss(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix), NnError> {
    if pred.shape() != target.shape() {
        return Err(NnError::DimensionMismatch("mse: prediction and target shapes differ"));
    }
    let n = (pred.rows() * pred.cols()) as f64;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    let mut loss = 0.0;
    for ((g, p), t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p - t;
        loss += d * d;
        *g = 2.0 * d / n;
    }
    Ok((loss / n, grad))
}
