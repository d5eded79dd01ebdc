//! Depth-weighted squared error.

use crate::error::{Error, Result};

use super::tensor::Scalar;

/// Loss of one cell: e^(y + c) (y - y_hat)^2.
#[inline]
pub fn cell_loss(y: f64, y_hat: f64, c: f64) -> f64 {
    let e = y - y_hat;
    (y + c).exp() * e * e
}

/// Sum of per-cell losses over valid cells, with the gradient of
/// `scale * sum` with respect to the prediction. Returns (sum, grad, n_valid).
pub(crate) fn weighted_se_sum<Y, T>(y: &[Y], y_hat: &[T], valid: &[bool], c: f64, scale: f64) -> (f64, Vec<T>, usize)
where
    Y: Copy + Into<f64>,
    T: Scalar,
{
    let mut sum = 0.0;
    let mut n = 0;
    let grad = y
        .iter()
        .zip(y_hat)
        .zip(valid)
        .map(|((&y, &p), &ok)| {
            if !ok {
                return T::zero();
            }
            let y: f64 = y.into();
            let p = p.to_f64().unwrap_or(f64::NAN);
            let w = (y + c).exp();
            let e = y - p;
            sum += w * e * e;
            n += 1;
            T::lit(-2.0 * w * e * scale)
        })
        .collect();
    (sum, grad, n)
}

/// (1/n) sum over valid cells of e^(y + c) (y - y_hat)^2, and its gradient
/// with respect to `y_hat` (zero at invalid cells).
pub fn weighted_mse<Y, T>(y: &[Y], y_hat: &[T], valid: &[bool], c: f64) -> Result<(f64, Vec<T>)>
where
    Y: Copy + Into<f64>,
    T: Scalar,
{
    if y.len() != y_hat.len() || y.len() != valid.len() {
        return Err(Error::Shape(format!(
            "target {}, prediction {}, mask {} cells",
            y.len(),
            y_hat.len(),
            valid.len()
        )));
    }
    let n = valid.iter().filter(|&&v| v).count();
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let (sum, grad, _) = weighted_se_sum(y, y_hat, valid, c, 1.0 / n as f64);
    Ok((sum / n as f64, grad))
}
