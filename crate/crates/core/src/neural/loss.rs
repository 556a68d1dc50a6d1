use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Predictions are clamped this far from 0 and 1 before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Factorised binary cross-entropy, averaged over qubits:
/// `−(1/N) Σ_k [t_k ln p_k + (1−t_k) ln(1−p_k)]`.
///
/// Returns the loss and its gradient with respect to `pred`.
pub fn bce_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::dim("bce target", pred.len(), target.len()));
    }
    if pred.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            loss -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
            (p - t) / (p * (1.0 - p)) / n
        })
        .collect();
    Ok((loss / n, grad))
}

/// Batched BCE averaged over every entry of the `batch × N` matrices.
pub fn bce_loss_batch(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    if pred.dim() != target.dim() {
        return Err(Error::dim("bce target entries", pred.len(), target.len()));
    }
    if pred.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let count = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(pred.raw_dim());
    ndarray::Zip::from(&mut grad)
        .and(&pred)
        .and(&target)
        .for_each(|g, &p, &t| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            loss -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
            *g = (p - t) / (p * (1.0 - p)) / count;
        });
    Ok((loss / count, grad))
}

/// Mean squared error over all entries, with its gradient.
pub fn mse_loss(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    if pred.dim() != target.dim() {
        return Err(Error::dim("mse target entries", pred.len(), target.len()));
    }
    if pred.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let count = pred.len() as f64;
    let diff = &pred - &target;
    let loss = diff.mapv(|d| d * d).sum() / count;
    Ok((loss, diff * (2.0 / count)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn bce_examples() {
        let (loss, _) = bce_loss(&[1.0, 0.0, 1.0], &[1.0, 0.0, 1.0]).unwrap();
        assert!(loss < 1e-6);

        let (loss, _) = bce_loss(&[0.5; 4], &[1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(loss, std::f64::consts::LN_2, epsilon = 1e-12);

        let (loss, grad) = bce_loss(&[0.8], &[1.0]).unwrap();
        assert_abs_diff_eq!(loss, 0.2231435513142097, epsilon = 1e-12);
        assert_abs_diff_eq!(grad[0], -1.0 / 0.8, epsilon = 1e-12);

        assert!(bce_loss(&[0.5], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn batch_bce_agrees_with_vector_form() {
        let pred = array![[0.2, 0.7], [0.9, 0.4]];
        let target = array![[0.0, 1.0], [0.5, 0.3]];
        let (batch, grad) = bce_loss_batch(pred.view(), target.view()).unwrap();
        let (a, ga) = bce_loss(&[0.2, 0.7], &[0.0, 1.0]).unwrap();
        let (b, _) = bce_loss(&[0.9, 0.4], &[0.5, 0.3]).unwrap();
        assert_abs_diff_eq!(batch, (a + b) / 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(grad[[0, 0]], ga[0] / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn mse_example() {
        let (loss, grad) = mse_loss(array![[1.0], [3.0]].view(), array![[0.0], [1.0]].view()).unwrap();
        assert_abs_diff_eq!(loss, 2.5);
        assert_eq!(grad, array![[1.0], [2.0]]);
    }

    proptest! {
        #[test]
        fn bce_minimized_at_target(t in 0.0f64..=1.0, p in 0.001f64..0.999) {
            let (at_target, _) = bce_loss(&[t.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)], &[t]).unwrap();
            let (elsewhere, _) = bce_loss(&[p], &[t]).unwrap();
            prop_assert!(at_target <= elsewhere + 1e-12);
        }

        #[test]
        fn bce_gradient_matches_difference(t in 0.0f64..=1.0, p in 0.01f64..0.99) {
            let h = 1e-6;
            let (_, g) = bce_loss(&[p], &[t]).unwrap();
            let (up, _) = bce_loss(&[p + h], &[t]).unwrap();
            let (down, _) = bce_loss(&[p - h], &[t]).unwrap();
            prop_assert!((g[0] - (up - down) / (2.0 * h)).abs() < 1e-5 * g[0].abs().max(1.0));
        }
    }
}
