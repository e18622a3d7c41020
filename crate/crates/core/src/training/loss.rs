use crate::activation::{sigmoid, softplus};
use crate::error::{LcnError, Result};
use crate::training::LossKind;

/// Mean loss over outputs. Cross entropy is evaluated on logits as
/// `softplus(y) − t·y`.
pub fn loss_value(pred: &[f64], target: &[f64], kind: LossKind) -> Result<f64> {
    loss_and_grad(pred, target, kind, None)
}

/// As [`loss_value`], also writing `∂loss/∂pred` into `grad` when given.
pub(crate) fn loss_and_grad(
    pred: &[f64],
    target: &[f64],
    kind: LossKind,
    mut grad: Option<&mut [f64]>,
) -> Result<f64> {
    if pred.iter().any(|v| !v.is_finite()) {
        return Err(LcnError::Divergence {
            epoch: 0,
            batch: 0,
            stage: None,
        });
    }
    let n = pred.len() as f64;
    let mut total = 0.0;
    for (l, (&y, &t)) in pred.iter().zip(target).enumerate() {
        match kind {
            LossKind::CrossEntropy => {
                total += softplus(y) - t * y;
                if let Some(g) = grad.as_deref_mut() {
                    g[l] = (sigmoid(y) - t) / n;
                }
            }
            LossKind::MeanSquaredError => {
                let r = y - t;
                total += r * r;
                if let Some(g) = grad.as_deref_mut() {
                    g[l] = 2.0 * r / n;
                }
            }
        }
    }
    Ok(total / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn logit_zero_label_one() {
        let v = loss_value(&[0.0], &[1.0], LossKind::CrossEntropy).unwrap();
        assert_abs_diff_eq!(v, std::f64::consts::LN_2, epsilon = 1e-15);
    }

    #[test]
    fn exact_regression_target() {
        assert_eq!(loss_value(&[3.0], &[3.0], LossKind::MeanSquaredError).unwrap(), 0.0);
    }

    #[test]
    fn two_logits_mean() {
        // (log(1+e^-2) + log(1+e^-1)) / 2 from mpmath.
        let v = loss_value(&[2.0, -1.0], &[1.0, 0.0], LossKind::CrossEntropy).unwrap();
        assert_abs_diff_eq!(v, 0.220_094_849_280_597_67, epsilon = 1e-15);
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let v = loss_value(&[800.0, -800.0], &[0.0, 1.0], LossKind::CrossEntropy).unwrap();
        assert_abs_diff_eq!(v, 800.0, epsilon = 1e-9);
    }

    #[test]
    fn non_finite_prediction_is_divergence() {
        assert!(matches!(
            loss_value(&[f64::NAN], &[1.0], LossKind::MeanSquaredError),
            Err(LcnError::Divergence { .. })
        ));
    }
}
