//! The annealed activation used by every backbone neuron.
//!
//! `a = λ·max(0, z) + (1 − λ)·softplus(z)`. At `λ = 1` this is ReLU and at
//! `λ = 0` it is softplus. The hard indicator is `I[z ≥ 0]`, i.e. it returns
//! 1 at `z = 0`; network/tree equivalence on boundary inputs depends on that.

/// `log(1 + e^z)` evaluated as `max(z, 0) + log1p(e^{-|z|})`.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Hard activation indicator, 1 at the origin.
#[inline]
pub fn indicator(z: f64) -> bool {
    z >= 0.0
}

#[inline]
pub fn annealed_activation(z: f64, lambda: f64) -> f64 {
    if lambda == 1.0 {
        return z.max(0.0);
    }
    if lambda == 0.0 {
        return softplus(z);
    }
    lambda * z.max(0.0) + (1.0 - lambda) * softplus(z)
}

/// `da/dz` of [`annealed_activation`], with the ReLU part using the indicator
/// convention (`∂max(0,z)/∂z = 1` at `z = 0`).
#[inline]
pub fn annealed_derivative(z: f64, lambda: f64) -> f64 {
    let hard = if indicator(z) { 1.0 } else { 0.0 };
    if lambda == 1.0 {
        return hard;
    }
    if lambda == 0.0 {
        return sigmoid(z);
    }
    lambda * hard + (1.0 - lambda) * sigmoid(z)
}

/// Derivative of [`annealed_derivative`] with respect to `z`, treating the
/// indicator as locally constant.
#[inline]
pub fn annealed_second_derivative(z: f64, lambda: f64) -> f64 {
    if lambda == 1.0 {
        return 0.0;
    }
    let s = sigmoid(z);
    (1.0 - lambda) * s * (1.0 - s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn relu_at_origin_is_zero() {
        assert_eq!(annealed_activation(0.0, 1.0), 0.0);
    }

    #[test]
    fn softplus_at_origin_is_ln2() {
        assert_abs_diff_eq!(annealed_activation(0.0, 0.0), std::f64::consts::LN_2, epsilon = 1e-15);
    }

    #[test]
    fn half_annealed_value_at_two() {
        // 0.5*2 + 0.5*ln(1+e^2), reference value from mpmath at 30 digits.
        let expected = 2.063_464_005_521_486;
        assert_abs_diff_eq!(annealed_activation(2.0, 0.5), expected, epsilon = 1e-12);
    }

    #[test]
    fn softplus_is_overflow_safe() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!(softplus(-1000.0) < 1e-300);
        assert!((sigmoid(-1000.0)).is_finite());
    }

    #[test]
    fn derivative_matches_central_difference() {
        for &lambda in &[0.0, 0.3, 0.7] {
            for &z in &[-3.0, -0.4, 0.25, 2.5] {
                let h = 1e-6;
                let fd = (annealed_activation(z + h, lambda) - annealed_activation(z - h, lambda))
                    / (2.0 * h);
                assert_abs_diff_eq!(annealed_derivative(z, lambda), fd, epsilon = 1e-8);
                let fd2 = (annealed_derivative(z + h, lambda) - annealed_derivative(z - h, lambda))
                    / (2.0 * h);
                assert_abs_diff_eq!(annealed_second_derivative(z, lambda), fd2, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn indicator_is_one_at_zero() {
        assert!(indicator(0.0));
        assert!(indicator(-0.0));
        assert!(!indicator(-1e-300));
        assert_eq!(annealed_derivative(0.0, 1.0), 1.0);
    }
}
