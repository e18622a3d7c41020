use crate::training::OptimizerKind;

/// Optimizer state over the flattened parameter vector.
#[derive(Debug, Clone)]
pub(crate) enum Optimizer {
    Sgd,
    Amsgrad {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        m: Vec<f64>,
        v: Vec<f64>,
        v_max: Vec<f64>,
    },
}

impl Optimizer {
    pub(crate) fn new(kind: OptimizerKind, len: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Amsgrad { beta1, beta2, epsilon } => Optimizer::Amsgrad {
                beta1,
                beta2,
                epsilon,
                m: vec![0.0; len],
                v: vec![0.0; len],
                v_max: vec![0.0; len],
            },
        }
    }

    pub(crate) fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        match self {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            Optimizer::Amsgrad {
                beta1,
                beta2,
                epsilon,
                m,
                v,
                v_max,
            } => {
                for i in 0..params.len() {
                    let g = grads[i];
                    m[i] = *beta1 * m[i] + (1.0 - *beta1) * g;
                    v[i] = *beta2 * v[i] + (1.0 - *beta2) * g * g;
                    v_max[i] = v_max[i].max(v[i]);
                    params[i] -= lr * m[i] / (v_max[i].sqrt() + *epsilon);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_step() {
        let mut o = Optimizer::new(OptimizerKind::Sgd, 2);
        let mut p = [1.0, -2.0];
        o.step(&mut p, &[0.5, -1.0], 0.1);
        assert_eq!(p, [0.95, -1.9]);
    }

    #[test]
    fn amsgrad_first_step_and_max_memory() {
        let mut o = Optimizer::new(OptimizerKind::amsgrad(), 1);
        let mut p = [0.0];
        o.step(&mut p, &[2.0], 0.01);
        // m = 0.2, v = 0.004, step = 0.01 * 0.2 / (sqrt(0.004) + 1e-8)
        let expected = -0.01 * 0.2 / (0.004f64.sqrt() + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        // A tiny later gradient cannot shrink the denominator.
        o.step(&mut p, &[1e-6], 0.01);
        if let Optimizer::Amsgrad { v, v_max, .. } = &o {
            assert!(v_max[0] >= v[0]);
            assert!((v_max[0] - 0.004).abs() < 1e-12);
        }
    }

    #[test]
    fn amsgrad_minimizes_quadratic() {
        let mut o = Optimizer::new(OptimizerKind::amsgrad(), 2);
        let mut p = [3.0, -4.0];
        for _ in 0..5000 {
            let g = [2.0 * (p[0] - 1.0), 2.0 * (p[1] + 0.5)];
            o.step(&mut p, &g, 0.01);
        }
        assert!((p[0] - 1.0).abs() < 1e-2 && (p[1] + 0.5).abs() < 1e-2, "{p:?}");
    }
}
