//! Per-weight Bernoulli masking of the backbone rows `W^i`.
//!
//! Kept weights are scaled by `1 / (1 − p)` so the masked row is an unbiased
//! estimate of the full row and inference uses the weights unchanged.
//! Biases and the head are never masked.

use rand::Rng;

use crate::network::LcnParameters;

#[derive(Debug, Clone, PartialEq)]
pub struct DropConnectMask {
    pub keep: Vec<Vec<bool>>,
    pub scale: f64,
}

/// Samples one mask with the given row lengths.
pub fn dropconnect_mask<R: Rng + ?Sized>(shape: &[usize], prob: f64, rng: &mut R) -> DropConnectMask {
    assert!((0.0..1.0).contains(&prob), "dropconnect probability must lie in [0, 1)");
    if prob == 0.0 {
        return DropConnectMask {
            keep: shape.iter().map(|&n| vec![true; n]).collect(),
            scale: 1.0,
        };
    }
    let keep = shape
        .iter()
        .map(|&n| (0..n).map(|_| rng.gen::<f64>() >= prob).collect())
        .collect();
    DropConnectMask {
        keep,
        scale: 1.0 / (1.0 - prob),
    }
}

impl DropConnectMask {
    pub fn for_params<R: Rng + ?Sized>(params: &LcnParameters, prob: f64, rng: &mut R) -> Self {
        let shape: Vec<usize> = params.layer_weights().iter().map(Vec::len).collect();
        dropconnect_mask(&shape, prob, rng)
    }

    pub fn kept_fraction(&self) -> f64 {
        let total: usize = self.keep.iter().map(Vec::len).sum();
        let kept = self.keep.iter().flatten().filter(|&&k| k).count();
        kept as f64 / total.max(1) as f64
    }

    /// Multiplier for weight `j` of layer `i`: `0` or `1/(1−p)`.
    #[inline]
    pub fn factor(&self, i: usize, j: usize) -> f64 {
        if self.keep[i][j] {
            self.scale
        } else {
            0.0
        }
    }

    /// Copy of `params` with masked, rescaled backbone weights.
    pub fn apply(&self, params: &LcnParameters) -> LcnParameters {
        let mut out = params.clone();
        for (i, row) in out.layer_weights_mut().iter_mut().enumerate() {
            for (j, w) in row.iter_mut().enumerate() {
                *w *= self.factor(i, j);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_probability_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = dropconnect_mask(&[3, 4], 0.0, &mut rng);
        assert_eq!(m.scale, 1.0);
        assert!(m.keep.iter().flatten().all(|&k| k));
    }

    #[test]
    fn keep_rate_matches_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let m = dropconnect_mask(&[1_000_000], 0.5, &mut rng);
        let rate = m.kept_fraction();
        assert!((rate - 0.5).abs() <= 0.002, "keep rate {rate}");
        assert_eq!(m.scale, 2.0);
    }

    #[test]
    fn masked_weights_are_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let w = [0.8, -1.2, 2.5, 0.3, -0.05];
        let prob = 0.25;
        let copies = 10_000;
        let mut mean = [0.0; 5];
        for _ in 0..copies {
            let m = dropconnect_mask(&[5], prob, &mut rng);
            for j in 0..5 {
                mean[j] += w[j] * m.factor(0, j) / copies as f64;
            }
        }
        let l1: f64 = w.iter().map(|v: &f64| v.abs()).sum();
        let err: f64 = mean.iter().zip(&w).map(|(a, b)| (a - b).abs()).sum();
        assert!(err / l1 <= 0.01, "relative l1 deviation {}", err / l1);
    }
}
