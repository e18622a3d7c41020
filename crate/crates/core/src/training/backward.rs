//! Exact reverse-mode gradients of the mean batch loss.
//!
//! Forward quantities per layer `i` (λ fixed, `u^i = (x, a^1..a^{i-1})`):
//!
//! ```text
//! z^i = W^i·u^i + b^i        a^i = act_λ(z^i)         s^i = act_λ'(z^i)
//! g^i = W^i_{1:D} + Σ_k W^i_{D+k} J^k                 J^i = s^i g^i
//! c^i = a^i − J^i·x
//! ```
//!
//! The hard indicator inside `s^i` is treated as locally constant, so only
//! the softplus part of `s^i` contributes `∂s/∂z`.

use crate::activation::{annealed_derivative, annealed_second_derivative};
use crate::error::{LcnError, Result};
use crate::head::{DenseLayer, OutputHead};
use crate::network::{activations, check_lambda, dot, jacobian_dp, LcnParameters};
use crate::training::dropconnect::DropConnectMask;
use crate::training::loss::loss_and_grad;
use crate::training::LossKind;

/// Gradients with the same shapes as the trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub layer_weights: Vec<Vec<f64>>,
    pub layer_biases: Vec<f64>,
    pub head: HeadGradients,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HeadGradients {
    FullyConnected(Vec<DenseLayer>),
    Linear(DenseLayer),
}

impl GradientBundle {
    pub fn zeros_like(params: &LcnParameters) -> Result<Self> {
        let head = match params.head() {
            OutputHead::FullyConnected(h) => HeadGradients::FullyConnected(
                h.layers
                    .iter()
                    .map(|l| DenseLayer::zeros(l.in_dim, l.out_dim))
                    .collect(),
            ),
            OutputHead::Linear(h) => {
                HeadGradients::Linear(DenseLayer::zeros(h.layer.in_dim, h.layer.out_dim))
            }
            OutputHead::Table(_) => {
                return Err(LcnError::InvalidModel(
                    "a table head has no gradients; use a fully-connected head".into(),
                ))
            }
        };
        Ok(GradientBundle {
            layer_weights: params.layer_weights().iter().map(|w| vec![0.0; w.len()]).collect(),
            layer_biases: vec![0.0; params.depth()],
            head,
        })
    }

    fn head_layers(&self) -> &[DenseLayer] {
        match &self.head {
            HeadGradients::FullyConnected(l) => l,
            HeadGradients::Linear(l) => std::slice::from_ref(l),
        }
    }

    /// Backbone weights, backbone biases, then each head layer's weights and
    /// bias. Same order as [`flatten_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.layer_weights.iter().flatten().copied().collect();
        out.extend_from_slice(&self.layer_biases);
        for l in self.head_layers() {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    fn scale(&mut self, f: f64) {
        self.layer_weights.iter_mut().flatten().for_each(|v| *v *= f);
        self.layer_biases.iter_mut().for_each(|v| *v *= f);
        let layers = match &mut self.head {
            HeadGradients::FullyConnected(l) => l.as_mut_slice(),
            HeadGradients::Linear(l) => std::slice::from_mut(l),
        };
        for l in layers {
            l.weights.iter_mut().for_each(|v| *v *= f);
            l.bias.iter_mut().for_each(|v| *v *= f);
        }
    }
}

fn head_layers_mut(params: &mut LcnParameters) -> &mut [DenseLayer] {
    match params.head_mut() {
        OutputHead::FullyConnected(h) => h.layers.as_mut_slice(),
        OutputHead::Linear(h) => std::slice::from_mut(&mut h.layer),
        OutputHead::Table(_) => &mut [],
    }
}

/// Trainable parameters in [`GradientBundle::flatten`] order.
pub fn flatten_params(params: &LcnParameters) -> Vec<f64> {
    let mut out: Vec<f64> = params.layer_weights().iter().flatten().copied().collect();
    out.extend_from_slice(params.layer_biases());
    let layers: &[DenseLayer] = match params.head() {
        OutputHead::FullyConnected(h) => &h.layers,
        OutputHead::Linear(h) => std::slice::from_ref(&h.layer),
        OutputHead::Table(_) => &[],
    };
    for l in layers {
        out.extend_from_slice(&l.weights);
        out.extend_from_slice(&l.bias);
    }
    out
}

/// Inverse of [`flatten_params`].
pub fn assign_flat_params(params: &mut LcnParameters, flat: &[f64]) {
    let mut it = flat.iter().copied();
    for w in params.layer_weights_mut().iter_mut().flatten() {
        *w = it.next().expect("flat parameter vector too short");
    }
    for b in params.layer_biases_mut() {
        *b = it.next().expect("flat parameter vector too short");
    }
    for l in head_layers_mut(params) {
        for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
            *w = it.next().expect("flat parameter vector too short");
        }
    }
    assert!(it.next().is_none(), "flat parameter vector too long");
}

/// A mini-batch. `offsets`, when present, are added to the model output
/// before the loss (frozen ensemble predictions).
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub inputs: &'a [&'a [f64]],
    pub targets: &'a [&'a [f64]],
    pub offsets: Option<&'a [&'a [f64]]>,
}

/// Mean batch loss and its gradient with respect to every parameter of
/// `params`. With a mask, the network is evaluated with the masked weights
/// and gradients are taken with respect to the unmasked ones.
pub fn backward(
    params: &LcnParameters,
    batch: &Batch<'_>,
    lambda: f64,
    loss_kind: LossKind,
    masks: Option<&DropConnectMask>,
) -> Result<(f64, GradientBundle)> {
    check_lambda(lambda)?;
    if batch.inputs.is_empty() || batch.inputs.len() != batch.targets.len() {
        return Err(LcnError::InvalidConfig(format!(
            "batch has {} inputs and {} targets",
            batch.inputs.len(),
            batch.targets.len()
        )));
    }
    let masked;
    let effective = match masks {
        Some(m) => {
            masked = m.apply(params);
            &masked
        }
        None => params,
    };
    let mut grads = GradientBundle::zeros_like(effective)?;
    let mut total = 0.0;
    for (n, (x, t)) in batch.inputs.iter().zip(batch.targets).enumerate() {
        if x.len() != params.input_dim() {
            return Err(LcnError::DimensionMismatch {
                what: "input",
                expected: params.input_dim(),
                actual: x.len(),
            });
        }
        let offset = batch.offsets.map(|o| o[n]);
        total += accumulate_sample(effective, x, t, offset, lambda, loss_kind, &mut grads)?;
    }
    let inv = 1.0 / batch.inputs.len() as f64;
    grads.scale(inv);
    if let Some(m) = masks {
        for (i, row) in grads.layer_weights.iter_mut().enumerate() {
            for (j, g) in row.iter_mut().enumerate() {
                *g *= m.factor(i, j);
            }
        }
    }
    Ok((total * inv, grads))
}

fn accumulate_sample(
    params: &LcnParameters,
    x: &[f64],
    target: &[f64],
    offset: Option<&[f64]>,
    lambda: f64,
    loss_kind: LossKind,
    grads: &mut GradientBundle,
) -> Result<f64> {
    let d = params.input_dim();
    let m = params.depth();
    let (pre, post) = activations(params, x, lambda);

    // ∂loss/∂J^i and ∂loss/∂a^i, filled by the head then swept backwards.
    let mut d_rows = vec![vec![0.0; d]; m];
    let mut d_post = vec![0.0; m];
    let mut rows = Vec::new();

    let loss = match (params.head(), &mut grads.head) {
        (OutputHead::FullyConnected(head), HeadGradients::FullyConnected(hg)) => {
            let (r, c) = jacobian_dp(params, x, &pre, &post, lambda, None);
            let mut features: Vec<f64> = r.iter().flatten().copied().collect();
            features.extend_from_slice(&c);
            rows = r;
            let (mut out, cache) = head.forward_cached(&features);
            if let Some(o) = offset {
                add_offset(&mut out, o);
            }
            let mut d_out = vec![0.0; out.len()];
            let loss = loss_and_grad(&out, target, loss_kind, Some(&mut d_out))?;
            let d_feat = head.backward(&cache, &d_out, hg);
            for i in 0..m {
                d_rows[i].copy_from_slice(&d_feat[i * d..(i + 1) * d]);
                // c^i = a^i − J^i·x
                let dc = d_feat[m * d + i];
                d_post[i] += dc;
                for (dr, xj) in d_rows[i].iter_mut().zip(x) {
                    *dr -= dc * xj;
                }
            }
            loss
        }
        (OutputHead::Linear(head), HeadGradients::Linear(hg)) => {
            let mut u = x.to_vec();
            u.extend_from_slice(&post);
            let mut out = head.layer.apply(&u);
            if let Some(o) = offset {
                add_offset(&mut out, o);
            }
            let mut d_out = vec![0.0; out.len()];
            let loss = loss_and_grad(&out, target, loss_kind, Some(&mut d_out))?;
            let in_dim = head.layer.in_dim;
            for (o, &dy) in d_out.iter().enumerate() {
                hg.bias[o] += dy;
                let row = head.layer.row(o);
                for j in 0..in_dim {
                    hg.weights[o * in_dim + j] += dy * u[j];
                }
                for i in 0..m {
                    d_post[i] += dy * row[d + i];
                }
            }
            loss
        }
        _ => unreachable!("gradient bundle built from the same head"),
    };

    let has_rows = !rows.is_empty();
    for i in (0..m).rev() {
        let w = &params.layer_weights()[i];
        let z = pre[i];
        let s = annealed_derivative(z, lambda);
        let mut dz = d_post[i] * s;
        let gw = &mut grads.layer_weights[i];
        if has_rows {
            // Recover g^i (J^i = s·g^i, and s may be zero).
            let mut g = w[..d].to_vec();
            for k in 0..i {
                let c = w[d + k];
                for (gj, rj) in g.iter_mut().zip(&rows[k]) {
                    *gj += c * rj;
                }
            }
            let ds = dot(&d_rows[i], &g);
            dz += ds * annealed_second_derivative(z, lambda);
            let dg: Vec<f64> = d_rows[i].iter().map(|v| v * s).collect();
            for j in 0..d {
                gw[j] += dg[j];
            }
            for k in 0..i {
                gw[d + k] += dot(&dg, &rows[k]);
                let c = w[d + k];
                for (dr, dgj) in d_rows[k].iter_mut().zip(&dg) {
                    *dr += c * dgj;
                }
            }
        }
        if dz != 0.0 {
            for j in 0..d {
                gw[j] += dz * x[j];
            }
            for k in 0..i {
                gw[d + k] += dz * post[k];
                d_post[k] += dz * w[d + k];
            }
        }
        grads.layer_biases[i] += dz;
    }
    Ok(loss)
}

/// `out[l] += offset[l]`; shared by training and ensemble evaluation so both
/// produce identical sums.
#[inline]
pub(crate) fn add_offset(out: &mut [f64], offset: &[f64]) {
    for (o, v) in out.iter_mut().zip(offset) {
        *o += v;
    }
}
