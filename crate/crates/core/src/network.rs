//! The one-neuron-per-layer, densely connected ReLU backbone.
//!
//! Layer `i` reads `ã^{i-1} = (x, a^1, …, a^{i-1})` through a weight row of
//! length `D + i − 1`:
//!
//! ```text
//! z^i = W^i · ã^{i-1} + b^i
//! a^i = λ·max(0, z^i) + (1 − λ)·softplus(z^i)
//! o^i = I[z^i ≥ 0]
//! ```
//!
//! The locally constant representation fed to the head is the stacked input
//! gradients `∇_x a^i` followed by the bias terms `a^i − (∇_x a^i)ᵀx`. Both
//! are produced by a forward-only dynamic program, see [`jacobian_dp`].

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::activation::{annealed_activation, annealed_derivative, indicator};
use crate::error::{LcnError, Result};
use crate::head::{
    init_limit, DenseLayer, FullyConnectedHead, HiddenActivation, LinearHead, OutputHead,
};

/// Version tag for the order of entries in [`feature_vector`]. Stored in
/// model files.
pub const FEATURE_LAYOUT: &str = "jacobian_rows_then_bias_features/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Locally constant network: ReLU at evaluation time.
    Lcn,
    /// Approximately locally constant: softplus everywhere.
    Alcn,
    /// Locally linear network: the backbone output through an affine head.
    Lln,
}

impl Variant {
    /// The annealing parameter used at inference.
    pub fn eval_lambda(self) -> f64 {
        match self {
            Variant::Lcn | Variant::Lln => 1.0,
            Variant::Alcn => 0.0,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Lcn => "lcn",
            Variant::Alcn => "alcn",
            Variant::Lln => "lln",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = LcnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lcn" => Ok(Variant::Lcn),
            "alcn" => Ok(Variant::Alcn),
            "lln" => Ok(Variant::Lln),
            other => Err(LcnError::InvalidConfig(format!(
                "unknown variant `{other}` (expected lcn, alcn or lln)"
            ))),
        }
    }
}

/// `(o^1, …, o^M)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActivationPattern {
    bits: Vec<bool>,
}

impl ActivationPattern {
    pub fn new(bits: Vec<bool>) -> Self {
        ActivationPattern { bits }
    }

    /// Pattern of `len` bits whose binary value is `index`, first bit most
    /// significant.
    pub fn from_index(index: u64, len: usize) -> Self {
        let bits = (0..len).map(|i| (index >> (len - 1 - i)) & 1 == 1).collect();
        ActivationPattern { bits }
    }

    pub fn from_key(key: &str) -> Result<Self> {
        key.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(LcnError::InvalidModel(format!(
                    "pattern `{key}` contains `{other}`"
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(ActivationPattern::new)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Binary value with the first bit most significant; `None` beyond 64 bits.
    pub fn index(&self) -> Option<u64> {
        if self.bits.len() > 64 {
            return None;
        }
        Some(self.bits.iter().fold(0u64, |acc, &b| (acc << 1) | u64::from(b)))
    }

    pub fn to_key(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn hamming(&self, other: &ActivationPattern) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count()
    }
}

impl fmt::Display for ActivationPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_key())
    }
}

/// Architecture choices needed to initialize a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub depth: usize,
    pub variant: Variant,
    /// Hidden widths of `g_φ`; empty means a linear head.
    #[serde(default)]
    pub head_hidden: Vec<usize>,
    #[serde(default)]
    pub hidden_activation: HiddenActivation,
}

impl Architecture {
    pub fn new(depth: usize, variant: Variant) -> Self {
        Architecture {
            depth,
            variant,
            head_hidden: Vec::new(),
            hidden_activation: HiddenActivation::Relu,
        }
    }

    pub fn with_head_hidden(mut self, hidden: Vec<usize>) -> Self {
        self.head_hidden = hidden;
        self
    }
}

/// All parameters of a locally constant network: the backbone `f_θ` plus the
/// head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr", into = "ParamsRepr")]
pub struct LcnParameters {
    depth: usize,
    input_dim: usize,
    output_dim: usize,
    layer_weights: Vec<Vec<f64>>,
    layer_biases: Vec<f64>,
    head: OutputHead,
    variant: Variant,
}

#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    feature_layout: String,
    variant: Variant,
    depth: usize,
    input_dim: usize,
    output_dim: usize,
    layer_weights: Vec<Vec<f64>>,
    layer_biases: Vec<f64>,
    head: OutputHead,
}

impl TryFrom<ParamsRepr> for LcnParameters {
    type Error = LcnError;

    fn try_from(r: ParamsRepr) -> Result<Self> {
        if r.feature_layout != FEATURE_LAYOUT {
            return Err(LcnError::InvalidModel(format!(
                "unsupported feature layout `{}` (expected `{FEATURE_LAYOUT}`)",
                r.feature_layout
            )));
        }
        let p = LcnParameters::new(r.input_dim, r.layer_weights, r.layer_biases, r.head, r.variant)?;
        if p.depth != r.depth || p.output_dim != r.output_dim {
            return Err(LcnError::InvalidModel(format!(
                "declared depth/output ({}/{}) disagree with parameters ({}/{})",
                r.depth, r.output_dim, p.depth, p.output_dim
            )));
        }
        Ok(p)
    }
}

impl From<LcnParameters> for ParamsRepr {
    fn from(p: LcnParameters) -> Self {
        ParamsRepr {
            feature_layout: FEATURE_LAYOUT.to_string(),
            variant: p.variant,
            depth: p.depth,
            input_dim: p.input_dim,
            output_dim: p.output_dim,
            layer_weights: p.layer_weights,
            layer_biases: p.layer_biases,
            head: p.head,
        }
    }
}

impl LcnParameters {
    /// Builds and validates a model. Depth and output dimension are read from
    /// the weights and the head.
    pub fn new(
        input_dim: usize,
        layer_weights: Vec<Vec<f64>>,
        layer_biases: Vec<f64>,
        head: OutputHead,
        variant: Variant,
    ) -> Result<Self> {
        let output_dim = match &head {
            OutputHead::Table(t) => t.output_dim(),
            OutputHead::FullyConnected(h) => h.output_dim(),
            OutputHead::Linear(h) => h.layer.out_dim,
        };
        let params = LcnParameters {
            depth: layer_weights.len(),
            input_dim,
            output_dim,
            layer_weights,
            layer_biases,
            head,
            variant,
        };
        params.validate()?;
        Ok(params)
    }

    /// Random initialization: every weight and backbone bias uniform in
    /// `[-a, a]` with `a = sqrt(6 / (fan_in + 1))`, head biases zero.
    pub fn init<R: Rng + ?Sized>(
        arch: &Architecture,
        input_dim: usize,
        output_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if arch.depth == 0 || input_dim == 0 || output_dim == 0 {
            return Err(LcnError::InvalidConfig(
                "depth, input and output dimensions must be positive".into(),
            ));
        }
        let mut layer_weights = Vec::with_capacity(arch.depth);
        let mut layer_biases = Vec::with_capacity(arch.depth);
        for i in 0..arch.depth {
            let fan_in = input_dim + i;
            let limit = init_limit(fan_in);
            layer_weights.push((0..fan_in).map(|_| rng.gen_range(-limit..=limit)).collect());
            layer_biases.push(rng.gen_range(-limit..=limit));
        }
        let head = match arch.variant {
            Variant::Lcn | Variant::Alcn => OutputHead::FullyConnected(FullyConnectedHead::random(
                arch.depth * (input_dim + 1),
                &arch.head_hidden,
                output_dim,
                arch.hidden_activation,
                rng,
            )),
            Variant::Lln => OutputHead::Linear(LinearHead {
                layer: DenseLayer::random(input_dim + arch.depth, output_dim, rng),
            }),
        };
        LcnParameters::new(input_dim, layer_weights, layer_biases, head, arch.variant)
    }

    /// [`LcnParameters::init`] from the initialization stream of `seed`.
    pub fn init_seeded(arch: &Architecture, input_dim: usize, output_dim: usize, seed: u64) -> Result<Self> {
        let mut rng = crate::rng::seeded(seed, crate::rng::Stream::Init);
        Self::init(arch, input_dim, output_dim, &mut rng)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(LcnError::InvalidModel("depth must be at least 1".into()));
        }
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(LcnError::InvalidModel("dimensions must be positive".into()));
        }
        if self.layer_biases.len() != self.depth {
            return Err(LcnError::InvalidModel(format!(
                "{} layer biases for {} layers",
                self.layer_biases.len(),
                self.depth
            )));
        }
        for (i, w) in self.layer_weights.iter().enumerate() {
            if w.len() != self.input_dim + i {
                return Err(LcnError::InvalidModel(format!(
                    "layer {} weight row has length {}, expected {}",
                    i + 1,
                    w.len(),
                    self.input_dim + i
                )));
            }
        }
        let finite = self
            .layer_weights
            .iter()
            .flatten()
            .chain(&self.layer_biases)
            .all(|v| v.is_finite());
        if !finite {
            return Err(LcnError::InvalidModel("non-finite backbone parameter".into()));
        }
        match (&self.head, self.variant) {
            (OutputHead::Table(t), Variant::Lcn) => t.check(self.depth)?,
            (OutputHead::FullyConnected(h), Variant::Lcn | Variant::Alcn) => {
                h.check(self.feature_dim(), self.output_dim)?
            }
            (OutputHead::Linear(h), Variant::Lln) => {
                if h.layer.in_dim != self.input_dim + self.depth {
                    return Err(LcnError::InvalidModel(format!(
                        "linear head reads {} inputs, expected D + M = {}",
                        h.layer.in_dim,
                        self.input_dim + self.depth
                    )));
                }
                if h.layer.weights.len() != h.layer.in_dim * h.layer.out_dim
                    || h.layer.bias.len() != h.layer.out_dim
                {
                    return Err(LcnError::InvalidModel("linear head weight count mismatch".into()));
                }
            }
            (head, variant) => {
                return Err(LcnError::InvalidModel(format!(
                    "a {} head cannot be used with the {variant} variant",
                    head.kind_name()
                )))
            }
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Length of the feature vector, `M·(D + 1)`.
    pub fn feature_dim(&self) -> usize {
        self.depth * (self.input_dim + 1)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn layer_weights(&self) -> &[Vec<f64>] {
        &self.layer_weights
    }

    pub fn layer_biases(&self) -> &[f64] {
        &self.layer_biases
    }

    pub fn head(&self) -> &OutputHead {
        &self.head
    }

    pub(crate) fn layer_weights_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.layer_weights
    }

    pub(crate) fn layer_biases_mut(&mut self) -> &mut [f64] {
        &mut self.layer_biases
    }

    pub(crate) fn head_mut(&mut self) -> &mut OutputHead {
        &mut self.head
    }

    /// Zeroes the head's output layer so the model predicts exactly `0`.
    pub fn zero_head_output(&mut self) {
        match &mut self.head {
            OutputHead::FullyConnected(h) => h.zero_output_layer(),
            OutputHead::Linear(h) => {
                h.layer.weights.iter_mut().for_each(|w| *w = 0.0);
                h.layer.bias.iter_mut().for_each(|b| *b = 0.0);
            }
            OutputHead::Table(t) => *t = crate::head::PatternTable::new(t.output_dim()),
        }
    }

    /// Number of stored reals in the backbone (`Θ(M·D)`).
    pub fn backbone_parameter_count(&self) -> usize {
        self.layer_weights.iter().map(Vec::len).sum::<usize>() + self.layer_biases.len()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(LcnError::DimensionMismatch {
                what: "input",
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        Ok(())
    }
}

/// Everything the forward pass produces for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub pre_activations: Vec<f64>,
    pub post_activations: Vec<f64>,
    pub pattern: ActivationPattern,
    pub jacobian_rows: Vec<Vec<f64>>,
    pub bias_features: Vec<f64>,
    pub lambda: f64,
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(LcnError::InvalidConfig(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )));
    }
    Ok(())
}

#[inline]
pub(crate) fn dot(w: &[f64], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in w.iter().zip(v) {
        acc += a * b;
    }
    acc
}

/// Pre- and post-activations for every layer.
pub(crate) fn activations(params: &LcnParameters, x: &[f64], lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let m = params.depth;
    let mut pre = Vec::with_capacity(m);
    let mut u = Vec::with_capacity(params.input_dim + m);
    u.extend_from_slice(x);
    for (w, &b) in params.layer_weights.iter().zip(&params.layer_biases) {
        let z = dot(w, &u) + b;
        pre.push(z);
        u.push(annealed_activation(z, lambda));
    }
    let post = u.split_off(params.input_dim);
    (pre, post)
}

/// Hard activation pattern at the given input (ReLU semantics).
pub fn activation_pattern(params: &LcnParameters, x: &[f64]) -> Result<ActivationPattern> {
    params.check_input(x)?;
    let (pre, _) = activations(params, x, 1.0);
    Ok(ActivationPattern::new(pre.iter().map(|&z| indicator(z)).collect()))
}

pub fn forward(params: &LcnParameters, x: &[f64], lambda: f64) -> Result<ForwardTrace> {
    params.check_input(x)?;
    check_lambda(lambda)?;
    let (pre, post) = activations(params, x, lambda);
    let (jacobian_rows, bias_features) = jacobian_dp(params, x, &pre, &post, lambda, None);
    let pattern = ActivationPattern::new(pre.iter().map(|&z| indicator(z)).collect());
    Ok(ForwardTrace {
        pre_activations: pre,
        post_activations: post,
        pattern,
        jacobian_rows,
        bias_features,
        lambda,
    })
}

/// Computes `∇_x a^i` for all neurons in one sweep:
///
/// ```text
/// ∇_x a^1 = s^1 · W^1
/// ∇_x a^i = s^i · (W^i_{1:D} + Σ_{k<i} W^i_{D+k} · ∇_x a^k)
/// ```
///
/// where `s^i = a'(z^i)` is the indicator under ReLU and the annealed
/// derivative otherwise. Bias features are `a^i − (∇_x a^i)ᵀx`; under ReLU
/// they are produced by the matching recursion on the biases so they are
/// exactly constant within a region.
///
/// `ops`, when given, is incremented once per inner-summation term (one
/// scalar-times-row update), the quantity whose count is quadratic in `M`.
pub fn jacobian_dp(
    params: &LcnParameters,
    x: &[f64],
    pre: &[f64],
    post: &[f64],
    lambda: f64,
    mut ops: Option<&mut u64>,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let d = params.input_dim;
    let m = params.depth;
    let hard = lambda == 1.0;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut biases: Vec<f64> = Vec::with_capacity(m);
    for i in 0..m {
        let w = &params.layer_weights[i];
        let s = annealed_derivative(pre[i], lambda);
        let mut g = w[..d].to_vec();
        let mut beta = params.layer_biases[i];
        for k in 0..i {
            let c = w[d + k];
            for (gj, rj) in g.iter_mut().zip(&rows[k]) {
                *gj += c * rj;
            }
            if hard {
                beta += c * biases[k];
            }
            if let Some(n) = ops.as_deref_mut() {
                *n += 1;
            }
        }
        g.iter_mut().for_each(|v| *v *= s);
        let bias = if hard { s * beta } else { post[i] - dot(&g, x) };
        rows.push(g);
        biases.push(bias);
    }
    (rows, biases)
}

/// `(∇_x a^1, …, ∇_x a^M, c^1, …, c^M)`, the layout named by [`FEATURE_LAYOUT`].
pub fn feature_vector(trace: &ForwardTrace) -> Vec<f64> {
    let mut out: Vec<f64> = trace.jacobian_rows.iter().flatten().copied().collect();
    out.extend_from_slice(&trace.bias_features);
    out
}

pub fn predict(params: &LcnParameters, x: &[f64], lambda: f64) -> Result<Vec<f64>> {
    params.check_input(x)?;
    check_lambda(lambda)?;
    match &params.head {
        OutputHead::Table(table) => {
            if lambda != 1.0 {
                return Err(LcnError::TableNeedsHardActivation(lambda));
            }
            let (pre, _) = activations(params, x, 1.0);
            let pattern = ActivationPattern::new(pre.iter().map(|&z| indicator(z)).collect());
            Ok(table.lookup(&pattern))
        }
        OutputHead::FullyConnected(head) => {
            let trace = forward(params, x, lambda)?;
            Ok(head.forward(&feature_vector(&trace)))
        }
        OutputHead::Linear(head) => {
            let (_, post) = activations(params, x, lambda);
            let mut u = x.to_vec();
            u.extend_from_slice(&post);
            Ok(head.layer.apply(&u))
        }
    }
}

/// [`predict`] at the variant's inference-time λ.
pub fn predict_eval(params: &LcnParameters, x: &[f64]) -> Result<Vec<f64>> {
    predict(params, x, params.variant.eval_lambda())
}

/// Evaluates `f` on each row, split into contiguous chunks across `threads`
/// scoped workers. Output order matches input order.
pub fn par_map_rows<T, F>(rows: &[Vec<f64>], threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&[f64]) -> Result<T> + Sync,
{
    let threads = threads.max(1).min(rows.len().max(1));
    if threads == 1 {
        return rows.iter().map(|r| f(r)).collect();
    }
    let chunk = rows.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = rows
            .chunks(chunk)
            .map(|part| {
                let f = &f;
                scope.spawn(move || part.iter().map(|r| f(r)).collect::<Result<Vec<T>>>())
            })
            .collect();
        let mut out = Vec::with_capacity(rows.len());
        for h in handles {
            out.extend(h.join().expect("prediction worker panicked")?);
        }
        Ok(out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::head::PatternTable;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn example_one_neuron(head: OutputHead) -> LcnParameters {
        LcnParameters::new(2, vec![vec![1.0, -1.0]], vec![1.0], head, Variant::Lcn).unwrap()
    }

    fn example_two_neurons() -> LcnParameters {
        let head = OutputHead::Table(PatternTable::new(1));
        LcnParameters::new(
            2,
            vec![vec![1.0, -1.0], vec![-4.0, 1.0, 4.0]],
            vec![1.0, 4.0],
            head,
            Variant::Lcn,
        )
        .unwrap()
    }

    #[test]
    fn example_single_neuron_forward() {
        let p = example_one_neuron(OutputHead::Table(PatternTable::new(1)));
        let t = forward(&p, &[0.0, 0.0], 1.0).unwrap();
        assert_eq!(t.pre_activations, vec![1.0]);
        assert_eq!(t.post_activations, vec![1.0]);
        assert_eq!(t.pattern.bits(), &[true]);
    }

    #[test]
    fn example_two_neuron_jacobian_and_features() {
        let p = example_two_neurons();
        let t = forward(&p, &[0.0, 0.0], 1.0).unwrap();
        assert_eq!(t.pattern.bits(), &[true, true]);
        assert_eq!(t.jacobian_rows, vec![vec![1.0, -1.0], vec![0.0, -3.0]]);
        assert_eq!(t.bias_features, vec![1.0, 8.0]);
        assert_eq!(feature_vector(&t), vec![1.0, -1.0, 0.0, -3.0, 1.0, 8.0]);
    }

    #[test]
    fn example_table_prediction() {
        let mut table = PatternTable::new(1);
        table.insert("1", vec![1.0]).unwrap();
        table.insert("0", vec![-1.0]).unwrap();
        let p = example_one_neuron(OutputHead::Table(table));
        assert_eq!(predict(&p, &[0.0, 0.0], 1.0).unwrap(), vec![1.0]);
        assert_eq!(predict(&p, &[-2.0, 0.0], 1.0).unwrap(), vec![-1.0]);
        assert!(matches!(
            predict(&p, &[0.0, 0.0], 0.5),
            Err(LcnError::TableNeedsHardActivation(_))
        ));
    }

    #[test]
    fn zero_weights_sit_on_the_boundary() {
        let p = LcnParameters::new(
            3,
            vec![vec![0.0; 3], vec![0.0; 4], vec![0.0; 5]],
            vec![0.0; 3],
            OutputHead::Table(PatternTable::new(1)),
            Variant::Lcn,
        )
        .unwrap();
        let t = forward(&p, &[0.3, -2.0, 5.0], 1.0).unwrap();
        assert_eq!(t.pre_activations, vec![0.0; 3]);
        assert_eq!(t.post_activations, vec![0.0; 3]);
        assert_eq!(t.pattern.bits(), &[true, true, true]);
    }

    #[test]
    fn dead_region_zeroes_features() {
        let p = LcnParameters::new(
            2,
            vec![vec![0.5, 0.5], vec![1.0, -1.0, 2.0]],
            vec![-10.0, -10.0],
            OutputHead::Table(PatternTable::new(1)),
            Variant::Lcn,
        )
        .unwrap();
        let t = forward(&p, &[0.1, 0.2], 1.0).unwrap();
        assert_eq!(t.pattern.bits(), &[false, false]);
        assert!(feature_vector(&t).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_matches_explicit_concatenation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = LcnParameters::init(&Architecture::new(4, Variant::Lcn), 3, 1, &mut rng).unwrap();
        let x = [0.4, -1.1, 0.9];
        let t = forward(&p, &x, 1.0).unwrap();
        // Materialize ã^{i-1} explicitly for each layer.
        let mut post: Vec<f64> = Vec::new();
        for i in 0..4 {
            let tilde: Vec<f64> = x.iter().chain(post.iter()).copied().collect();
            let z: f64 = p.layer_weights()[i]
                .iter()
                .zip(&tilde)
                .map(|(w, v)| w * v)
                .sum::<f64>()
                + p.layer_biases()[i];
            assert_abs_diff_eq!(t.pre_activations[i], z, epsilon = 1e-14);
            post.push(z.max(0.0));
        }
    }

    #[test]
    fn soft_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = LcnParameters::init(&Architecture::new(6, Variant::Alcn), 4, 1, &mut rng).unwrap();
        let x = [0.3, -0.2, 0.8, -0.6];
        let lambda = 0.3;
        let t = forward(&p, &x, lambda).unwrap();
        let h = 1e-6;
        for i in 0..6 {
            for j in 0..4 {
                let mut xp = x;
                xp[j] += h;
                let mut xm = x;
                xm[j] -= h;
                let ap = activations(&p, &xp, lambda).1[i];
                let am = activations(&p, &xm, lambda).1[i];
                let fd = (ap - am) / (2.0 * h);
                let an = t.jacobian_rows[i][j];
                let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-8);
                assert!(rel <= 1e-5, "neuron {i} coord {j}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn annealing_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = LcnParameters::init(&Architecture::new(5, Variant::Lcn), 3, 1, &mut rng).unwrap();
        let x = [0.2, 0.5, -0.7];
        let (pre, post) = activations(&p, &x, 1.0);
        for (z, a) in pre.iter().zip(&post) {
            assert_eq!(*a, z.max(0.0));
        }
        let (pre, post) = activations(&p, &x, 0.0);
        for (z, a) in pre.iter().zip(&post) {
            assert_eq!(*a, crate::activation::softplus(*z));
        }
    }

    #[test]
    fn dp_counts_quadratic_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = LcnParameters::init(&Architecture::new(8, Variant::Lcn), 2, 1, &mut rng).unwrap();
        let (pre, post) = activations(&p, &[0.1, 0.2], 1.0);
        let mut ops = 0;
        jacobian_dp(&p, &[0.1, 0.2], &pre, &post, 1.0, Some(&mut ops));
        assert_eq!(ops, 8 * 7 / 2);
    }

    #[test]
    fn rejects_bad_shapes() {
        let head = OutputHead::Table(PatternTable::new(1));
        assert!(LcnParameters::new(2, vec![vec![1.0, 1.0, 1.0]], vec![0.0], head.clone(), Variant::Lcn).is_err());
        assert!(LcnParameters::new(2, vec![vec![1.0, 1.0]], vec![], head.clone(), Variant::Lcn).is_err());
        assert!(LcnParameters::new(2, vec![vec![f64::NAN, 1.0]], vec![0.0], head.clone(), Variant::Lcn).is_err());
        assert!(LcnParameters::new(2, vec![vec![1.0, 1.0]], vec![0.0], head, Variant::Alcn).is_err());
        let p = example_two_neurons();
        assert!(matches!(
            forward(&p, &[1.0], 1.0),
            Err(LcnError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn pattern_index_round_trip() {
        let p = ActivationPattern::from_key("1011").unwrap();
        assert_eq!(p.index(), Some(0b1011));
        assert_eq!(ActivationPattern::from_index(0b1011, 4), p);
    }

    #[test]
    fn serde_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let arch = Architecture::new(3, Variant::Lcn).with_head_hidden(vec![4]);
        let p = LcnParameters::init(&arch, 5, 2, &mut rng).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        let back: LcnParameters = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        assert!(json.contains(FEATURE_LAYOUT));
    }

    #[test]
    fn parallel_map_preserves_order() {
        let rows: Vec<Vec<f64>> = (0..37).map(|i| vec![i as f64]).collect();
        let out = par_map_rows(&rows, 4, |r| Ok(r[0] * 2.0)).unwrap();
        assert_eq!(out, (0..37).map(|i| 2.0 * i as f64).collect::<Vec<_>>());
    }
}
