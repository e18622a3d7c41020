//! Independent oracles for the network, training and tree code.
//!
//! The evaluators here re-derive every quantity with their own loops: a
//! per-neuron reverse sweep for the input Jacobian, a direct head
//! evaluation, central finite differences for parameter gradients, and the
//! closed-form coefficients of the collinearity and span properties of tree
//! node weights. Each suite returns an [`OracleReport`] whose failures carry
//! the seed that reproduces them.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LcnError, Result};
use crate::head::{DenseLayer, HiddenActivation, OutputHead, PatternTable};
use crate::metrics::{auc, subset_auc};
use crate::network::{forward, predict, Architecture, LcnParameters, Variant};
use crate::rng::{seeded, Stream};
use crate::training::{assign_flat_params, backward, flatten_params, Batch, DropConnectMask, LossKind};
use crate::tree::{lcn_to_tree, tree_predict, ObliqueTree};

/// Above this depth the structural checks sample pattern pairs.
pub const EXHAUSTIVE_DEPTH: usize = 10;
pub const SAMPLED_PAIRS: usize = 10_000;
/// Parameters whose perturbation by this much flips a kink are skipped.
pub const KINK_PROBE: f64 = 1e-4;
pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for relative gradient error.
pub const GRAD_REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub suite: String,
    pub cases: usize,
    pub skipped: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub failures: Vec<Failure>,
}

impl OracleReport {
    pub fn new(suite: &str, tolerance: f64) -> Self {
        OracleReport {
            suite: suite.to_string(),
            cases: 0,
            skipped: 0,
            max_deviation: 0.0,
            tolerance,
            failures: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    /// Records one case; deviations above the tolerance (or NaN) fail.
    pub fn record(&mut self, seed: u64, deviation: f64, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if deviation.is_nan() || deviation > self.max_deviation {
            self.max_deviation = if deviation.is_nan() { f64::NAN } else { deviation };
        }
        if deviation.is_nan() || deviation > self.tolerance {
            if self.failures.len() < 20 {
                self.failures.push(Failure {
                    seed,
                    message: format!("{} (deviation {deviation:e})", describe()),
                });
            } else {
                self.failures.last_mut().expect("non-empty").message = "further failures omitted".into();
            }
        }
    }

    pub fn merge(&mut self, other: OracleReport) {
        self.cases += other.cases;
        self.skipped += other.skipped;
        if other.max_deviation.is_nan() || other.max_deviation > self.max_deviation {
            self.max_deviation = other.max_deviation;
        }
        self.failures.extend(other.failures);
    }
}

#[inline]
fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

fn act(z: f64, lambda: f64) -> f64 {
    let soft = relu(z) + (-z.abs()).exp().ln_1p();
    lambda * relu(z) + (1.0 - lambda) * soft
}

fn act_slope(z: f64, lambda: f64) -> f64 {
    let hard = if z >= 0.0 { 1.0 } else { 0.0 };
    let sig = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    lambda * hard + (1.0 - lambda) * sig
}

/// Pre-activations and activations, weights optionally scaled per entry.
fn reference_layers(params: &LcnParameters, x: &[f64], lambda: f64, mask: Option<&DropConnectMask>) -> (Vec<f64>, Vec<f64>) {
    let d = params.input_dim();
    let mut z = Vec::new();
    let mut a: Vec<f64> = Vec::new();
    for (i, (w, b)) in params.layer_weights().iter().zip(params.layer_biases()).enumerate() {
        let f = |j: usize| mask.map_or(1.0, |m| m.factor(i, j));
        let mut s = *b;
        for j in 0..d {
            s += f(j) * w[j] * x[j];
        }
        for k in 0..i {
            s += f(d + k) * w[d + k] * a[k];
        }
        z.push(s);
        a.push(act(s, lambda));
    }
    (z, a)
}

/// Jacobian rows by a separate reverse sweep per neuron, `Θ(M³·D)` in
/// total. Bias features are `a^i − (∇_x a^i)ᵀx`.
fn reference_features(
    params: &LcnParameters,
    x: &[f64],
    lambda: f64,
    mask: Option<&DropConnectMask>,
) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let d = params.input_dim();
    let m = params.depth();
    let (z, a) = reference_layers(params, x, lambda, mask);
    let w = |i: usize, j: usize| params.layer_weights()[i][j] * mask.map_or(1.0, |mm| mm.factor(i, j));
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let mut adj_z = vec![0.0; m];
        adj_z[i] = act_slope(z[i], lambda);
        for k in (0..i).rev() {
            let mut adj_a = 0.0;
            for j in k + 1..=i {
                adj_a += adj_z[j] * w(j, d + k);
            }
            adj_z[k] = adj_a * act_slope(z[k], lambda);
        }
        let mut row = vec![0.0; d];
        for (j, &g) in adj_z.iter().enumerate().take(i + 1) {
            for (c, r) in row.iter_mut().enumerate() {
                *r += g * w(j, c);
            }
        }
        rows.push(row);
    }
    let bias: Vec<f64> = (0..m)
        .map(|i| a[i] - rows[i].iter().zip(x).map(|(r, v)| r * v).sum::<f64>())
        .collect();
    (rows, bias, a)
}

/// `∇_x a^i` for every neuron, computed neuron by neuron.
pub fn naive_jacobian(params: &LcnParameters, x: &[f64], lambda: f64) -> Vec<Vec<f64>> {
    reference_features(params, x, lambda, None).0
}

fn dense(layer: &DenseLayer, h: &[f64]) -> Vec<f64> {
    (0..layer.out_dim)
        .map(|o| {
            let mut s = layer.bias[o];
            for (j, v) in h.iter().enumerate() {
                s += layer.weights[o * layer.in_dim + j] * v;
            }
            s
        })
        .collect()
}

fn reference_output(params: &LcnParameters, x: &[f64], lambda: f64, mask: Option<&DropConnectMask>) -> Vec<f64> {
    match params.head() {
        OutputHead::Table(t) => {
            let (z, _) = reference_layers(params, x, 1.0, mask);
            let key: String = z.iter().map(|&v| if v >= 0.0 { '1' } else { '0' }).collect();
            t.lookup(&crate::network::ActivationPattern::from_key(&key).expect("binary key"))
        }
        OutputHead::FullyConnected(h) => {
            let (rows, bias, _) = reference_features(params, x, lambda, mask);
            let mut v: Vec<f64> = rows.concat();
            v.extend(bias);
            let n = h.layers.len();
            for (i, l) in h.layers.iter().enumerate() {
                v = dense(l, &v);
                if i + 1 < n && h.hidden_activation == HiddenActivation::Relu {
                    v.iter_mut().for_each(|u| *u = relu(*u));
                }
            }
            v
        }
        OutputHead::Linear(h) => {
            let (_, a) = reference_layers(params, x, lambda, mask);
            let mut u = x.to_vec();
            u.extend(a);
            dense(&h.layer, &u)
        }
    }
}

/// Model output recomputed without the main evaluation path.
pub fn reference_predict(params: &LcnParameters, x: &[f64], lambda: f64) -> Vec<f64> {
    reference_output(params, x, lambda, None)
}

fn reference_loss(
    params: &LcnParameters,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    lambda: f64,
    loss: LossKind,
    mask: Option<&DropConnectMask>,
) -> f64 {
    let mut total = 0.0;
    for (x, t) in inputs.iter().zip(targets) {
        let y = reference_output(params, x, lambda, mask);
        let mut l = 0.0;
        for (&p, &q) in y.iter().zip(t) {
            l += match loss {
                LossKind::CrossEntropy => relu(p) + (-p.abs()).exp().ln_1p() - q * p,
                LossKind::MeanSquaredError => (p - q) * (p - q),
            };
        }
        total += l / y.len() as f64;
    }
    total / inputs.len() as f64
}

/// Signs of every pre-activation at which the loss has a kink.
fn kink_signs(params: &LcnParameters, inputs: &[Vec<f64>], lambda: f64, mask: Option<&DropConnectMask>) -> Vec<bool> {
    let mut out = Vec::new();
    for x in inputs {
        let (z, _) = reference_layers(params, x, lambda, mask);
        if lambda > 0.0 {
            out.extend(z.iter().map(|&v| v >= 0.0));
        }
        if let OutputHead::FullyConnected(h) = params.head() {
            if h.hidden_activation == HiddenActivation::Relu && h.layers.len() > 1 {
                let (rows, bias, _) = reference_features(params, x, lambda, mask);
                let mut v: Vec<f64> = rows.concat();
                v.extend(bias);
                for l in &h.layers[..h.layers.len() - 1] {
                    v = dense(l, &v);
                    out.extend(v.iter().map(|&u| u >= 0.0));
                    v.iter_mut().for_each(|u| *u = relu(*u));
                }
            }
        }
    }
    out
}

/// Central differences of the mean batch loss, in flattened parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDifference {
    pub grads: Vec<f64>,
    /// Parameters whose `±KINK_PROBE` perturbation changes a kink sign.
    pub skipped: Vec<bool>,
}

pub fn finite_difference_grads(
    params: &LcnParameters,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    lambda: f64,
    loss: LossKind,
    mask: Option<&DropConnectMask>,
    step: f64,
) -> Result<FiniteDifference> {
    if step.is_nan() || step <= 0.0 {
        return Err(LcnError::InvalidConfig(format!("finite-difference step must be positive, got {step}")));
    }
    if matches!(params.head(), OutputHead::Table(_)) {
        return Err(LcnError::InvalidModel("a table head has no parameter gradients".into()));
    }
    let base = flatten_params(params);
    let signs = kink_signs(params, inputs, lambda, mask);
    let mut work = params.clone();
    let mut grads = Vec::with_capacity(base.len());
    let mut skipped = Vec::with_capacity(base.len());
    let eval = |theta: &[f64], work: &mut LcnParameters| {
        assign_flat_params(work, theta);
        reference_loss(work, inputs, targets, lambda, loss, mask)
    };
    let mut theta = base.clone();
    for i in 0..base.len() {
        let probe = KINK_PROBE.max(step);
        let mut flips = false;
        for delta in [probe, -probe] {
            theta[i] = base[i] + delta;
            assign_flat_params(&mut work, &theta);
            flips |= kink_signs(&work, inputs, lambda, mask) != signs;
        }
        theta[i] = base[i] + step;
        let up = eval(&theta, &mut work);
        theta[i] = base[i] - step;
        let down = eval(&theta, &mut work);
        theta[i] = base[i];
        grads.push((up - down) / (2.0 * step));
        skipped.push(flips);
    }
    Ok(FiniteDifference { grads, skipped })
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_REL_FLOOR)
}

/// Compares [`backward`] with [`finite_difference_grads`] on one batch.
#[allow(clippy::too_many_arguments)]
pub fn check_gradients(
    params: &LcnParameters,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    lambda: f64,
    loss: LossKind,
    mask: Option<&DropConnectMask>,
    seed: u64,
    tolerance: f64,
) -> Result<OracleReport> {
    let xs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
    let ts: Vec<&[f64]> = targets.iter().map(Vec::as_slice).collect();
    let batch = Batch {
        inputs: &xs,
        targets: &ts,
        offsets: None,
    };
    let (_, g) = backward(params, &batch, lambda, loss, mask)?;
    let analytic = g.flatten();
    let fd = finite_difference_grads(params, inputs, targets, lambda, loss, mask, FD_STEP)?;
    let mut report = OracleReport::new("gradient", tolerance);
    for (i, ((&a, &n), &skip)) in analytic.iter().zip(&fd.grads).zip(&fd.skipped).enumerate() {
        if skip {
            report.skipped += 1;
            continue;
        }
        report.record(seed, relative_error(a, n), || {
            format!("parameter {i} at lambda {lambda}: backward {a:e}, finite difference {n:e}")
        });
    }
    Ok(report)
}

/// Random parameters for the given shape with a fully-connected, table or
/// linear head. Table heads get a random value for every pattern.
pub fn random_params(
    depth: usize,
    input_dim: usize,
    output_dim: usize,
    head: &str,
    head_hidden: &[usize],
    seed: u64,
) -> Result<LcnParameters> {
    let variant = if head == "linear" { Variant::Lln } else { Variant::Lcn };
    let arch = Architecture::new(depth, variant).with_head_hidden(head_hidden.to_vec());
    let p = LcnParameters::init_seeded(&arch, input_dim, output_dim, seed)?;
    match head {
        "table" => {
            if depth > 16 {
                return Err(LcnError::InvalidConfig("random table heads are limited to depth 16".into()));
            }
            let mut rng = seeded(seed, Stream::Verification);
            let mut t = PatternTable::new(output_dim);
            for idx in 0..1u64 << depth {
                let v = (0..output_dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
                t.insert_pattern(&crate::network::ActivationPattern::from_index(idx, depth), v)?;
            }
            LcnParameters::new(
                input_dim,
                p.layer_weights().to_vec(),
                p.layer_biases().to_vec(),
                OutputHead::Table(t),
                Variant::Lcn,
            )
        }
        "fc" | "linear" => Ok(p),
        other => Err(LcnError::InvalidConfig(format!("unknown head kind `{other}`"))),
    }
}

fn index_to_bits(idx: usize, len: usize) -> Vec<bool> {
    (0..len).map(|i| (idx >> (len - 1 - i)) & 1 == 1).collect()
}

/// `|a − proj_b(a)| / |a|`, the sine of the angle between `a` and `b`.
fn sine(a: &[f64], b: &[f64]) -> f64 {
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let bb: f64 = b.iter().map(|y| y * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let c = ab / bb;
    let r: f64 = a.iter().zip(b).map(|(x, y)| (x - c * y).powi(2)).sum();
    (r / aa).sqrt()
}

/// The closed-form coefficient for flipping bit `j` (0-based) of `r`, at level
/// `r.len()`, from the layer weights alone.
pub fn lemma1_alpha(params: &LcnParameters, r: &[bool], j: usize) -> f64 {
    let d = params.input_dim();
    let level = r.len();
    assert!(j < level);
    let sign = if r[j] { 1.0 } else { -1.0 };
    // alpha[l] for l in j+1..=level.
    let mut alpha = vec![0.0; level + 1];
    for l in j + 1..=level {
        let w = &params.layer_weights()[l];
        let mut v = w[d + j] * sign;
        for q in j + 1..l {
            if r[q] {
                v += w[d + q] * alpha[q];
            }
        }
        alpha[l] = v;
    }
    alpha[level]
}

/// Collinearity of `ω_r − ω_{r′}` with `ω_{r_{1:j−1}}` for every pair of
/// same-depth patterns differing in one bit, and agreement with the
/// closed-form coefficient.
pub fn check_lemma1(params: &LcnParameters, seed: u64) -> Result<OracleReport> {
    let tree = lcn_to_tree(params)?;
    let m = params.depth();
    let mut report = OracleReport::new("lemma1", 1e-9);
    let visit = |r: &[bool], j: usize, report: &mut OracleReport| {
        let mut rp = r.to_vec();
        rp[j] = !rp[j];
        let wr = &tree.node(r).weight;
        let wp = &tree.node(&rp).weight;
        let base = &tree.node(&r[..j]).weight;
        let diff: Vec<f64> = wr.iter().zip(wp).map(|(a, b)| a - b).collect();
        let alpha = lemma1_alpha(params, r, j);
        let coord = diff
            .iter()
            .zip(base)
            .map(|(dv, b)| (dv - alpha * b).abs())
            .fold(0.0, f64::max);
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let sin = if norm(&diff) > 1e-12 && norm(base) > 1e-12 {
            sine(&diff, base)
        } else {
            0.0
        };
        report.record(seed, coord.max(sin), || {
            format!(
                "patterns {} vs {} (flip bit {j}, depth {}): alpha {alpha}, sin {sin:e}",
                key(r),
                key(&rp),
                r.len()
            )
        });
    };
    if m <= EXHAUSTIVE_DEPTH {
        for level in 1..m {
            for idx in 0..1usize << level {
                let r = index_to_bits(idx, level);
                for j in 0..level {
                    visit(&r, j, &mut report);
                }
            }
        }
    } else if m > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..SAMPLED_PAIRS {
            let level = rng.gen_range(1..m);
            let r: Vec<bool> = (0..level).map(|_| rng.gen()).collect();
            let j = rng.gen_range(0..level);
            visit(&r, j, &mut report);
        }
    }
    Ok(report)
}

fn key(r: &[bool]) -> String {
    r.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// Least-squares coefficients of `ω_r − ω_{r′}` on the basis
/// `{ω_{r_{1:j−1}} : j ∈ flips}` (`r′` is `r` with `flips` inverted) and
/// the residual relative to `|ω_r − ω_{r′}|` (0 when the difference is 0).
pub fn span_coefficients(tree: &ObliqueTree, r: &[bool], flips: &[usize]) -> (Vec<f64>, f64) {
    let mut rp = r.to_vec();
    for &j in flips {
        rp[j] = !rp[j];
    }
    let diff: Vec<f64> = tree
        .node(r)
        .weight
        .iter()
        .zip(&tree.node(&rp).weight)
        .map(|(a, b)| a - b)
        .collect();
    let basis: Vec<&[f64]> = flips.iter().map(|&j| tree.node(&r[..j]).weight.as_slice()).collect();
    least_squares(&basis, &diff)
}

fn least_squares(basis: &[&[f64]], target: &[f64]) -> (Vec<f64>, f64) {
    let d = target.len();
    let b = DVector::from_column_slice(target);
    let bn = b.norm();
    if basis.is_empty() {
        return (Vec::new(), if bn == 0.0 { 0.0 } else { 1.0 });
    }
    let a = DMatrix::from_fn(d, basis.len(), |i, k| basis[k][i]);
    let svd = a.clone().svd(true, true);
    let coef = svd
        .solve(&b, 1e-13 * svd.singular_values.max().max(1.0))
        .unwrap_or_else(|_| DVector::zeros(basis.len()));
    let res = (&a * &coef - &b).norm();
    let rel = if bn > 0.0 { res / bn } else { 0.0 };
    (coef.iter().copied().collect(), rel)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Span property for pattern pairs at Hamming distance `n_flips`.
pub fn check_span(params: &LcnParameters, n_flips: usize, seed: u64) -> Result<OracleReport> {
    if n_flips == 0 {
        return Err(LcnError::InvalidConfig("n_flips must be at least 1".into()));
    }
    let tree = lcn_to_tree(params)?;
    let m = params.depth();
    let mut report = OracleReport::new(&format!("span_{n_flips}"), 1e-8);
    let visit = |r: &[bool], flips: &[usize], report: &mut OracleReport| {
        let (coef, rel) = span_coefficients(&tree, r, flips);
        report.record(seed, rel, || {
            format!("pattern {} flips {flips:?}: residual {rel:e}, coefficients {coef:?}", key(r))
        });
    };
    if m <= EXHAUSTIVE_DEPTH {
        for level in n_flips..m {
            let flip_sets = combinations(level, n_flips);
            for idx in 0..1usize << level {
                let r = index_to_bits(idx, level);
                for flips in &flip_sets {
                    visit(&r, flips, &mut report);
                }
            }
        }
    } else if n_flips < m {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..SAMPLED_PAIRS {
            let level = rng.gen_range(n_flips..m);
            let r: Vec<bool> = (0..level).map(|_| rng.gen()).collect();
            let mut pos: Vec<usize> = (0..level).collect();
            rand::seq::SliceRandom::shuffle(pos.as_mut_slice(), &mut rng);
            let mut flips = pos[..n_flips].to_vec();
            flips.sort_unstable();
            visit(&r, &flips, &mut report);
        }
    }
    Ok(report)
}

/// `ω_{r_{1:i}} − W^{i+1}_{1:D}` lies in the span of the node weights along
/// its own path.
pub fn check_layerwise(params: &LcnParameters, seed: u64) -> Result<OracleReport> {
    let tree = lcn_to_tree(params)?;
    let d = params.input_dim();
    let m = params.depth();
    let mut report = OracleReport::new("layerwise_span", 1e-8);
    let visit = |r: &[bool], report: &mut OracleReport| {
        let own = &params.layer_weights()[r.len()][..d];
        let target: Vec<f64> = tree.node(r).weight.iter().zip(own).map(|(a, b)| a - b).collect();
        let basis: Vec<&[f64]> = (0..r.len()).map(|k| tree.node(&r[..k]).weight.as_slice()).collect();
        let (_, rel) = least_squares(&basis, &target);
        report.record(seed, rel, || format!("pattern {}: residual {rel:e}", key(r)));
    };
    if m <= EXHAUSTIVE_DEPTH {
        for level in 1..m {
            for idx in 0..1usize << level {
                visit(&index_to_bits(idx, level), &mut report);
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..SAMPLED_PAIRS {
            let level = rng.gen_range(1..m);
            let r: Vec<bool> = (0..level).map(|_| rng.gen()).collect();
            visit(&r, &mut report);
        }
    }
    Ok(report)
}

/// Network against its converted tree on the given inputs: output gap and
/// routing/activation pattern mismatches (a mismatch counts as infinite).
pub fn check_equivalence(params: &LcnParameters, inputs: &[Vec<f64>], seed: u64) -> Result<OracleReport> {
    let tree = lcn_to_tree(params)?;
    let mut report = OracleReport::new("network_tree_equivalence", 1e-8);
    for (n, x) in inputs.iter().enumerate() {
        let net = predict(params, x, 1.0)?;
        let via_tree = tree_predict(&tree, x)?;
        let gap = net
            .iter()
            .zip(&via_tree)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let same_route = tree.route(x)? == forward(params, x, 1.0)?.pattern;
        let dev = if same_route { gap } else { f64::INFINITY };
        report.record(seed, dev, || format!("row {n}: output gap {gap:e}, routing agrees: {same_route}"));
    }
    Ok(report)
}

/// Pairwise definition of subset AUC with half credit for ties.
pub fn brute_force_subset_auc(scores: &[f64], labels: &[f64], subset: &[usize]) -> Option<f64> {
    let mut idx = subset.to_vec();
    idx.sort_unstable();
    idx.dedup();
    let (mut num, mut den) = (0.0, 0.0);
    for &i in &idx {
        for j in 0..scores.len() {
            let credit = if scores[i] == scores[j] {
                0.5
            } else if (scores[i] > scores[j]) == (labels[i] > labels[j]) {
                1.0
            } else {
                0.0
            };
            if labels[i] != labels[j] {
                den += 1.0;
                num += credit;
            }
        }
    }
    (den > 0.0).then(|| num / den)
}

pub const SUITES: &[&str] = &["jacobian", "gradient", "equivalence", "structure", "auc", "serialization"];

fn suite_rng(seed: u64, case: u64) -> (u64, ChaCha8Rng) {
    let s = seed.wrapping_mul(1_000_003).wrapping_add(case);
    (s, seeded(s, Stream::Verification))
}

/// Runs a named suite over seeded random cases. `scale` multiplies the
/// number of cases (1 = the quick default).
pub fn run_suite(name: &str, seed: u64, scale: usize) -> Result<OracleReport> {
    let scale = scale.max(1);
    match name {
        "jacobian" => {
            let mut report = OracleReport::new("jacobian", 1e-12);
            for case in 0..(20 * scale) as u64 {
                let (s, mut rng) = suite_rng(seed, case);
                let m = rng.gen_range(1..=8);
                let d = rng.gen_range(1..=16);
                let lambda = [0.0, 0.3, 0.7, 1.0][rng.gen_range(0..4)];
                let p = random_params(m, d, 1, "fc", &[], s)?;
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let t = forward(&p, &x, lambda)?;
                let (rows, bias, _) = reference_features(&p, &x, lambda, None);
                let dev = t
                    .jacobian_rows
                    .iter()
                    .flatten()
                    .zip(rows.iter().flatten())
                    .chain(t.bias_features.iter().zip(&bias))
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                report.record(s, dev, || format!("M={m} D={d} lambda={lambda}"));
            }
            Ok(report)
        }
        "gradient" => {
            let mut report = OracleReport::new("gradient", 1e-4);
            for case in 0..(10 * scale) as u64 {
                let (s, mut rng) = suite_rng(seed, case);
                let m = rng.gen_range(1..=6);
                let d = rng.gen_range(1..=6);
                let lambda = [0.0, 0.3, 0.7, 1.0][rng.gen_range(0..4)];
                let hidden: Vec<usize> = if rng.gen_bool(0.5) { vec![3] } else { vec![] };
                let kind = if rng.gen_bool(0.2) { "linear" } else { "fc" };
                let p = random_params(m, d, 2, kind, &hidden, s)?;
                let loss = if rng.gen_bool(0.5) {
                    LossKind::CrossEntropy
                } else {
                    LossKind::MeanSquaredError
                };
                let xs: Vec<Vec<f64>> = (0..3).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
                let ts: Vec<Vec<f64>> = (0..3)
                    .map(|_| (0..2).map(|_| f64::from(rng.gen_bool(0.5))).collect())
                    .collect();
                let mask = rng
                    .gen_bool(0.3)
                    .then(|| DropConnectMask::for_params(&p, 0.25, &mut rng));
                report.merge(check_gradients(&p, &xs, &ts, lambda, loss, mask.as_ref(), s, 1e-4)?);
            }
            Ok(report)
        }
        "equivalence" => {
            let mut report = OracleReport::new("network_tree_equivalence", 1e-8);
            for case in 0..(5 * scale) as u64 {
                let (s, mut rng) = suite_rng(seed, case);
                let m = rng.gen_range(1..=8);
                let d = rng.gen_range(2..=8);
                let head = if rng.gen_bool(0.5) { "table" } else { "fc" };
                let p = random_params(m, d, 2, head, &[4], s)?;
                let xs: Vec<Vec<f64>> =
                    (0..500).map(|_| (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
                report.merge(check_equivalence(&p, &xs, s)?);
            }
            Ok(report)
        }
        "structure" => {
            let mut report = OracleReport::new("structure", 1e-8);
            for case in 0..(3 * scale) as u64 {
                let (s, mut rng) = suite_rng(seed, case);
                let m = rng.gen_range(2..=7);
                let d = rng.gen_range(2..=6);
                let p = random_params(m, d, 1, "fc", &[], s)?;
                report.merge(check_lemma1(&p, s)?);
                for n in 1..m {
                    report.merge(check_span(&p, n, s)?);
                }
                report.merge(check_layerwise(&p, s)?);
            }
            Ok(report)
        }
        "auc" => {
            let mut report = OracleReport::new("auc", 0.0);
            for case in 0..(50 * scale) as u64 {
                let (s, mut rng) = suite_rng(seed, case);
                let n = rng.gen_range(2..=200);
                let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..20)) / 4.0).collect();
                let mut labels: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.4))).collect();
                labels[0] = 1.0;
                labels[1] = 0.0;
                let k = rng.gen_range(1..=n);
                let subset: Vec<usize> = (0..k).map(|_| rng.gen_range(0..n)).collect();
                let all: Vec<usize> = (0..n).collect();
                let full = auc(&scores, &labels)?;
                let brute_full = brute_force_subset_auc(&scores, &labels, &all).expect("both classes");
                let dev_full = (full - brute_full).abs().max((full - subset_auc(&scores, &labels, &all)?).abs());
                report.record(s, dev_full, || format!("auc over {n} rows"));
                if let Some(b) = brute_force_subset_auc(&scores, &labels, &subset) {
                    let fast = subset_auc(&scores, &labels, &subset)?;
                    report.record(s, (fast - b).abs(), || format!("subset auc, |I|={k}, N={n}"));
                }
            }
            Ok(report)
        }
        "serialization" => {
            let mut report = OracleReport::new("serialization", 0.0);
            for case in 0..(10 * scale) as u64 {
                let (s, mut rng) = suite_rng(seed, case);
                let m = rng.gen_range(1..=6);
                let d = rng.gen_range(1..=6);
                let head = ["fc", "table", "linear"][rng.gen_range(0..3)];
                let p = random_params(m, d, 2, head, &[3], s)?;
                let text = serde_json::to_string(&p).map_err(|e| LcnError::InvalidModel(e.to_string()))?;
                let back: LcnParameters =
                    serde_json::from_str(&text).map_err(|e| LcnError::InvalidModel(e.to_string()))?;
                let again = serde_json::to_string(&back).map_err(|e| LcnError::InvalidModel(e.to_string()))?;
                let dev = if back == p && again == text { 0.0 } else { 1.0 };
                report.record(s, dev, || format!("{head} head, M={m}, D={d}"));
            }
            Ok(report)
        }
        other => Err(LcnError::InvalidConfig(format!(
            "unknown suite `{other}`; expected one of {}",
            SUITES.join(", ")
        ))),
    }
}
