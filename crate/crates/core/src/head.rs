//! Output heads that map the backbone's locally constant representation to
//! predictions: a pattern table (canonical form), a fully-connected network
//! on the Jacobian features (standard form) and the affine head used by the
//! locally linear variant.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LcnError, Result};
use crate::network::ActivationPattern;

/// Uniform `[-a, a]` with `a = sqrt(6 / (fan_in + 1))`.
pub(crate) fn init_limit(fan_in: usize) -> f64 {
    (6.0 / (fan_in as f64 + 1.0)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    #[default]
    Relu,
    Identity,
}

impl HiddenActivation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            HiddenActivation::Relu => v.max(0.0),
            HiddenActivation::Identity => v,
        }
    }

    #[inline]
    fn derivative(self, v: f64) -> f64 {
        match self {
            HiddenActivation::Relu => {
                if v >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            HiddenActivation::Identity => 1.0,
        }
    }
}

/// Affine layer, row-major `out_dim × in_dim` weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        DenseLayer {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn random<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let limit = init_limit(in_dim);
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-limit..=limit))
            .collect();
        DenseLayer {
            in_dim,
            out_dim,
            weights,
            bias: vec![0.0; out_dim],
        }
    }

    #[inline]
    pub fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.in_dim..(o + 1) * self.in_dim]
    }

    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        (0..self.out_dim)
            .map(|o| {
                let mut acc = 0.0;
                for (w, v) in self.row(o).iter().zip(input) {
                    acc += w * v;
                }
                acc + self.bias[o]
            })
            .collect()
    }

    fn check(&self) -> Result<()> {
        if self.weights.len() != self.in_dim * self.out_dim || self.bias.len() != self.out_dim {
            return Err(LcnError::InvalidModel(format!(
                "dense layer {}x{} has {} weights and {} biases",
                self.out_dim,
                self.in_dim,
                self.weights.len(),
                self.bias.len()
            )));
        }
        Ok(())
    }
}

/// `g_φ`: affine layers with a hidden activation between them and none after
/// the last. No hidden layers means a linear model on the features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullyConnectedHead {
    pub layers: Vec<DenseLayer>,
    #[serde(default)]
    pub hidden_activation: HiddenActivation,
}

/// Intermediate values kept for the backward pass through a head.
#[derive(Debug, Clone)]
pub struct HeadCache {
    /// Input to each layer (post-activation of the previous one).
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each layer.
    pub pre: Vec<Vec<f64>>,
}

impl FullyConnectedHead {
    pub fn random<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        hidden_activation: HiddenActivation,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input_dim;
        for &h in hidden.iter().chain(std::iter::once(&output_dim)) {
            layers.push(DenseLayer::random(fan_in, h, rng));
            fan_in = h;
        }
        FullyConnectedHead {
            layers,
            hidden_activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map(|l| l.in_dim).unwrap_or(0)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.out_dim).unwrap_or(0)
    }

    /// Sets the final layer to exactly zero so the head outputs `0` everywhere.
    pub fn zero_output_layer(&mut self) {
        if let Some(last) = self.layers.last_mut() {
            last.weights.iter_mut().for_each(|w| *w = 0.0);
            last.bias.iter_mut().for_each(|b| *b = 0.0);
        }
    }

    pub fn forward(&self, features: &[f64]) -> Vec<f64> {
        let n = self.layers.len();
        let mut h = features.to_vec();
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut out = layer.apply(&h);
            if idx + 1 < n {
                out.iter_mut().for_each(|v| *v = self.hidden_activation.apply(*v));
            }
            h = out;
        }
        h
    }

    pub fn forward_cached(&self, features: &[f64]) -> (Vec<f64>, HeadCache) {
        let n = self.layers.len();
        let mut cache = HeadCache {
            inputs: Vec::with_capacity(n),
            pre: Vec::with_capacity(n),
        };
        let mut h = features.to_vec();
        for (idx, layer) in self.layers.iter().enumerate() {
            let pre = layer.apply(&h);
            let out = if idx + 1 < n {
                pre.iter().map(|&v| self.hidden_activation.apply(v)).collect()
            } else {
                pre.clone()
            };
            cache.inputs.push(std::mem::replace(&mut h, out));
            cache.pre.push(pre);
        }
        (h, cache)
    }

    /// Accumulates parameter gradients into `grads` and returns `∂loss/∂features`.
    pub fn backward(&self, cache: &HeadCache, d_out: &[f64], grads: &mut [DenseLayer]) -> Vec<f64> {
        let n = self.layers.len();
        let mut delta = d_out.to_vec();
        for idx in (0..n).rev() {
            let layer = &self.layers[idx];
            if idx + 1 < n {
                for (d, &p) in delta.iter_mut().zip(&cache.pre[idx]) {
                    *d *= self.hidden_activation.derivative(p);
                }
            }
            let input = &cache.inputs[idx];
            let g = &mut grads[idx];
            let mut d_in = vec![0.0; layer.in_dim];
            for o in 0..layer.out_dim {
                let d = delta[o];
                g.bias[o] += d;
                if d == 0.0 {
                    continue;
                }
                let row = layer.row(o);
                let g_row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for j in 0..layer.in_dim {
                    g_row[j] += d * input[j];
                    d_in[j] += d * row[j];
                }
            }
            delta = d_in;
        }
        delta
    }

    /// Hidden-unit sign pattern, used to detect kinks in gradient checks.
    pub fn hidden_pattern(&self, features: &[f64]) -> Vec<bool> {
        let (_, cache) = self.forward_cached(features);
        let n = cache.pre.len();
        cache
            .pre
            .iter()
            .take(n.saturating_sub(1))
            .flat_map(|p| p.iter().map(|&v| v >= 0.0))
            .collect()
    }

    pub(crate) fn check(&self, input_dim: usize, output_dim: usize) -> Result<()> {
        if self.layers.is_empty() {
            return Err(LcnError::InvalidModel("fully-connected head has no layers".into()));
        }
        let mut fan_in = input_dim;
        for layer in &self.layers {
            layer.check()?;
            if layer.in_dim != fan_in {
                return Err(LcnError::InvalidModel(format!(
                    "head layer expects {} inputs, previous width is {}",
                    layer.in_dim, fan_in
                )));
            }
            fan_in = layer.out_dim;
        }
        if fan_in != output_dim {
            return Err(LcnError::InvalidModel(format!(
                "head outputs {fan_in} values, model declares {output_dim}"
            )));
        }
        Ok(())
    }
}

/// Affine map on `ã^M = (x, a^1, …, a^M)`; the locally linear variant's head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    pub layer: DenseLayer,
}

/// One table row. The key is a string over `{0,1,*}` of length `M`, first
/// character for the first neuron; `*` matches either bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub pattern: String,
    pub value: Vec<f64>,
}

/// `g(õ^M)` as a lookup table. Fully specified keys are looked up exactly;
/// keys with wildcards are tried in insertion order afterwards. Patterns that
/// match nothing map to the zero vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct PatternTable {
    output_dim: usize,
    exact: BTreeMap<String, Vec<f64>>,
    rules: Vec<(TableEntry, Vec<(usize, bool)>)>,
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    output_dim: usize,
    entries: Vec<TableEntry>,
}

impl TryFrom<TableRepr> for PatternTable {
    type Error = LcnError;

    fn try_from(repr: TableRepr) -> Result<Self> {
        let mut table = PatternTable::new(repr.output_dim);
        for e in repr.entries {
            table.insert(&e.pattern, e.value)?;
        }
        Ok(table)
    }
}

impl From<PatternTable> for TableRepr {
    fn from(t: PatternTable) -> Self {
        TableRepr {
            output_dim: t.output_dim,
            entries: t.entries(),
        }
    }
}

impl PatternTable {
    pub fn new(output_dim: usize) -> Self {
        PatternTable {
            output_dim,
            exact: BTreeMap::new(),
            rules: Vec::new(),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn len(&self) -> usize {
        self.exact.len() + self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&mut self, pattern: &str, value: Vec<f64>) -> Result<()> {
        if value.len() != self.output_dim {
            return Err(LcnError::DimensionMismatch {
                what: "table value",
                expected: self.output_dim,
                actual: value.len(),
            });
        }
        let mut fixed = Vec::new();
        let mut wildcard = false;
        for (i, c) in pattern.chars().enumerate() {
            match c {
                '0' => fixed.push((i, false)),
                '1' => fixed.push((i, true)),
                '*' => wildcard = true,
                other => {
                    return Err(LcnError::InvalidModel(format!(
                        "table pattern `{pattern}` contains `{other}`"
                    )))
                }
            }
        }
        if wildcard {
            let entry = TableEntry {
                pattern: pattern.to_string(),
                value,
            };
            self.rules.push((entry, fixed));
        } else {
            self.exact.insert(pattern.to_string(), value);
        }
        Ok(())
    }

    pub fn insert_pattern(&mut self, pattern: &ActivationPattern, value: Vec<f64>) -> Result<()> {
        self.insert(&pattern.to_key(), value)
    }

    /// Returns `None` when no entry covers the pattern.
    pub fn get(&self, pattern: &ActivationPattern) -> Option<&[f64]> {
        if let Some(v) = self.exact.get(&pattern.to_key()) {
            return Some(v);
        }
        let bits = pattern.bits();
        self.rules
            .iter()
            .find(|(_, fixed)| fixed.iter().all(|&(i, b)| bits.get(i) == Some(&b)))
            .map(|(e, _)| e.value.as_slice())
    }

    pub fn lookup(&self, pattern: &ActivationPattern) -> Vec<f64> {
        self.get(pattern)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; self.output_dim])
    }

    pub fn entries(&self) -> Vec<TableEntry> {
        self.exact
            .iter()
            .map(|(k, v)| TableEntry {
                pattern: k.clone(),
                value: v.clone(),
            })
            .chain(self.rules.iter().map(|(e, _)| e.clone()))
            .collect()
    }

    pub(crate) fn check(&self, depth: usize) -> Result<()> {
        let max_entries = if depth >= usize::BITS as usize - 1 {
            usize::MAX
        } else {
            1usize << depth
        };
        if self.len() > max_entries {
            return Err(LcnError::InvalidModel(format!(
                "table has {} entries, at most 2^{depth} allowed",
                self.len()
            )));
        }
        for key in self.exact.keys().chain(self.rules.iter().map(|(e, _)| &e.pattern)) {
            if key.len() != depth {
                return Err(LcnError::InvalidModel(format!(
                    "table pattern `{key}` has length {}, depth is {depth}",
                    key.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutputHead {
    Table(PatternTable),
    FullyConnected(FullyConnectedHead),
    Linear(LinearHead),
}

impl OutputHead {
    pub fn kind_name(&self) -> &'static str {
        match self {
            OutputHead::Table(_) => "table",
            OutputHead::FullyConnected(_) => "fully_connected",
            OutputHead::Linear(_) => "linear",
        }
    }
}
