//! Oblique decision trees and exact conversion to and from locally constant
//! networks.
//!
//! Node `(ω, β)` for decision prefix `r_{1:i}` follows from substituting
//! `a^k = r_k (ω_{r_{1:k−1}}ᵀx + β_{r_{1:k−1}})` into the layer equation:
//!
//! ```text
//! ω_{r_{1:i}} = W^{i+1}_{1:D} + Σ_{k≤i} W^{i+1}_{D+k} r_k ω_{r_{1:k−1}}
//! β_{r_{1:i}} = b^{i+1}       + Σ_{k≤i} W^{i+1}_{D+k} r_k β_{r_{1:k−1}}
//! ```
//!
//! Nodes are stored breadth-first: the prefix bits, read as a binary number
//! with the first decision most significant, offset by `2^i − 1` for a prefix
//! of length `i`. Leaves are indexed by the full pattern the same way.
//! Routing is `r = I[ωᵀx + β ≥ 0]`; `r = 0` is the left branch.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{LcnError, Result};
use crate::head::{FullyConnectedHead, OutputHead, PatternTable};
use crate::network::{dot, ActivationPattern, LcnParameters, Variant};

/// Tag written into serialized trees and DOT output.
pub const ROUTING_CONVENTION: &str = "ge_zero";
pub const NODE_INDEXING: &str = "breadth_first_prefix_bits_msb_first";
pub const DEFAULT_DEPTH_CAP: usize = 20;
/// Largest tree depth accepted by [`tree_to_canonical_lcn`].
pub const CANONICAL_DEPTH_CAP: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub weight: Vec<f64>,
    pub bias: f64,
}

impl TreeNode {
    /// `ω = 0, β = −1`: routes every input to `r = 0`.
    pub fn dummy(input_dim: usize) -> Self {
        TreeNode {
            weight: vec![0.0; input_dim],
            bias: -1.0,
        }
    }

    #[inline]
    pub fn decide(&self, x: &[f64]) -> bool {
        dot(&self.weight, x) + self.bias >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Leaves {
    Values { values: Vec<Vec<f64>> },
    /// Per-region feature vectors evaluated through the head on demand.
    Lazy {
        head: FullyConnectedHead,
        features: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TreeRepr", into = "TreeRepr")]
pub struct ObliqueTree {
    depth: usize,
    input_dim: usize,
    output_dim: usize,
    nodes: Vec<TreeNode>,
    leaves: Leaves,
}

#[derive(Serialize, Deserialize)]
struct TreeRepr {
    routing: String,
    node_indexing: String,
    depth: usize,
    input_dim: usize,
    output_dim: usize,
    nodes: Vec<TreeNode>,
    leaves: Leaves,
}

impl From<ObliqueTree> for TreeRepr {
    fn from(t: ObliqueTree) -> Self {
        TreeRepr {
            routing: ROUTING_CONVENTION.into(),
            node_indexing: NODE_INDEXING.into(),
            depth: t.depth,
            input_dim: t.input_dim,
            output_dim: t.output_dim,
            nodes: t.nodes,
            leaves: t.leaves,
        }
    }
}

impl TryFrom<TreeRepr> for ObliqueTree {
    type Error = LcnError;

    fn try_from(r: TreeRepr) -> Result<Self> {
        if r.routing != ROUTING_CONVENTION {
            return Err(LcnError::InvalidModel(format!(
                "unsupported routing convention `{}`",
                r.routing
            )));
        }
        if r.node_indexing != NODE_INDEXING {
            return Err(LcnError::InvalidModel(format!(
                "unsupported node indexing `{}`",
                r.node_indexing
            )));
        }
        ObliqueTree::new(r.depth, r.input_dim, r.output_dim, r.nodes, r.leaves)
    }
}

fn node_index(level: usize, prefix: usize) -> usize {
    (1usize << level) - 1 + prefix
}

impl ObliqueTree {
    pub fn new(
        depth: usize,
        input_dim: usize,
        output_dim: usize,
        nodes: Vec<TreeNode>,
        leaves: Leaves,
    ) -> Result<Self> {
        if depth == 0 || depth >= usize::BITS as usize - 1 {
            return Err(LcnError::InvalidModel(format!("tree depth {depth} out of range")));
        }
        let n_leaves = 1usize << depth;
        if nodes.len() != n_leaves - 1 {
            return Err(LcnError::DimensionMismatch {
                what: "tree nodes",
                expected: n_leaves - 1,
                actual: nodes.len(),
            });
        }
        if let Some(n) = nodes.iter().find(|n| n.weight.len() != input_dim) {
            return Err(LcnError::DimensionMismatch {
                what: "node weight",
                expected: input_dim,
                actual: n.weight.len(),
            });
        }
        match &leaves {
            Leaves::Values { values } => {
                if values.len() != n_leaves {
                    return Err(LcnError::DimensionMismatch {
                        what: "tree leaves",
                        expected: n_leaves,
                        actual: values.len(),
                    });
                }
                if let Some(v) = values.iter().find(|v| v.len() != output_dim) {
                    return Err(LcnError::DimensionMismatch {
                        what: "leaf value",
                        expected: output_dim,
                        actual: v.len(),
                    });
                }
            }
            Leaves::Lazy { head, features } => {
                if features.len() != n_leaves {
                    return Err(LcnError::DimensionMismatch {
                        what: "tree leaves",
                        expected: n_leaves,
                        actual: features.len(),
                    });
                }
                head.check(head.input_dim(), output_dim)?;
                if let Some(f) = features.iter().find(|f| f.len() != head.input_dim()) {
                    return Err(LcnError::DimensionMismatch {
                        what: "leaf features",
                        expected: head.input_dim(),
                        actual: f.len(),
                    });
                }
            }
        }
        Ok(ObliqueTree {
            depth,
            input_dim,
            output_dim,
            nodes,
            leaves,
        })
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

    /// All `2^T − 1` internal nodes, breadth-first.
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn leaves(&self) -> &Leaves {
        &self.leaves
    }

    /// Node reached after the decisions in `prefix` (shorter than the depth).
    pub fn node(&self, prefix: &[bool]) -> &TreeNode {
        assert!(prefix.len() < self.depth, "prefix longer than the tree");
        let p = prefix.iter().fold(0usize, |acc, &b| 2 * acc + usize::from(b));
        &self.nodes[node_index(prefix.len(), p)]
    }

    pub fn leaf_value(&self, leaf: usize) -> Vec<f64> {
        match &self.leaves {
            Leaves::Values { values } => values[leaf].clone(),
            Leaves::Lazy { head, features } => head.forward(&features[leaf]),
        }
    }

    /// Every leaf's output, evaluating lazy leaves.
    pub fn leaf_values(&self) -> Vec<Vec<f64>> {
        (0..1usize << self.depth).map(|l| self.leaf_value(l)).collect()
    }

    fn route_index(&self, x: &[f64]) -> usize {
        let mut p = 0usize;
        for level in 0..self.depth {
            let r = self.nodes[node_index(level, p)].decide(x);
            p = 2 * p + usize::from(r);
        }
        p
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

    /// Decision pattern `r_{1:T}` for `x`.
    pub fn route(&self, x: &[f64]) -> Result<ActivationPattern> {
        self.check_input(x)?;
        Ok(ActivationPattern::from_index(self.route_index(x) as u64, self.depth))
    }

    /// Converts an arbitrary binary tree, padding short paths with dummy
    /// nodes. A dummy always routes to `r = 0`, so the original subtree sits
    /// on that branch and is duplicated (unreachably) under `r = 1`.
    pub fn from_unbalanced(root: &UnbalancedTree, input_dim: usize, output_dim: usize) -> Result<Self> {
        let depth = root.depth();
        if depth == 0 {
            return Err(LcnError::InvalidModel("a tree needs at least one decision node".into()));
        }
        if depth > DEFAULT_DEPTH_CAP {
            return Err(LcnError::DepthOverCap {
                depth,
                cap: DEFAULT_DEPTH_CAP,
            });
        }
        let mut nodes = vec![TreeNode::dummy(input_dim); (1 << depth) - 1];
        let mut values = vec![Vec::new(); 1 << depth];
        fill(root, 0, 0, depth, &mut nodes, &mut values);
        ObliqueTree::new(depth, input_dim, output_dim, nodes, Leaves::Values { values })
    }
}

/// A binary decision tree with paths of any length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UnbalancedTree {
    Leaf {
        value: Vec<f64>,
    },
    Split {
        weight: Vec<f64>,
        bias: f64,
        /// `ωᵀx + β < 0`
        left: Box<UnbalancedTree>,
        /// `ωᵀx + β ≥ 0`
        right: Box<UnbalancedTree>,
    },
}

impl UnbalancedTree {
    pub fn depth(&self) -> usize {
        match self {
            UnbalancedTree::Leaf { .. } => 0,
            UnbalancedTree::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn predict(&self, x: &[f64]) -> &[f64] {
        match self {
            UnbalancedTree::Leaf { value } => value,
            UnbalancedTree::Split {
                weight,
                bias,
                left,
                right,
            } => {
                if dot(weight, x) + bias >= 0.0 {
                    right.predict(x)
                } else {
                    left.predict(x)
                }
            }
        }
    }
}

fn fill(
    t: &UnbalancedTree,
    level: usize,
    prefix: usize,
    depth: usize,
    nodes: &mut [TreeNode],
    values: &mut [Vec<f64>],
) {
    if level == depth {
        match t {
            UnbalancedTree::Leaf { value } => values[prefix] = value.clone(),
            UnbalancedTree::Split { .. } => unreachable!("depth bounds every path"),
        }
        return;
    }
    match t {
        UnbalancedTree::Split {
            weight,
            bias,
            left,
            right,
        } => {
            nodes[node_index(level, prefix)] = TreeNode {
                weight: weight.clone(),
                bias: *bias,
            };
            fill(left, level + 1, 2 * prefix, depth, nodes, values);
            fill(right, level + 1, 2 * prefix + 1, depth, nodes, values);
        }
        UnbalancedTree::Leaf { .. } => {
            // Dummy node already in place.
            fill(t, level + 1, 2 * prefix, depth, nodes, values);
            fill(t, level + 1, 2 * prefix + 1, depth, nodes, values);
        }
    }
}

/// Routes `x` through the tree and returns the reached leaf's output.
pub fn tree_predict(tree: &ObliqueTree, x: &[f64]) -> Result<Vec<f64>> {
    tree.check_input(x)?;
    Ok(tree.leaf_value(tree.route_index(x)))
}

/// [`lcn_to_tree_with_cap`] with the default cap of 20.
pub fn lcn_to_tree(params: &LcnParameters) -> Result<ObliqueTree> {
    lcn_to_tree_with_cap(params, DEFAULT_DEPTH_CAP)
}

/// Expands an LCN into its equivalent depth-`M` oblique tree without
/// sampling inputs. Lazy leaf features are built in the same summation order
/// as the network's own Jacobian recursion, so they are bit-identical to the
/// features the network computes inside each region.
pub fn lcn_to_tree_with_cap(params: &LcnParameters, cap: usize) -> Result<ObliqueTree> {
    if params.variant() != Variant::Lcn {
        return Err(LcnError::UnsupportedVariant {
            op: "tree conversion",
            variant: params.variant().to_string(),
        });
    }
    let m = params.depth();
    if m > cap {
        return Err(LcnError::DepthOverCap { depth: m, cap });
    }
    let lazy = match params.head() {
        OutputHead::Linear(_) => {
            return Err(LcnError::InvalidModel(
                "a linear head on hidden activations is not locally constant".into(),
            ))
        }
        OutputHead::FullyConnected(_) => true,
        OutputHead::Table(_) => false,
    };
    let mut b = Expander {
        params,
        d: params.input_dim(),
        nodes: vec![TreeNode::dummy(params.input_dim()); (1 << m) - 1],
        rows: Vec::with_capacity(m),
        biases: Vec::with_capacity(m),
        features: if lazy { vec![Vec::new(); 1 << m] } else { Vec::new() },
    };
    b.visit(0, 0);
    let leaves = match params.head() {
        OutputHead::FullyConnected(h) => Leaves::Lazy {
            head: h.clone(),
            features: b.features,
        },
        OutputHead::Table(t) => Leaves::Values {
            values: (0..1u64 << m)
                .map(|p| t.lookup(&ActivationPattern::from_index(p, m)))
                .collect(),
        },
        OutputHead::Linear(_) => unreachable!(),
    };
    ObliqueTree::new(m, params.input_dim(), params.output_dim(), b.nodes, leaves)
}

struct Expander<'a> {
    params: &'a LcnParameters,
    d: usize,
    nodes: Vec<TreeNode>,
    /// `r_k ω_{r_{1:k−1}}` along the current path.
    rows: Vec<Vec<f64>>,
    /// `r_k β_{r_{1:k−1}}` along the current path.
    biases: Vec<f64>,
    features: Vec<Vec<f64>>,
}

impl Expander<'_> {
    fn visit(&mut self, level: usize, prefix: usize) {
        let m = self.params.depth();
        if level == m {
            if !self.features.is_empty() {
                let mut f: Vec<f64> = self.rows.iter().flatten().copied().collect();
                f.extend_from_slice(&self.biases);
                self.features[prefix] = f;
            }
            return;
        }
        let w = &self.params.layer_weights()[level];
        let mut g = w[..self.d].to_vec();
        let mut beta = self.params.layer_biases()[level];
        for k in 0..level {
            let c = w[self.d + k];
            for (gj, rj) in g.iter_mut().zip(&self.rows[k]) {
                *gj += c * rj;
            }
            beta += c * self.biases[k];
        }
        for bit in [false, true] {
            let s = if bit { 1.0 } else { 0.0 };
            self.rows.push(g.iter().map(|v| v * s).collect());
            self.biases.push(s * beta);
            self.visit(level + 1, 2 * prefix + usize::from(bit));
            self.rows.pop();
            self.biases.pop();
        }
        self.nodes[node_index(level, prefix)] = TreeNode { weight: g, bias: beta };
    }
}

/// Builds an LCN with a table head that computes the same function as
/// `tree`: one independent neuron per tree node (all cross-layer weights
/// zero) and one wildcard table rule per leaf that fixes only the bits of
/// the nodes on that leaf's path.
pub fn tree_to_canonical_lcn(tree: &ObliqueTree) -> Result<LcnParameters> {
    let t = tree.depth;
    if t > CANONICAL_DEPTH_CAP {
        return Err(LcnError::DepthOverCap {
            depth: t,
            cap: CANONICAL_DEPTH_CAP,
        });
    }
    let m = (1usize << t) - 1;
    let d = tree.input_dim;
    let weights: Vec<Vec<f64>> = tree
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let mut w = n.weight.clone();
            w.resize(d + i, 0.0);
            w
        })
        .collect();
    let biases: Vec<f64> = tree.nodes.iter().map(|n| n.bias).collect();
    let mut table = PatternTable::new(tree.output_dim);
    for leaf in 0..1usize << t {
        let mut key = vec![b'*'; m];
        let mut p = 0usize;
        for level in 0..t {
            let bit = (leaf >> (t - 1 - level)) & 1;
            key[node_index(level, p)] = if bit == 1 { b'1' } else { b'0' };
            p = 2 * p + bit;
        }
        let key = String::from_utf8(key).expect("ascii key");
        table.insert(&key, tree.leaf_value(leaf))?;
    }
    LcnParameters::new(d, weights, biases, OutputHead::Table(table), Variant::Lcn)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LeafLabel {
    /// Raw leaf outputs.
    #[default]
    Values,
    /// Rank of each output among all leaves, 1 = lowest score.
    Rank,
}

#[derive(Debug, Clone, Default)]
pub struct DotOptions {
    pub feature_names: Option<Vec<String>>,
    pub leaf_label: LeafLabel,
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Indices of the `k` largest `|w_j|`, ties broken by lower index.
pub fn top_k_coordinates(weight: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weight.len()).collect();
    idx.sort_by(|&a, &b| {
        weight[b]
            .abs()
            .partial_cmp(&weight[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

/// 1-based ranks per output column across leaves; ties by lower leaf index.
fn leaf_ranks(values: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let l = values.first().map_or(0, Vec::len);
    let mut ranks = vec![vec![0; l]; values.len()];
    for o in 0..l {
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&a, &b| {
            values[a][o]
                .partial_cmp(&values[b][o])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        for (r, &leaf) in idx.iter().enumerate() {
            ranks[leaf][o] = r + 1;
        }
    }
    ranks
}

/// Graphviz rendering. Each internal node shows its `top_k` coordinates of
/// `ω/‖ω‖₁` and the correspondingly scaled bias.
pub fn export_dot(tree: &ObliqueTree, top_k: usize, options: &DotOptions) -> String {
    let k = top_k.max(1);
    let name = |j: usize| match &options.feature_names {
        Some(n) if j < n.len() => escape(&n[j]),
        _ => format!("x{j}"),
    };
    let mut s = String::new();
    s.push_str("digraph oblique_tree {\n");
    let _ = writeln!(
        s,
        "  // routing {ROUTING_CONVENTION}: right edge when w.x + b >= 0"
    );
    s.push_str("  node [shape=box, fontname=\"Helvetica\"];\n");
    for level in 0..tree.depth {
        for p in 0..1usize << level {
            let i = node_index(level, p);
            let node = &tree.nodes[i];
            let l1: f64 = node.weight.iter().map(|w| w.abs()).sum();
            let scale = if l1 > 0.0 { 1.0 / l1 } else { 1.0 };
            let mut label = String::new();
            for j in top_k_coordinates(&node.weight, k) {
                let _ = write!(label, "{}: {:.4}\\n", name(j), node.weight[j] * scale);
            }
            let _ = write!(label, "bias: {:.4}", node.bias * scale);
            let _ = writeln!(s, "  n{i} [label=\"{label}\"];");
            for bit in 0..2usize {
                let child = if level + 1 < tree.depth {
                    format!("n{}", node_index(level + 1, 2 * p + bit))
                } else {
                    format!("l{}", 2 * p + bit)
                };
                let _ = writeln!(s, "  n{i} -> {child} [label=\"{bit}\"];");
            }
        }
    }
    let values = tree.leaf_values();
    let ranks = match options.leaf_label {
        LeafLabel::Rank => Some(leaf_ranks(&values)),
        LeafLabel::Values => None,
    };
    let n_leaves = values.len();
    for (leaf, v) in values.iter().enumerate() {
        let text: Vec<String> = match &ranks {
            Some(r) => r[leaf].iter().map(|r| format!("rank {r}/{n_leaves}")).collect(),
            None => v.iter().map(|x| format!("{x:.4}")).collect(),
        };
        let _ = writeln!(
            s,
            "  l{leaf} [shape=ellipse, label=\"{}\"];",
            text.join("\\n")
        );
    }
    s.push_str("}\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::head::{HiddenActivation, OutputHead};
    use crate::network::{activation_pattern, forward, predict, Architecture};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn worked_example(head: OutputHead) -> LcnParameters {
        LcnParameters::new(
            2,
            vec![vec![1.0, -1.0], vec![-4.0, 1.0, 4.0]],
            vec![1.0, 4.0],
            head,
            Variant::Lcn,
        )
        .unwrap()
    }

    fn worked_table() -> LcnParameters {
        let mut t = PatternTable::new(1);
        for (k, v) in [("00", 1.0), ("01", 2.0), ("10", 3.0), ("11", 4.0)] {
            t.insert(k, vec![v]).unwrap();
        }
        worked_example(OutputHead::Table(t))
    }

    fn random_lcn(m: usize, d: usize, seed: u64) -> LcnParameters {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LcnParameters::init(
            &Architecture::new(m, Variant::Lcn).with_head_hidden(vec![6]),
            d,
            2,
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn worked_example_nodes() {
        let tree = lcn_to_tree(&worked_table()).unwrap();
        assert_eq!(tree.nodes()[0], TreeNode { weight: vec![1.0, -1.0], bias: 1.0 });
        assert_eq!(tree.node(&[false]), &TreeNode { weight: vec![-4.0, 1.0], bias: 4.0 });
        assert_eq!(tree.node(&[true]), &TreeNode { weight: vec![0.0, -3.0], bias: 8.0 });
        assert_eq!(tree.route(&[0.0, 0.0]).unwrap().to_key(), "11");
        assert_eq!(tree_predict(&tree, &[0.0, 0.0]).unwrap(), vec![4.0]);
    }

    #[test]
    fn single_layer_tree() {
        let mut t = PatternTable::new(1);
        t.insert("0", vec![-1.0]).unwrap();
        t.insert("1", vec![1.0]).unwrap();
        let p = LcnParameters::new(2, vec![vec![2.0, 3.0]], vec![-1.0], OutputHead::Table(t), Variant::Lcn)
            .unwrap();
        let tree = lcn_to_tree(&p).unwrap();
        assert_eq!(tree.depth(), 1);
        assert_eq!(tree.nodes(), &[TreeNode { weight: vec![2.0, 3.0], bias: -1.0 }]);
        assert_eq!(tree.leaf_values(), vec![vec![-1.0], vec![1.0]]);
    }

    #[test]
    fn rejects_other_variants_and_depth() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let alcn = LcnParameters::init(&Architecture::new(3, Variant::Alcn), 2, 1, &mut rng).unwrap();
        assert!(matches!(lcn_to_tree(&alcn), Err(LcnError::UnsupportedVariant { .. })));
        let deep = random_lcn(5, 2, 1);
        assert!(matches!(
            lcn_to_tree_with_cap(&deep, 4),
            Err(LcnError::DepthOverCap { depth: 5, cap: 4 })
        ));
    }

    #[test]
    fn routing_matches_activation_pattern() {
        let p = random_lcn(8, 5, 77);
        let tree = lcn_to_tree(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
            assert_eq!(tree.route(&x).unwrap(), activation_pattern(&p, &x).unwrap());
        }
    }

    #[test]
    fn lazy_leaves_reproduce_network_features_exactly() {
        let p = random_lcn(6, 3, 12);
        let tree = lcn_to_tree(&p).unwrap();
        let Leaves::Lazy { features, .. } = tree.leaves() else {
            panic!("expected lazy leaves")
        };
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..2_000 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let trace = forward(&p, &x, 1.0).unwrap();
            let leaf = trace.pattern.index().unwrap() as usize;
            assert_eq!(crate::network::feature_vector(&trace), features[leaf]);
            assert_eq!(predict(&p, &x, 1.0).unwrap(), tree_predict(&tree, &x).unwrap());
        }
    }

    #[test]
    fn bias_recursion_matches_pre_activations() {
        let p = random_lcn(7, 4, 3);
        let tree = lcn_to_tree(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..2_000 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let trace = forward(&p, &x, 1.0).unwrap();
            let bits = trace.pattern.bits();
            for i in 0..7 {
                let n = tree.node(&bits[..i]);
                let z = dot(&n.weight, &x) + n.bias;
                let zi = trace.pre_activations[i];
                assert!((z - zi).abs() <= 1e-10 * (1.0 + zi.abs()), "layer {i}: {z} vs {zi}");
            }
        }
    }

    #[test]
    fn twelve_layers_give_4095_nodes() {
        let p = random_lcn(12, 2, 9);
        let tree = lcn_to_tree(&p).unwrap();
        assert_eq!(tree.nodes().len(), 4095);
        assert_eq!(p.backbone_parameter_count(), 12 * 2 + 12 * 11 / 2 + 12);
    }

    fn random_unbalanced(rng: &mut ChaCha8Rng, d: usize, depth_left: usize) -> UnbalancedTree {
        if depth_left == 0 || (depth_left < 3 && rng.gen_bool(0.3)) {
            return UnbalancedTree::Leaf {
                value: vec![rng.gen_range(-5.0..5.0)],
            };
        }
        UnbalancedTree::Split {
            weight: (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            bias: rng.gen_range(-0.5..0.5),
            left: Box::new(random_unbalanced(rng, d, depth_left - 1)),
            right: Box::new(random_unbalanced(rng, d, depth_left - 1)),
        }
    }

    #[test]
    fn balanced_tree_agrees_with_recursive_evaluator() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let u = random_unbalanced(&mut rng, 3, 4);
            if u.depth() == 0 {
                continue;
            }
            let tree = ObliqueTree::from_unbalanced(&u, 3, 1).unwrap();
            for _ in 0..1_000 {
                let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
                assert_eq!(tree_predict(&tree, &x).unwrap(), u.predict(&x));
            }
        }
    }

    #[test]
    fn dummy_node_routes_left() {
        let u = UnbalancedTree::Split {
            weight: vec![1.0],
            bias: 0.0,
            left: Box::new(UnbalancedTree::Leaf { value: vec![-1.0] }),
            right: Box::new(UnbalancedTree::Split {
                weight: vec![1.0],
                bias: -1.0,
                left: Box::new(UnbalancedTree::Leaf { value: vec![1.0] }),
                right: Box::new(UnbalancedTree::Leaf { value: vec![2.0] }),
            }),
        };
        let tree = ObliqueTree::from_unbalanced(&u, 1, 1).unwrap();
        assert_eq!(tree.node(&[false]), &TreeNode::dummy(1));
        assert_eq!(tree.route(&[-3.0]).unwrap().to_key(), "00");
        assert_eq!(tree_predict(&tree, &[-3.0]).unwrap(), vec![-1.0]);
        assert_eq!(tree_predict(&tree, &[0.5]).unwrap(), vec![1.0]);
        assert_eq!(tree_predict(&tree, &[1.0]).unwrap(), vec![2.0]);
    }

    fn round_trip(tree: &ObliqueTree, rng: &mut ChaCha8Rng, n: usize) {
        let lcn = tree_to_canonical_lcn(tree).unwrap();
        assert_eq!(lcn.depth(), (1 << tree.depth()) - 1);
        for w in lcn.layer_weights() {
            assert!(w[tree.input_dim()..].iter().all(|&c| c == 0.0));
        }
        for _ in 0..n {
            let x: Vec<f64> = (0..tree.input_dim()).map(|_| rng.gen_range(-3.0..3.0)).collect();
            assert_eq!(predict(&lcn, &x, 1.0).unwrap(), tree_predict(tree, &x).unwrap());
        }
    }

    #[test]
    fn canonical_lcn_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let stump = ObliqueTree::new(
            1,
            2,
            1,
            vec![TreeNode { weight: vec![1.0, 1.0], bias: 0.0 }],
            Leaves::Values { values: vec![vec![-1.0], vec![1.0]] },
        )
        .unwrap();
        round_trip(&stump, &mut rng, 10_000);
        round_trip(&lcn_to_tree(&worked_table()).unwrap(), &mut rng, 10_000);
        let u = random_unbalanced(&mut rng, 3, 3);
        if u.depth() > 0 {
            round_trip(&ObliqueTree::from_unbalanced(&u, 3, 1).unwrap(), &mut rng, 10_000);
        }
        // Lazy leaves are materialized.
        round_trip(&lcn_to_tree(&random_lcn(3, 2, 2)).unwrap(), &mut rng, 2_000);
    }

    #[test]
    fn canonical_depth_cap() {
        let tree = ObliqueTree::new(
            11,
            1,
            1,
            vec![TreeNode::dummy(1); (1 << 11) - 1],
            Leaves::Values { values: vec![vec![0.0]; 1 << 11] },
        )
        .unwrap();
        assert!(matches!(tree_to_canonical_lcn(&tree), Err(LcnError::DepthOverCap { .. })));
    }

    #[test]
    fn json_round_trip_and_tag() {
        let tree = lcn_to_tree(&random_lcn(4, 3, 5)).unwrap();
        let s = serde_json::to_string(&tree).unwrap();
        assert!(s.contains("\"routing\":\"ge_zero\""));
        let back: ObliqueTree = serde_json::from_str(&s).unwrap();
        assert_eq!(back, tree);
        let bad = s.replace("ge_zero", "gt_zero");
        assert!(serde_json::from_str::<ObliqueTree>(&bad).is_err());
    }

    #[test]
    fn top_k_tie_break() {
        assert_eq!(top_k_coordinates(&[0.5, -0.5], 1), vec![0]);
        assert_eq!(top_k_coordinates(&[0.1, -0.7, 0.7, 0.2], 3), vec![1, 2, 3]);
    }

    /// Minimal structural check of the DOT subset we emit: one statement per
    /// line, quoted strings closed, every edge endpoint declared as a node.
    pub(crate) fn check_dot(text: &str) -> std::result::Result<(usize, usize), String> {
        let mut lines = text.lines();
        let head = lines.next().ok_or("empty")?;
        if !(head.starts_with("digraph ") && head.ends_with('{')) {
            return Err(format!("bad header `{head}`"));
        }
        let mut declared = std::collections::HashSet::new();
        let mut edges = Vec::new();
        let mut closed = false;
        for line in lines {
            let l = line.trim();
            if closed {
                return Err("content after closing brace".into());
            }
            if l == "}" {
                closed = true;
                continue;
            }
            if l.starts_with("//") || l.is_empty() {
                continue;
            }
            let body = l.strip_suffix(';').ok_or(format!("missing `;` in `{l}`"))?;
            let (lhs, attrs) = match body.find('[') {
                Some(i) => (body[..i].trim(), &body[i..]),
                None => (body, ""),
            };
            if !attrs.is_empty() {
                if !attrs.ends_with(']') {
                    return Err(format!("unterminated attributes in `{l}`"));
                }
                let mut quoted = false;
                let mut esc = false;
                for c in attrs.chars() {
                    match (esc, c) {
                        (true, _) => esc = false,
                        (false, '\\') => esc = true,
                        (false, '"') => quoted = !quoted,
                        _ => {}
                    }
                }
                if quoted {
                    return Err(format!("unterminated string in `{l}`"));
                }
            }
            let ident = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if let Some((a, b)) = lhs.split_once("->") {
                let (a, b) = (a.trim(), b.trim());
                if !ident(a) || !ident(b) {
                    return Err(format!("bad edge `{l}`"));
                }
                edges.push((a.to_string(), b.to_string()));
            } else if lhs == "node" || lhs == "edge" || lhs == "graph" {
            } else if ident(lhs) {
                declared.insert(lhs.to_string());
            } else {
                return Err(format!("bad statement `{l}`"));
            }
        }
        if !closed {
            return Err("missing closing brace".into());
        }
        for (a, b) in &edges {
            if !declared.contains(a) || !declared.contains(b) {
                return Err(format!("edge {a} -> {b} uses an undeclared node"));
            }
        }
        Ok((declared.len(), edges.len()))
    }

    #[test]
    fn dot_labels_and_structure() {
        let stump = ObliqueTree::new(
            1,
            2,
            1,
            vec![TreeNode { weight: vec![0.5, -0.5], bias: 0.0 }],
            Leaves::Values { values: vec![vec![0.2], vec![0.9]] },
        )
        .unwrap();
        let dot = export_dot(&stump, 1, &DotOptions::default());
        assert!(dot.contains("n0 [label=\"x0: 0.5000\\nbias: 0.0000\"]"), "{dot}");
        assert_eq!(check_dot(&dot).unwrap(), (3, 2));

        let tree = lcn_to_tree(&worked_table()).unwrap();
        let opts = DotOptions {
            feature_names: Some(vec!["a\"b".into(), "c".into()]),
            leaf_label: LeafLabel::Rank,
        };
        let dot = export_dot(&tree, 2, &opts);
        assert!(dot.contains("n0 [label=\"a\\\"b: 0.5000\\nc: -0.5000\\nbias: 0.5000\"]"), "{dot}");
        assert!(dot.contains("l3 [shape=ellipse, label=\"rank 4/4\"]"));
        assert_eq!(check_dot(&dot).unwrap(), (7, 6));
    }

    #[test]
    fn dot_for_random_tree_parses() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = LcnParameters::init(
            &Architecture {
                depth: 5,
                variant: Variant::Lcn,
                head_hidden: vec![4],
                hidden_activation: HiddenActivation::Relu,
            },
            4,
            1,
            &mut rng,
        )
        .unwrap();
        let dot = export_dot(&lcn_to_tree(&p).unwrap(), 3, &DotOptions::default());
        assert_eq!(check_dot(&dot).unwrap(), (63, 62));
    }
}
