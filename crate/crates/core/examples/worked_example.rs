//! A two-neuron network and the oblique tree it is equal to.
//!
//! `z1 = x1 − x2 + 1` and `z2 = −4x1 + x2 + 4·a1 + 4`. The second neuron's
//! hyperplane depends on whether the first one fired, which is exactly a
//! depth-2 oblique decision tree.

use lcn::head::{OutputHead, PatternTable};
use lcn::tree::{lcn_to_tree, tree_predict};
use lcn::{activation_pattern, predict, LcnParameters, Variant};

fn main() -> lcn::Result<()> {
    let mut table = PatternTable::new(1);
    for (pattern, value) in [("00", 0.0), ("01", 1.0), ("10", 2.0), ("11", 3.0)] {
        table.insert(pattern, vec![value])?;
    }
    let net = LcnParameters::new(
        2,
        vec![vec![1.0, -1.0], vec![-4.0, 1.0, 4.0]],
        vec![1.0, 4.0],
        OutputHead::Table(table),
        Variant::Lcn,
    )?;
    let tree = lcn_to_tree(&net)?;
    for (i, node) in tree.nodes().iter().enumerate() {
        println!("node {i}: weight {:?}, bias {}", node.weight, node.bias);
    }
    for x in [[0.0, 0.0], [2.0, 0.5], [-1.0, 1.0], [0.5, 3.0]] {
        let pattern = activation_pattern(&net, &x)?;
        let routed = tree.route(&x)?;
        println!(
            "x = {x:?}: pattern {pattern}, tree path {routed}, network {:?}, tree {:?}",
            predict(&net, &x, 1.0)?,
            tree_predict(&tree, &x)?
        );
    }
    Ok(())
}
