//! Converts a random network into its oblique tree, checks the two agree,
//! rebuilds a network from the tree and prints the tree as Graphviz DOT.

use lcn::tree::{export_dot, lcn_to_tree, tree_predict, tree_to_canonical_lcn, DotOptions, LeafLabel};
use lcn::{predict, Architecture, LcnParameters, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> lcn::Result<()> {
    let arch = Architecture::new(3, Variant::Lcn).with_head_hidden(vec![8]);
    let net = LcnParameters::init_seeded(&arch, 4, 1, 42)?;
    let tree = lcn_to_tree(&net)?;
    let rebuilt = tree_to_canonical_lcn(&tree)?;

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let a = predict(&net, &x, 1.0)?[0];
        let b = tree_predict(&tree, &x)?[0];
        let c = predict(&rebuilt, &x, 1.0)?[0];
        worst = worst.max((a - b).abs()).max((b - c).abs());
    }
    eprintln!(
        "depth {} tree, rebuilt network has {} independent neurons, max disagreement {worst:e}",
        tree.depth(),
        rebuilt.depth()
    );

    let options = DotOptions {
        feature_names: Some(["age", "dose", "weight", "score"].map(String::from).to_vec()),
        leaf_label: LeafLabel::Rank,
    };
    print!("{}", export_dot(&tree, 2, &options));
    Ok(())
}
