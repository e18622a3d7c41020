//! AUC over all rows and over a subset of rows, with half credit for ties.
//! A subset row is ranked against every row of the opposite class.

use lcn::metrics::{auc, subset_auc};

fn main() -> lcn::Result<()> {
    let scores = [0.9, 0.8, 0.8, 0.4, 0.3, 0.3, 0.1];
    let labels = [1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0];
    println!("AUC over all rows: {:.4}", auc(&scores, &labels)?);
    let seen = [0, 2, 4];
    println!("AUC for rows {seen:?}: {:.4}", subset_auc(&scores, &labels, &seen)?);
    match subset_auc(&scores, &labels, &[]) {
        Ok(v) => println!("empty subset: {v}"),
        Err(e) => println!("empty subset: {e}"),
    }
    Ok(())
}
