//! Boosted ensemble on a two-step regression target. Each stage fits the
//! residual of the frozen stages before it, so train error never rises.

use lcn::ensemble::{elcn_predict, elcn_train, ElcnConfig};
use lcn::metrics::rmse;
use lcn::training::Samples;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> lcn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xs: Vec<Vec<f64>> = (0..1000).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    let ys: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| vec![f64::from(x[0] > 0.2) + 2.0 * f64::from(x[1] > -0.3)])
        .collect();
    let data = Samples::new(xs, ys);

    let mut config = ElcnConfig::regression();
    config.ensemble_size = 4;
    config.train.learning_rate = 0.01;
    let (model, reports) = elcn_train(&data, None, &config)?;
    for r in &reports {
        println!(
            "stage {}: train MSE {:.5} -> {:.5} (kept epoch {})",
            r.stage, r.initial_train_loss, r.final_train_loss, r.selected_epoch
        );
    }
    let preds: Vec<f64> = data
        .inputs
        .iter()
        .map(|x| elcn_predict(&model, x).map(|p| p[0]))
        .collect::<lcn::Result<_>>()?;
    let targets: Vec<f64> = data.targets.iter().map(|t| t[0]).collect();
    println!("{} components, train RMSE {:.5}", model.len(), rmse(&preds, &targets));
    Ok(())
}
