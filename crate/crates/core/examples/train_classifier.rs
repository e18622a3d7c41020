//! Trains a depth-4 network on a wedge cut out by two oblique hyperplanes, then reports
//! the loss curve and held-out AUC.

use lcn::metrics::auc;
use lcn::training::{train, Samples, TrainConfig};
use lcn::{predict_eval, Architecture, LcnParameters, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn make(n: usize, seed: u64) -> Samples {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    let ys = xs
        .iter()
        .map(|x| {
            let wedge = x[0] + x[1] >= 0.0 && x[0] - 2.0 * x[1] + 0.3 >= 0.0;
            vec![f64::from(wedge)]
        })
        .collect();
    Samples::new(xs, ys)
}

fn main() -> lcn::Result<()> {
    let (train_set, test_set) = (make(2000, 1), make(1000, 2));
    let arch = Architecture::new(4, Variant::Lcn);
    let config = TrainConfig {
        dropconnect_prob: 0.25,
        seed: 7,
        ..TrainConfig::classification()
    };
    let init = LcnParameters::init_seeded(&arch, 2, 1, config.seed)?;
    let outcome = train(init, &train_set, Some(&test_set), &config)?;
    for r in outcome.log.iter().step_by(5) {
        println!(
            "epoch {:>2}  lambda {:.3}  lr {:.4}  train loss {:.4}  held-out AUC {:.4}",
            r.epoch,
            r.lambda,
            r.lr,
            r.train_loss,
            r.val_metric.unwrap_or(f64::NAN)
        );
    }
    let scores: Vec<f64> = test_set
        .inputs
        .iter()
        .map(|x| predict_eval(&outcome.params, x).map(|p| p[0]))
        .collect::<lcn::Result<_>>()?;
    let labels: Vec<f64> = test_set.targets.iter().map(|t| t[0]).collect();
    println!("final held-out AUC {:.4}", auc(&scores, &labels)?);
    Ok(())
}
