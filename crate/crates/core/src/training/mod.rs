//! Gradient training of a single model: losses, DropConnect, exact
//! backpropagation through the Jacobian features, and the mini-batch loop
//! with per-epoch annealing and step learning-rate decay.

mod backward;
mod config;
mod dropconnect;
mod loss;
mod optimizer;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use backward::{assign_flat_params, backward, flatten_params, Batch, GradientBundle, HeadGradients};
pub(crate) use backward::add_offset;
pub use config::{Anneal, Checkpoint, LossKind, OptimizerKind, TrainConfig};
pub use dropconnect::{dropconnect_mask, DropConnectMask};
pub use loss::loss_value;

use crate::error::{LcnError, Result};
use crate::head::OutputHead;
use crate::metrics::{auc, rmse};
use crate::network::{predict_eval, LcnParameters};
use crate::rng::{seeded, Stream};
use optimizer::Optimizer;

/// Inputs and targets for one split. `offsets` are added to model outputs
/// before the loss and metrics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Samples {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub offsets: Option<Vec<Vec<f64>>>,
}

impl Samples {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Self {
        Samples {
            inputs,
            targets,
            offsets: None,
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Model outputs (plus offsets) at the inference-time λ.
    pub fn predict_with(&self, params: &LcnParameters) -> Result<Vec<Vec<f64>>> {
        self.inputs
            .iter()
            .enumerate()
            .map(|(n, x)| {
                let mut y = predict_eval(params, x)?;
                if let Some(o) = &self.offsets {
                    add_offset(&mut y, &o[n]);
                }
                Ok(y)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lambda: f64,
    pub lr: f64,
    /// Full-pass training loss at the inference-time λ, without masks.
    pub train_loss: f64,
    /// Mean AUC over outputs (classification) or RMSE (regression).
    pub val_metric: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: LcnParameters,
    pub log: Vec<EpochRecord>,
    pub initial_train_loss: f64,
    /// Training loss of the returned parameters.
    pub final_train_loss: f64,
    /// Epoch the returned parameters come from (0 = initial).
    pub selected_epoch: usize,
}

/// Full-pass mean loss at the inference-time λ.
pub fn evaluate_loss(params: &LcnParameters, samples: &Samples, loss: LossKind) -> Result<f64> {
    if samples.is_empty() {
        return Err(LcnError::InvalidConfig("cannot evaluate loss on an empty split".into()));
    }
    let preds = samples.predict_with(params)?;
    let mut total = 0.0;
    for (p, t) in preds.iter().zip(&samples.targets) {
        total += loss_value(p, t, loss)?;
    }
    Ok(total / samples.len() as f64)
}

/// Validation metric: mean AUC across outputs with both classes present, or
/// RMSE over all outputs.
pub fn evaluate_metric(preds: &[Vec<f64>], targets: &[Vec<f64>], loss: LossKind) -> Option<f64> {
    if preds.is_empty() {
        return None;
    }
    match loss {
        LossKind::CrossEntropy => {
            let l = targets[0].len();
            let aucs: Vec<f64> = (0..l)
                .filter_map(|k| {
                    let s: Vec<f64> = preds.iter().map(|p| p[k]).collect();
                    let y: Vec<f64> = targets.iter().map(|t| t[k]).collect();
                    auc(&s, &y).ok()
                })
                .collect();
            (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64)
        }
        LossKind::MeanSquaredError => {
            let p: Vec<f64> = preds.iter().flatten().copied().collect();
            let t: Vec<f64> = targets.iter().flatten().copied().collect();
            Some(rmse(&p, &t))
        }
    }
}

fn locate(err: LcnError, epoch: usize, batch: usize) -> LcnError {
    match err {
        LcnError::Divergence { stage, .. } => LcnError::Divergence { epoch, batch, stage },
        other => other,
    }
}

/// Mini-batch training. Deterministic given `config.seed`.
pub fn train(
    params: LcnParameters,
    train_set: &Samples,
    validation: Option<&Samples>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if matches!(params.head(), OutputHead::Table(_)) {
        return Err(LcnError::InvalidConfig(
            "table heads are not trainable; use a fully-connected head".into(),
        ));
    }
    if train_set.is_empty() {
        return Err(LcnError::InvalidConfig("training split is empty".into()));
    }
    let mut params = params;
    let initial_train_loss = evaluate_loss(&params, train_set, config.loss).map_err(|e| locate(e, 0, 0))?;
    let mut best = (initial_train_loss, params.clone(), 0usize);
    let mut rng = seeded(config.seed, Stream::Training);
    let mut flat = flatten_params(&params);
    let mut optimizer = Optimizer::new(config.optimizer, flat.len());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut last_loss = initial_train_loss;

    for epoch in 1..=config.epochs {
        let lambda = config.lambda_at(epoch);
        let lr = config.lr_at(epoch);
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let inputs: Vec<&[f64]> = chunk.iter().map(|&i| train_set.inputs[i].as_slice()).collect();
            let targets: Vec<&[f64]> = chunk.iter().map(|&i| train_set.targets[i].as_slice()).collect();
            let offsets: Option<Vec<&[f64]>> = train_set
                .offsets
                .as_ref()
                .map(|o| chunk.iter().map(|&i| o[i].as_slice()).collect());
            let batch = Batch {
                inputs: &inputs,
                targets: &targets,
                offsets: offsets.as_deref(),
            };
            let mask = (config.dropconnect_prob > 0.0)
                .then(|| DropConnectMask::for_params(&params, config.dropconnect_prob, &mut rng));
            let (_, grads) = backward(&params, &batch, lambda, config.loss, mask.as_ref())
                .map_err(|e| locate(e, epoch, b))?;
            optimizer.step(&mut flat, &grads.flatten(), lr);
            assign_flat_params(&mut params, &flat);
        }
        let n_batches = train_set.len().div_ceil(config.batch_size);
        let train_loss =
            evaluate_loss(&params, train_set, config.loss).map_err(|e| locate(e, epoch, n_batches))?;
        let val_metric = match validation {
            Some(v) if !v.is_empty() => {
                let preds = v.predict_with(&params)?;
                evaluate_metric(&preds, &v.targets, config.loss)
            }
            _ => None,
        };
        log.push(EpochRecord {
            epoch,
            lambda,
            lr,
            train_loss,
            val_metric,
        });
        if train_loss < best.0 {
            best = (train_loss, params.clone(), epoch);
        }
        last_loss = train_loss;
    }

    let (params, final_train_loss, selected_epoch) = match config.checkpoint {
        Checkpoint::FinalEpoch => (params, last_loss, config.epochs),
        Checkpoint::BestTrainLoss => (best.1, best.0, best.2),
    };
    Ok(TrainOutcome {
        params,
        log,
        initial_train_loss,
        final_train_loss,
        selected_epoch,
    })
}

/// Writes the epoch log as CSV: `epoch,lambda,lr,train_loss,val_metric`.
pub fn write_log_csv<W: std::io::Write>(log: &[EpochRecord], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "lambda", "lr", "train_loss", "val_metric"])?;
    for r in log {
        w.write_record([
            r.epoch.to_string(),
            r.lambda.to_string(),
            r.lr.to_string(),
            r.train_loss.to_string(),
            r.val_metric.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()
}
