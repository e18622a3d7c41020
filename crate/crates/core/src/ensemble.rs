//! Additive ensembles trained stage by stage.
//!
//! Stage `e` trains a fresh component against the frozen sum of the
//! previous ones, supplied as per-row offsets. The new component's output
//! layer starts at exactly zero, so stage `e` begins at the loss where
//! stage `e − 1` ended. Classification components are summed as logits.

use serde::{Deserialize, Serialize};

use crate::error::{LcnError, Result};
use crate::network::{predict_eval, Architecture, LcnParameters, Variant};
use crate::rng::stage_seed;
use crate::training::{
    add_offset, train, Anneal, Checkpoint, EpochRecord, LossKind, OptimizerKind, Samples, TrainConfig,
};

/// How component outputs are combined.
pub const LINK: &str = "sum_of_pre_link_outputs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElcnConfig {
    pub architecture: Architecture,
    /// Applied to every stage; the seed is varied per stage.
    pub train: TrainConfig,
    pub ensemble_size: usize,
}

impl ElcnConfig {
    /// ALCN base models of depth 12, AMSGrad at lr 0.01, batch 256,
    /// 30 epochs per stage, DropConnect 0.75, no learning-rate decay.
    pub fn classification() -> Self {
        ElcnConfig {
            architecture: Architecture::new(12, Variant::Alcn),
            train: TrainConfig {
                epochs: 30,
                batch_size: 256,
                learning_rate: 0.01,
                lr_decay_every: 30,
                lr_decay_factor: 1.0,
                anneal: Anneal::LinearToRelu,
                dropconnect_prob: 0.75,
                loss: LossKind::CrossEntropy,
                seed: 0,
                optimizer: OptimizerKind::amsgrad(),
                checkpoint: Checkpoint::BestTrainLoss,
            },
            ensemble_size: 8,
        }
    }

    /// As [`ElcnConfig::classification`] with lr 1e-4, DropConnect 0.25 and
    /// squared error.
    pub fn regression() -> Self {
        let mut c = Self::classification();
        c.train.learning_rate = 1e-4;
        c.train.dropconnect_prob = 0.25;
        c.train.loss = LossKind::MeanSquaredError;
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.ensemble_size == 0 {
            return Err(LcnError::InvalidConfig("ensemble size must be at least 1".into()));
        }
        if !matches!(self.architecture.variant, Variant::Lcn | Variant::Alcn) {
            return Err(LcnError::UnsupportedVariant {
                op: "ensemble training",
                variant: self.architecture.variant.to_string(),
            });
        }
        self.train.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElcnModel {
    components: Vec<LcnParameters>,
}

impl ElcnModel {
    pub fn new(components: Vec<LcnParameters>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| LcnError::InvalidModel("an ensemble needs at least one component".into()))?;
        for (e, c) in components.iter().enumerate() {
            if !matches!(c.variant(), Variant::Lcn | Variant::Alcn) {
                return Err(LcnError::UnsupportedVariant {
                    op: "ensemble component",
                    variant: c.variant().to_string(),
                });
            }
            if c.variant() != first.variant()
                || c.input_dim() != first.input_dim()
                || c.output_dim() != first.output_dim()
            {
                return Err(LcnError::InvalidModel(format!(
                    "component {} does not match the first component's variant or dimensions",
                    e + 1
                )));
            }
        }
        Ok(ElcnModel { components })
    }

    pub fn components(&self) -> &[LcnParameters] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn base_variant(&self) -> Variant {
        self.components[0].variant()
    }

    pub fn input_dim(&self) -> usize {
        self.components[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.components[0].output_dim()
    }
}

/// Elementwise sum of component outputs, accumulated in component order.
pub fn elcn_predict(model: &ElcnModel, x: &[f64]) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; model.output_dim()];
    for c in &model.components {
        add_offset(&mut acc, &predict_eval(c, x)?);
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    /// 1-based.
    pub stage: usize,
    pub seed: u64,
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
    pub selected_epoch: usize,
    pub log: Vec<EpochRecord>,
}

/// Adds `params`' outputs to the cached offsets, row by row.
fn accumulate(offsets: &mut [Vec<f64>], inputs: &[Vec<f64>], params: &LcnParameters) -> Result<()> {
    for (o, x) in offsets.iter_mut().zip(inputs) {
        add_offset(o, &predict_eval(params, x)?);
    }
    Ok(())
}

/// Trains `config.ensemble_size` components in sequence. Each finished
/// component is handed to `sink` together with its 1-based stage index and
/// then dropped, so at most one component is resident while training; only
/// the offset matrices persist between stages.
pub fn elcn_train_with_sink<F>(
    train_set: &Samples,
    validation: Option<&Samples>,
    config: &ElcnConfig,
    mut sink: F,
) -> Result<Vec<StageReport>>
where
    F: FnMut(usize, LcnParameters) -> Result<()>,
{
    config.validate()?;
    let first = train_set
        .inputs
        .first()
        .ok_or_else(|| LcnError::InvalidConfig("training split is empty".into()))?;
    let input_dim = first.len();
    let output_dim = train_set.targets[0].len();

    let mut train_stage = Samples {
        inputs: train_set.inputs.clone(),
        targets: train_set.targets.clone(),
        offsets: None,
    };
    let mut val_stage = validation.filter(|v| !v.is_empty()).map(|v| Samples {
        inputs: v.inputs.clone(),
        targets: v.targets.clone(),
        offsets: None,
    });
    let mut reports = Vec::with_capacity(config.ensemble_size);

    for stage in 1..=config.ensemble_size {
        let seed = stage_seed(config.train.seed, stage);
        let mut params = LcnParameters::init_seeded(&config.architecture, input_dim, output_dim, seed)?;
        if stage > 1 {
            params.zero_head_output();
        }
        let stage_config = TrainConfig {
            seed,
            ..config.train.clone()
        };
        let outcome = train(params, &train_stage, val_stage.as_ref(), &stage_config).map_err(|e| match e {
            LcnError::Divergence { epoch, batch, .. } => LcnError::Divergence {
                epoch,
                batch,
                stage: Some(stage),
            },
            other => other,
        })?;

        if stage < config.ensemble_size {
            let train_offsets = train_stage
                .offsets
                .get_or_insert_with(|| vec![vec![0.0; output_dim]; train_set.len()]);
            accumulate(train_offsets, &train_stage.inputs, &outcome.params)?;
            if let Some(v) = val_stage.as_mut() {
                let n = v.len();
                let val_offsets = v.offsets.get_or_insert_with(|| vec![vec![0.0; output_dim]; n]);
                accumulate(val_offsets, &v.inputs, &outcome.params)?;
            }
        }
        reports.push(StageReport {
            stage,
            seed,
            initial_train_loss: outcome.initial_train_loss,
            final_train_loss: outcome.final_train_loss,
            selected_epoch: outcome.selected_epoch,
            log: outcome.log,
        });
        sink(stage, outcome.params)?;
    }
    Ok(reports)
}

/// [`elcn_train_with_sink`] collecting every component in memory.
pub fn elcn_train(
    train_set: &Samples,
    validation: Option<&Samples>,
    config: &ElcnConfig,
) -> Result<(ElcnModel, Vec<StageReport>)> {
    let mut components = Vec::with_capacity(config.ensemble_size);
    let reports = elcn_train_with_sink(train_set, validation, config, |_, p| {
        components.push(p);
        Ok(())
    })?;
    Ok((ElcnModel::new(components)?, reports))
}
