use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, NormalizedCenterline};
use crate::seed;

use super::adam::{Adam, AdamState};
use super::arch::{ArchConfig, ModelParams};
use super::network::{bce_with_logit, sigmoid, to_input, Workspace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub ensemble_size: usize,
    /// Random rotation of each training sample every epoch.
    pub augment: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 100,
            ensemble_size: 5,
            augment: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 || self.batch_size == 0 || self.epochs == 0 || self.ensemble_size == 0 {
            return Err(Error::Config(format!("training sizes must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Mean loss over each epoch's mini-batches, measured before the update.
    pub epoch_losses: Vec<f64>,
}

const TAG_INIT: u64 = 1;
const TAG_EPOCHS: u64 = 2;

/// Trains one sub-model for a fixed number of epochs.
///
/// Every epoch shuffles the data, draws a fresh rotation per sample, and
/// walks mini-batches in order; the final partial batch is kept. The batch
/// gradient is the mean of per-sample gradients accumulated in batch order.
pub fn train_submodel_with_history(
    data: &[(NormalizedCenterline, f64)],
    cfg: &TrainConfig,
    arch: &ArchConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::InvalidInput("cannot train on an empty set".into()));
    }
    cfg.validate()?;
    if let Some((_, t)) = data.iter().find(|(_, t)| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidInput(format!("target {t} outside [0, 1]")));
    }
    let mut params = ModelParams::init(arch, &mut seed::derived_rng(seed, &[TAG_INIT]))?;
    let mut rng = seed::derived_rng(seed, &[TAG_EPOCHS]);
    let optimizer = Adam::with_learning_rate(cfg.learning_rate);
    let mut state = AdamState::new(params.len());
    let mut grad = vec![0.0; params.len()];
    let mut ws = Workspace::new(arch);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (centerline, target) = &data[i];
                let input = if cfg.augment {
                    let angles = geometry::sample_training_rotation(&mut rng);
                    to_input(&geometry::rotate(centerline, angles)?)
                } else {
                    to_input(centerline)
                };
                let z = ws.forward_logit(&params, &input)?;
                epoch_loss += bce_with_logit(z, *target);
                ws.backward_from_logit(&params, scale * (sigmoid(z) - target), &mut grad);
            }
            step += 1;
            optimizer.step(params.values_mut(), &grad, &mut state, step);
        }
        epoch_losses.push(epoch_loss / data.len() as f64);
    }
    if !params.is_finite() {
        return Err(Error::InvalidInput("training diverged to non-finite parameters".into()));
    }
    Ok(TrainOutcome { params, epoch_losses })
}

pub fn train_submodel(
    data: &[(NormalizedCenterline, f64)],
    cfg: &TrainConfig,
    arch: &ArchConfig,
    seed: u64,
) -> Result<ModelParams> {
    Ok(train_submodel_with_history(data, cfg, arch, seed)?.params)
}

/// Mean loss of `params` on `data` without augmentation.
pub fn mean_loss(params: &ModelParams, data: &[(NormalizedCenterline, f64)]) -> Result<f64> {
    let mut ws = Workspace::new(params.arch());
    let mut total = 0.0;
    for (c, t) in data {
        total += bce_with_logit(ws.forward_logit(params, &to_input(c))?, *t);
    }
    Ok(total / data.len() as f64)
}
