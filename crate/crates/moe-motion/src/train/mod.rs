//! Mean-squared-error training of the mixture network: explicit
//! backpropagation, AdamWR (Adam + decoupled weight decay + cosine-annealed
//! warm restarts), seeded epoch shuffling, and optional in-loop pruning.

mod backprop;
mod optimizer;

pub use backprop::{forward_backward, forward_loss, Workspace};
pub use optimizer::{annealing_factor, OptimizerState};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::MotionDataset;
use crate::error::{Error, Result};
use crate::network::MoeNetwork;
use crate::numeric::{Rng, Scalar};
use crate::prune::{MaskEvent, PruneState};

/// Stream id for the per-epoch shuffle rng (offset by the epoch index).
const SHUFFLE_STREAM: u64 = 0x5u64 << 32;

fn default_epochs() -> usize {
    150
}
fn default_batch_size() -> usize {
    32
}
fn default_learning_rate() -> f64 {
    1e-4
}
fn default_weight_decay() -> f64 {
    2.5e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}
fn default_restart_epochs() -> f64 {
    10.0
}
fn default_restart_mult() -> f64 {
    2.0
}

/// Training hyperparameters. Defaults follow the reference recipe: 150
/// epochs, batch 32, η = 1e-4, λ = 2.5e-3, warm-restart cycle of 10 epochs
/// doubling after each restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// First cosine-annealing cycle length, in epochs.
    #[serde(default = "default_restart_epochs")]
    pub restart_epochs: f64,
    /// Cycle-length multiplier applied at each warm restart.
    #[serde(default = "default_restart_mult")]
    pub restart_mult: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            learning_rate: default_learning_rate(),
            weight_decay: default_weight_decay(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
            restart_epochs: default_restart_epochs(),
            restart_mult: default_restart_mult(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size as f64),
            ("learning_rate", self.learning_rate),
            ("epsilon", self.epsilon),
            ("restart_epochs", self.restart_epochs),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if self.restart_mult < 1.0 {
            return Err(Error::Config(format!(
                "restart_mult must be >= 1, got {}",
                self.restart_mult
            )));
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Cosine-annealing factor at the end of the epoch.
    pub annealing: f64,
    /// Global mask sparsity at the end of the epoch (0 when not pruning).
    pub sparsity: f64,
    pub wall_clock_s: f64,
}

/// Full training log, serializable as a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub mask_events: Vec<MaskEvent>,
    pub total_steps: u64,
}

impl TrainReport {
    pub fn final_val_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.val_loss)
    }
}

/// Called after every epoch with the record just produced. Return value is
/// ignored; pass `|_| ()` when no progress reporting is wanted.
pub type EpochHook<'a> = &'a mut dyn FnMut(&EpochRecord);

/// Trains `net` in place and returns the per-epoch log.
///
/// Per batch: forward/backward, gradient suppression on masked weights,
/// AdamWR step, then the pruning hook (which may extend masks, re-zero the
/// affected weights, and reset their optimizer moments). The pruning clock
/// also ticks once at step 0 so a one-shot schedule applies before any
/// update. Identical seeds and configs give bit-identical reports.
pub fn train<T: Scalar>(
    net: &mut MoeNetwork<T>,
    data: &MotionDataset<T>,
    config: &TrainConfig,
    mut prune: Option<&mut PruneState>,
    hook: Option<EpochHook<'_>>,
) -> Result<TrainReport> {
    config.validate()?;
    let n_train = data.train_rows.len();
    if n_train == 0 {
        return Err(Error::Config("training split is empty".into()));
    }
    if config.batch_size > n_train {
        return Err(Error::Config(format!(
            "batch_size {} exceeds training split size {n_train}",
            config.batch_size
        )));
    }
    if data.xs.cols() != net.config.d_in || data.ys.cols() != net.config.d_out {
        return Err(Error::shape(
            "train dataset",
            format!("{} input / {} output columns", net.config.d_in, net.config.d_out),
            format!("{} / {}", data.xs.cols(), data.ys.cols()),
        ));
    }

    let mut opt = OptimizerState::new(net, config);
    let mut ws = Workspace::new(&net.config);
    let mut grads = crate::network::ParamSet::zeros_like(&net.params);
    let rng = Rng::new(config.seed);
    let mut dropout_rng = rng.derive(1);

    let batches_per_epoch = n_train / config.batch_size;
    let total_steps = (config.epochs * batches_per_epoch) as u64;
    let mut step = 0u64;
    if let Some(p) = prune.as_deref_mut() {
        if p.on_step(&mut net.params, 0, total_steps)?.is_some() {
            opt.reset_masked_moments(&p.masks);
        }
    }

    let mut order: Vec<usize> = data.train_rows.clone();
    let mut report = TrainReport {
        epochs: Vec::with_capacity(config.epochs),
        mask_events: Vec::new(),
        total_steps,
    };
    let mut hook = hook;

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let mut shuffle_rng = rng.derive(SHUFFLE_STREAM + epoch as u64);
        shuffle_rng.shuffle(&mut order);

        let mut loss_sum = 0.0f64;
        for (b, batch) in order.chunks_exact(config.batch_size).enumerate() {
            opt.set_epoch_position(epoch as f64 + b as f64 / batches_per_epoch as f64, config);
            let loss =
                forward_backward(net, &data.xs, &data.ys, batch, &mut dropout_rng, &mut grads, &mut ws)?;
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite training loss at epoch {epoch}, step {step}"
                )));
            }
            loss_sum += loss;
            if let Some(p) = prune.as_deref_mut() {
                p.masks.suppress(&mut grads);
            }
            opt.apply_step(&mut net.params, &grads, config);
            step += 1;
            if let Some(p) = prune.as_deref_mut() {
                if p.on_step(&mut net.params, step, total_steps)?.is_some() {
                    opt.reset_masked_moments(&p.masks);
                }
            }
        }

        let val_loss = forward_loss(net, &data.xs, &data.ys, &data.val_rows, &mut ws)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches_per_epoch as f64,
            val_loss,
            annealing: opt.annealing(),
            sparsity: prune.as_deref().map_or(0.0, |p| p.current_sparsity()),
            wall_clock_s: started.elapsed().as_secs_f64(),
        };
        if let Some(h) = hook.as_deref_mut() {
            h(&record);
        }
        report.epochs.push(record);
    }

    if let Some(p) = prune.as_deref_mut() {
        report.mask_events = p.events.clone();
    }
    Ok(report)
}
