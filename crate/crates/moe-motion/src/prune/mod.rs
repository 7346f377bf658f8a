//! Unstructured magnitude pruning with hard masks.
//!
//! Masked weights are nullified, never removed: tensor shapes are
//! preserved, masked entries are held at exactly zero, and their optimizer
//! updates are suppressed. Masks only grow (monotone pruning), so sparsity
//! never decreases between events.

mod mask;

pub use mask::{Bitmask, MaskSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{ParamSet, TensorKey, TensorKind};
use crate::numeric::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneScope {
    /// One magnitude ranking across all prunable tensors.
    #[default]
    Global,
    /// Independent ranking (and the same target fraction) per tensor.
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneSchedule {
    /// Full target sparsity from the first mask event onward.
    OneShot,
    /// Half-cosine ramp reaching the target at `ramp_end_fraction` of
    /// training, flat afterwards.
    #[default]
    OneCycle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruneConfig {
    /// Final fraction of prunable parameters to nullify, in [0, 1).
    pub target_sparsity: f64,
    #[serde(default)]
    pub scope: PruneScope,
    #[serde(default)]
    pub schedule: PruneSchedule,
    /// Fraction of total training steps at which the one-cycle ramp reaches
    /// the target.
    #[serde(default = "default_ramp_end")]
    pub ramp_end_fraction: f64,
    /// Masks are recomputed every this many optimizer steps (and always at
    /// step 0 and the final step).
    #[serde(default = "default_interval")]
    pub mask_update_interval: usize,
    #[serde(default)]
    pub include_biases: bool,
    #[serde(default = "default_include_gating")]
    pub include_gating: bool,
}

fn default_ramp_end() -> f64 {
    0.8
}

fn default_interval() -> usize {
    100
}

fn default_include_gating() -> bool {
    true
}

impl PruneConfig {
    pub fn new(target_sparsity: f64) -> Self {
        PruneConfig {
            target_sparsity,
            scope: PruneScope::default(),
            schedule: PruneSchedule::default(),
            ramp_end_fraction: default_ramp_end(),
            mask_update_interval: default_interval(),
            include_biases: false,
            include_gating: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.target_sparsity) {
            return Err(Error::Config(format!(
                "target_sparsity must be in [0, 1), got {}",
                self.target_sparsity
            )));
        }
        if !(self.ramp_end_fraction > 0.0 && self.ramp_end_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "ramp_end_fraction must be in (0, 1], got {}",
                self.ramp_end_fraction
            )));
        }
        if self.mask_update_interval == 0 {
            return Err(Error::Config("mask_update_interval must be positive".into()));
        }
        Ok(())
    }

    /// Whether pruning covers this tensor. Weights are always covered except
    /// gating weights when `include_gating` is off; biases join only when
    /// `include_biases` is on (gating biases additionally need
    /// `include_gating`).
    pub fn covers(&self, key: TensorKey) -> bool {
        if key.is_gating() && !self.include_gating {
            return false;
        }
        match key.kind() {
            TensorKind::Weight => true,
            TensorKind::Bias => self.include_biases,
        }
    }

    pub fn prunable_keys(&self, n_experts: usize) -> Vec<TensorKey> {
        ParamSet::<f32>::tensor_keys(n_experts)
            .into_iter()
            .filter(|k| self.covers(*k))
            .collect()
    }
}

/// Scheduled sparsity at training progress `tau` in [0, 1].
///
/// One-cycle follows `s_f (1 - cos(pi min(tau / ramp_end, 1))) / 2`: zero at
/// the start, half the target when the ramp is half done, exactly the
/// target from `ramp_end` on.
pub fn sparsity_at(tau: f64, config: &PruneConfig) -> f64 {
    let tau = tau.clamp(0.0, 1.0);
    match config.schedule {
        PruneSchedule::OneShot => config.target_sparsity,
        PruneSchedule::OneCycle => {
            let ramp = (tau / config.ramp_end_fraction).min(1.0);
            config.target_sparsity * (1.0 - (std::f64::consts::PI * ramp).cos()) / 2.0
        }
    }
}

/// Builds fresh masks nullifying the `floor(s * N)` smallest-magnitude
/// prunable parameters.
///
/// Global scope ranks every prunable parameter together; local scope ranks
/// each tensor on its own with the same fraction. Ties in magnitude break
/// by (canonical tensor order, flat index) ascending, so masks are a pure
/// function of the parameter values.
pub fn compute_masks<T: Scalar>(params: &ParamSet<T>, config: &PruneConfig, sparsity: f64) -> Result<MaskSet> {
    config.validate()?;
    if !(0.0..=1.0).contains(&sparsity) {
        return Err(Error::Config(format!("sparsity must be in [0, 1], got {sparsity}")));
    }
    let keys = config.prunable_keys(params.n_experts());
    let mut entries: Vec<(TensorKey, Bitmask)> = keys
        .iter()
        .map(|&k| (k, Bitmask::all_kept(params.tensor(k).len())))
        .collect();

    match config.scope {
        PruneScope::Global => {
            let total: usize = keys.iter().map(|&k| params.tensor(k).len()).sum();
            let to_mask = (sparsity * total as f64).floor() as usize;
            if to_mask == 0 {
                return Ok(MaskSet { entries });
            }
            // (|w|, global flat index); the index doubles as the tie-break
            // and as the inverse map back to (tensor, offset)
            let mut ranked: Vec<(f64, u64)> = Vec::with_capacity(total);
            let mut base = 0u64;
            for &k in &keys {
                let t = params.tensor(k);
                ranked.extend(t.iter().enumerate().map(|(i, v)| (v.abs().as_f64(), base + i as u64)));
                base += t.len() as u64;
            }
            let cmp = |a: &(f64, u64), b: &(f64, u64)| {
                a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
            };
            if to_mask < total {
                ranked.select_nth_unstable_by(to_mask, cmp);
            }
            let mut offsets = Vec::with_capacity(keys.len() + 1);
            offsets.push(0u64);
            for &k in &keys {
                offsets.push(offsets.last().unwrap() + params.tensor(k).len() as u64);
            }
            for &(_, flat) in &ranked[..to_mask] {
                let tensor_idx = offsets.partition_point(|&o| o <= flat) - 1;
                entries[tensor_idx].1.mask((flat - offsets[tensor_idx]) as usize);
            }
        }
        PruneScope::Local => {
            for (key, bitmap) in entries.iter_mut() {
                let t = params.tensor(*key);
                let to_mask = (sparsity * t.len() as f64).floor() as usize;
                if to_mask == 0 {
                    continue;
                }
                let mut ranked: Vec<(f64, u64)> =
                    t.iter().enumerate().map(|(i, v)| (v.abs().as_f64(), i as u64)).collect();
                let cmp = |a: &(f64, u64), b: &(f64, u64)| {
                    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
                };
                if to_mask < t.len() {
                    ranked.select_nth_unstable_by(to_mask, cmp);
                }
                for &(_, i) in &ranked[..to_mask] {
                    bitmap.mask(i as usize);
                }
            }
        }
    }
    Ok(MaskSet { entries })
}

/// Nullifies masked parameters in place. Idempotent; a second application
/// changes nothing.
pub fn apply_masks<T: Scalar>(params: &mut ParamSet<T>, masks: &MaskSet) {
    masks.apply(params);
}

/// One mask recomputation during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskEvent {
    pub step: u64,
    /// Training progress (step / total_steps) at the event.
    pub tau: f64,
    pub scheduled_sparsity: f64,
    /// Masked fraction actually in force after the event (the union with
    /// earlier masks can only raise it).
    pub achieved_sparsity: f64,
}

/// Live pruning state carried through a training run.
#[derive(Debug, Clone)]
pub struct PruneState {
    pub config: PruneConfig,
    pub masks: MaskSet,
    pub events: Vec<MaskEvent>,
}

impl PruneState {
    pub fn new<T: Scalar>(params: &ParamSet<T>, config: PruneConfig) -> Result<Self> {
        config.validate()?;
        let entries = config
            .prunable_keys(params.n_experts())
            .into_iter()
            .map(|k| (k, Bitmask::all_kept(params.tensor(k).len())))
            .collect();
        Ok(PruneState {
            config,
            masks: MaskSet { entries },
            events: Vec::new(),
        })
    }

    /// Masked fraction of the prunable parameters currently in force.
    pub fn current_sparsity(&self) -> f64 {
        self.masks.sparsity()
    }

    /// Advances the schedule at optimizer step `step` of `total_steps`.
    ///
    /// On mask events (every `mask_update_interval` steps, step 0, and the
    /// final step) recomputes masks at the scheduled sparsity, unions them
    /// into the standing masks so pruning stays monotone, nullifies the
    /// parameters, and records the event. Returns the event when one fired.
    pub fn on_step<T: Scalar>(
        &mut self,
        params: &mut ParamSet<T>,
        step: u64,
        total_steps: u64,
    ) -> Result<Option<MaskEvent>> {
        let interval = self.config.mask_update_interval as u64;
        let is_event = step % interval == 0 || step == total_steps;
        if !is_event {
            return Ok(None);
        }
        let tau = if total_steps == 0 { 1.0 } else { step as f64 / total_steps as f64 };
        let scheduled = sparsity_at(tau, &self.config);
        let fresh = compute_masks(params, &self.config, scheduled)?;
        self.masks.union_masked(&fresh);
        self.masks.apply(params);
        let event = MaskEvent {
            step,
            tau,
            scheduled_sparsity: scheduled,
            achieved_sparsity: self.current_sparsity(),
        };
        self.events.push(event);
        Ok(Some(event))
    }
}
