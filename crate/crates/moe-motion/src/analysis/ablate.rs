//! Expert ablation: run the network with one expert's gating weight forced
//! to zero and measure what the motion loses.

use std::sync::Arc;

use serde::Serialize;

use crate::data::{rollout, rollout_with, MotionClip, Rollout, SkeletonSchema};
use crate::error::{Error, Result};
use crate::eval::foot_skate;
use crate::network::{forward_blended, Mode, MoeNetwork};
use crate::numeric::{DenseMatrix, Rng, Scalar};

/// A read-only view of a network with expert `expert` deactivated. The
/// underlying parameters are never touched; only the gating vector is edited
/// at prediction time.
#[derive(Debug, Clone, Copy)]
pub struct AblatedNetwork<'a, T> {
    net: &'a MoeNetwork<T>,
    expert: usize,
    renormalize: bool,
}

/// Deactivates expert `expert`: its gating weight is forced to 0 on every
/// frame. With `renormalize` the remaining weights are rescaled to sum to 1;
/// without it the deactivated mass is simply lost (the literal reading of
/// switching an expert off).
pub fn ablate_expert<T: Scalar>(
    net: &MoeNetwork<T>,
    expert: usize,
    renormalize: bool,
) -> Result<AblatedNetwork<'_, T>> {
    if expert >= net.config.n_experts {
        return Err(Error::Config(format!(
            "expert index {expert} out of range for {} expert(s)",
            net.config.n_experts
        )));
    }
    if renormalize && net.config.n_experts == 1 {
        return Err(Error::Config(
            "cannot renormalize after deactivating the only expert".into(),
        ));
    }
    Ok(AblatedNetwork {
        net,
        expert,
        renormalize,
    })
}

impl<T: Scalar> AblatedNetwork<'_, T> {
    pub fn expert(&self) -> usize {
        self.expert
    }

    /// Gating vector with the ablated entry zeroed (and the rest rescaled
    /// when renormalizing; softmax positivity keeps the remainder nonzero).
    pub fn gate(&self, frame: &[T]) -> Result<Vec<T>> {
        let mut omega = self.net.gate(frame)?;
        omega[self.expert] = T::zero();
        if self.renormalize {
            let sum = omega.iter().fold(T::zero(), |a, &b| a + b);
            for w in omega.iter_mut() {
                *w = *w / sum;
            }
        }
        Ok(omega)
    }

    /// Deterministic (eval-mode) prediction under the ablated gate.
    pub fn predict_with_gate(&self, frame: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let omega = self.gate(frame)?;
        let blended = self.net.blend(&omega)?;
        let mut rng = Rng::new(0); // eval mode: never consulted
        let y = forward_blended(&self.net.config, &blended, frame, Mode::Eval, &mut rng)?;
        Ok((y, omega))
    }

    /// Autoregressive rollout under the ablated gate; the recorded omega
    /// column for the deactivated expert is exactly zero on every frame.
    pub fn rollout(
        &self,
        schema: &Arc<SkeletonSchema>,
        seed_frame: &[T],
        controls: &DenseMatrix<T>,
        n_steps: usize,
    ) -> Result<Rollout<T>> {
        let config = &self.net.config;
        if config.d_in != schema.d_full() || config.d_out != schema.d_out() {
            return Err(Error::shape(
                "rollout network",
                format!("d_in {}, d_out {}", schema.d_full(), schema.d_out()),
                format!("d_in {}, d_out {}", config.d_in, config.d_out),
            ));
        }
        rollout_with(&self.net.norm, config.n_experts, schema, seed_frame, controls, n_steps, |x| {
            self.predict_with_gate(x)
        })
    }
}

/// What a rollout scored: skating and pose-velocity magnitude are absent
/// when the rollout diverged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RolloutMetrics {
    pub diverged: bool,
    pub skating: Option<f64>,
    /// Mean joint-velocity magnitude (cm/frame) over all joints and frames;
    /// a collapse toward zero marks frozen motion.
    pub mean_velocity: Option<f64>,
}

/// One expert's ablation outcome against the unablated baseline.
#[derive(Debug, Clone, Serialize)]
pub struct AblationResult<T> {
    pub expert: usize,
    pub renormalize: bool,
    pub gait: String,
    pub baseline: RolloutMetrics,
    pub ablated: RolloutMetrics,
    /// ablated − baseline, present when both rollouts survived.
    pub skating_delta: Option<f64>,
    pub velocity_delta: Option<f64>,
    /// The ablated rollout for export and inspection; absent on divergence.
    #[serde(skip)]
    pub clip: Option<MotionClip<T>>,
}

/// Mean joint-velocity magnitude over every joint and frame of the clip.
pub fn mean_pose_velocity<T: Scalar>(clip: &MotionClip<T>) -> f64 {
    let schema = &clip.schema;
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for t in 0..clip.n_frames() {
        let frame = clip.frame(t);
        for j in 0..schema.joints.len() {
            let v = &frame[schema.joint_velocity_columns(j)];
            let (x, y, z) = (v[0].as_f64(), v[1].as_f64(), v[2].as_f64());
            sum += (x * x + y * y + z * z).sqrt();
            count += 1;
        }
    }
    sum / count as f64
}

/// Deactivates each expert in turn, rolls the network out from `seed_frame`,
/// and scores every run against the unablated rollout. Divergence of any
/// single run is recorded, not fatal.
#[allow(clippy::too_many_arguments)]
pub fn ablation_study<T: Scalar>(
    net: &MoeNetwork<T>,
    schema: &Arc<SkeletonSchema>,
    gait: &str,
    seed_frame: &[T],
    controls: &DenseMatrix<T>,
    n_steps: usize,
    renormalize: bool,
    threshold_cm: f64,
) -> Result<Vec<AblationResult<T>>> {
    let (baseline, _) = score(rollout(net, schema, seed_frame, controls, n_steps), threshold_cm)?;
    let mut results = Vec::with_capacity(net.config.n_experts);
    for expert in 0..net.config.n_experts {
        let view = ablate_expert(net, expert, renormalize)?;
        let (ablated, clip) = score(view.rollout(schema, seed_frame, controls, n_steps), threshold_cm)?;
        results.push(AblationResult {
            expert,
            renormalize,
            gait: gait.to_string(),
            skating_delta: delta(ablated.skating, baseline.skating),
            velocity_delta: delta(ablated.mean_velocity, baseline.mean_velocity),
            baseline: baseline.clone(),
            ablated,
            clip,
        });
    }
    Ok(results)
}

fn delta(ablated: Option<f64>, baseline: Option<f64>) -> Option<f64> {
    Some(ablated? - baseline?)
}

fn score<T: Scalar>(
    rolled: Result<Rollout<T>>,
    threshold_cm: f64,
) -> Result<(RolloutMetrics, Option<MotionClip<T>>)> {
    match rolled {
        Ok(r) => {
            let metrics = RolloutMetrics {
                diverged: false,
                skating: Some(foot_skate(&r.clip, threshold_cm)?.mean),
                mean_velocity: Some(mean_pose_velocity(&r.clip)),
            };
            Ok((metrics, Some(r.clip)))
        }
        Err(Error::Numeric(_)) => Ok((
            RolloutMetrics {
                diverged: true,
                skating: None,
                mean_velocity: None,
            },
            None,
        )),
        Err(e) => Err(e),
    }
}
