//! Autoregressive synthesis: the network predicts the next frame from the
//! current one while the caller drives the control columns.

use std::sync::Arc;

use crate::data::{MotionClip, SkeletonSchema, CONTROL_COLS};
use crate::error::{Error, Result};
use crate::network::{Mode, MoeNetwork, Normalization};
use crate::numeric::{DenseMatrix, Rng, Scalar};

/// A generated clip plus the gating weights behind every generated frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout<T> {
    pub clip: MotionClip<T>,
    /// One row per generated frame (`n_steps` rows), one column per expert;
    /// each row sums to 1.
    pub omegas: DenseMatrix<T>,
}

/// Runs the network forward `n_steps` frames from `seed_frame`.
///
/// Each step normalizes the current raw frame with the network's stored
/// statistics, predicts the next frame's non-control features, denormalizes
/// them, and splices in the caller's control row. The result has
/// `n_steps + 1` frames (seed included). Divergence (any non-finite value)
/// aborts with the offending frame index.
pub fn rollout<T: Scalar>(
    net: &MoeNetwork<T>,
    schema: &Arc<SkeletonSchema>,
    seed_frame: &[T],
    controls: &DenseMatrix<T>,
    n_steps: usize,
) -> Result<Rollout<T>> {
    if net.config.d_in != schema.d_full() || net.config.d_out != schema.d_out() {
        return Err(Error::shape(
            "rollout network",
            format!("d_in {}, d_out {}", schema.d_full(), schema.d_out()),
            format!("d_in {}, d_out {}", net.config.d_in, net.config.d_out),
        ));
    }
    let mut rng = Rng::new(0); // eval mode: never consulted
    rollout_with(&net.norm, net.config.n_experts, schema, seed_frame, controls, n_steps, |x| {
        net.predict_with_gate(x, Mode::Eval, &mut rng)
    })
}

/// The autoregressive loop behind [`rollout`], generic over the predictor so
/// modified networks (expert ablations) can drive it too. `predict` receives
/// the normalized current frame and returns the normalized next-frame
/// features plus the gating vector used.
pub fn rollout_with<T: Scalar, F>(
    norm: &Normalization<T>,
    n_experts: usize,
    schema: &Arc<SkeletonSchema>,
    seed_frame: &[T],
    controls: &DenseMatrix<T>,
    n_steps: usize,
    mut predict: F,
) -> Result<Rollout<T>>
where
    F: FnMut(&[T]) -> Result<(Vec<T>, Vec<T>)>,
{
    let d_full = schema.d_full();
    let d_out = schema.d_out();
    if seed_frame.len() != d_full {
        return Err(Error::shape("rollout seed frame", format!("{d_full}"), format!("{}", seed_frame.len())));
    }
    if controls.cols() != CONTROL_COLS || controls.rows() < n_steps {
        return Err(Error::shape(
            "rollout controls",
            format!("at least {n_steps} x {CONTROL_COLS}"),
            format!("{} x {}", controls.rows(), controls.cols()),
        ));
    }

    let mut frames = DenseMatrix::<T>::zeros(n_steps + 1, d_full);
    frames.row_mut(0).copy_from_slice(seed_frame);
    let mut omegas = DenseMatrix::<T>::zeros(n_steps, n_experts);

    let mut normalized = vec![T::zero(); d_full];
    for step in 0..n_steps {
        let current: Vec<T> = frames.row(step).to_vec();
        norm.normalize_input(&current, &mut normalized);
        let (pred, omega) = predict(&normalized)
            .map_err(|e| Error::Numeric(format!("rollout diverged at frame {}: {e}", step + 1)))?;
        if pred.len() != d_out || omega.len() != n_experts {
            return Err(Error::shape(
                "rollout prediction",
                format!("{d_out} features, {n_experts} gate weights"),
                format!("{}, {}", pred.len(), omega.len()),
            ));
        }
        let next = frames.row_mut(step + 1);
        norm.denormalize_output(&pred, &mut next[..d_out]);
        next[d_out..].copy_from_slice(&controls.row(step)[..CONTROL_COLS]);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "rollout diverged: non-finite values at frame {}",
                step + 1
            )));
        }
        omegas.row_mut(step).copy_from_slice(&omega);
    }

    let clip = MotionClip::new(schema.clone(), "rollout", frames)?;
    Ok(Rollout { clip, omegas })
}

/// Constant-control helper: repeats one (speed, turn) pair across the
/// control block for `n_steps` rows.
pub fn constant_controls<T: Scalar>(speed_per_frame: f64, turn_per_frame: f64, n_steps: usize) -> DenseMatrix<T> {
    let mut m = DenseMatrix::zeros(n_steps.max(1), CONTROL_COLS);
    for r in 0..m.rows() {
        let row = m.row_mut(r);
        for s in 0..CONTROL_COLS / 2 {
            row[2 * s] = T::from_f64(speed_per_frame);
            row[2 * s + 1] = T::from_f64(turn_per_frame);
        }
    }
    m
}
