//! Foot-skating metric: horizontal foot speed during ground contact,
//! weighted by how deep into the contact band the foot sits.

use serde::{Deserialize, Serialize};

use crate::data::MotionClip;
use crate::error::{Error, Result};
use crate::numeric::Scalar;

/// Default contact threshold, cm.
pub const DEFAULT_SKATE_THRESHOLD_CM: f64 = 2.5;

/// Skating summary for one clip. Units are cm per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkatingReport {
    pub threshold_cm: f64,
    pub total_frames: usize,
    /// Mean skating per contact frame, one entry per leg (FL FR RL RR); a
    /// leg that never touches down contributes 0.
    pub per_leg_mean: Vec<f64>,
    /// Contact frames per leg under the strict `height < threshold` test.
    pub contact_frames: Vec<usize>,
    /// Average of the per-leg means.
    pub mean: f64,
}

/// Evaluates `s = v * (2 - 2^(h/H))` per foot over contact frames
/// (strictly `h < H`), averaging per contact frame and then across legs.
pub fn foot_skate<T: Scalar>(clip: &MotionClip<T>, threshold_cm: f64) -> Result<SkatingReport> {
    if !(threshold_cm > 0.0) {
        return Err(Error::Config(format!(
            "skating threshold must be positive, got {threshold_cm}"
        )));
    }
    let schema = &clip.schema;
    if schema.feet.is_empty() {
        return Err(Error::Config(format!(
            "schema '{}' declares no feet; cannot measure skating",
            schema.name
        )));
    }
    let width = clip.frames.cols();
    for foot in &schema.feet {
        if foot.height_column >= width || foot.speed_column >= width {
            return Err(Error::Config(format!(
                "schema '{}' foot columns exceed clip width {width}",
                schema.name
            )));
        }
    }

    let n = clip.n_frames();
    let mut per_leg_mean = Vec::with_capacity(schema.feet.len());
    let mut contact_frames = Vec::with_capacity(schema.feet.len());
    for foot in &schema.feet {
        let mut sum = 0.0f64;
        let mut contacts = 0usize;
        for t in 0..n {
            let frame = clip.frame(t);
            let h = frame[foot.height_column].as_f64();
            let v = frame[foot.speed_column].as_f64();
            if h < threshold_cm {
                contacts += 1;
                sum += v * (2.0 - (h / threshold_cm).exp2());
            }
        }
        per_leg_mean.push(if contacts == 0 { 0.0 } else { sum / contacts as f64 });
        contact_frames.push(contacts);
    }
    let mean = per_leg_mean.iter().sum::<f64>() / per_leg_mean.len() as f64;
    Ok(SkatingReport {
        threshold_cm,
        total_frames: n,
        per_leg_mean,
        contact_frames,
        mean,
    })
}
