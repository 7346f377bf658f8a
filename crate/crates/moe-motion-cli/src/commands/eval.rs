use std::fs;
use std::path::Path;

use serde::Serialize;

use moe_motion::checkpoint::Checkpoint;
use moe_motion::data::rollout;
use moe_motion::eval::{cost_report, foot_skate, SkatingReport};
use moe_motion::Result;

use super::{check_schema_match, prune_state_from_masks, resolve_clips, rollout_inputs};
use crate::dataset_io::{prepare_out_dir, write_json};

#[derive(Serialize)]
struct ClipEval {
    id: String,
    gait: String,
    frames_rolled: usize,
    /// Skating of the autoregressive rollout.
    rollout: SkatingReport,
    /// Skating of the reference clip itself (near zero by construction).
    reference: SkatingReport,
}

#[derive(Serialize)]
struct EvalReport {
    checkpoint_seed: u64,
    data_seed: u64,
    threshold_cm: f64,
    mean_rollout_skating: f64,
    mean_reference_skating: f64,
    clips: Vec<ClipEval>,
}

#[allow(clippy::too_many_arguments)]
pub fn run(
    checkpoint: &Path,
    out_dir: &Path,
    data: Option<&Path>,
    config: Option<&Path>,
    seed_override: Option<u64>,
    threshold_flag: Option<f64>,
) -> Result<()> {
    let ck = Checkpoint::<f32>::load(checkpoint)?;
    let inputs = resolve_clips(data, config, seed_override)?;
    check_schema_match(&ck.net, &inputs.schema)?;
    let threshold_cm = threshold_flag.unwrap_or(inputs.eval.threshold_cm);

    let mut clips = Vec::with_capacity(inputs.labeled.len());
    let mut rollouts = Vec::with_capacity(inputs.labeled.len());
    for (gait, clip) in &inputs.labeled {
        let (seed_frame, controls, n_steps) = rollout_inputs(clip, inputs.eval.rollout_frames);
        let rolled = rollout(&ck.net, &inputs.schema, &seed_frame, &controls, n_steps)?;
        clips.push(ClipEval {
            id: clip.id.clone(),
            gait: gait.clone(),
            frames_rolled: n_steps,
            rollout: foot_skate(&rolled.clip, threshold_cm)?,
            reference: foot_skate(clip, threshold_cm)?,
        });
        rollouts.push((clip.id.clone(), rolled.clip));
    }
    let mean = |f: fn(&ClipEval) -> f64| clips.iter().map(f).sum::<f64>() / clips.len() as f64;
    let report = EvalReport {
        checkpoint_seed: ck.seed,
        data_seed: inputs.seed,
        threshold_cm,
        mean_rollout_skating: mean(|c| c.rollout.mean),
        mean_reference_skating: mean(|c| c.reference.mean),
        clips,
    };
    let cost = cost_report(&ck.net, ck.masks.as_ref().map(prune_state_from_masks).as_ref());

    let out = prepare_out_dir(out_dir)?;
    write_json(&out.join("skating.json"), &report)?;
    write_json(&out.join("cost.json"), &cost)?;
    fs::create_dir_all(out.join("rollouts"))?;
    for (source_id, rolled) in &rollouts {
        rolled.write_csv(&out.join(format!("rollouts/{source_id}.csv")))?;
    }
    println!(
        "skating {:.4} cm/frame over {} rollouts (reference {:.4}); \
         {:.1} Mb, {:.2} MFLOPs, sparsity {:.3} -> {}",
        report.mean_rollout_skating,
        report.clips.len(),
        report.mean_reference_skating,
        cost.size_megabits,
        cost.mflops,
        cost.sparsity,
        out.display()
    );
    Ok(())
}
