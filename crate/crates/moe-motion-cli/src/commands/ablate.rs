use std::collections::BTreeSet;
use std::path::Path;

use serde::Serialize;

use moe_motion::analysis::{ablation_study, AblationResult};
use moe_motion::checkpoint::Checkpoint;
use moe_motion::Result;

use super::{check_schema_match, resolve_clips, rollout_inputs};
use crate::dataset_io::{prepare_out_dir, write_json};

#[derive(Serialize)]
struct GaitAblation {
    gait: String,
    clip: String,
    results: Vec<AblationResult<f32>>,
}

#[allow(clippy::too_many_arguments)]
pub fn run(
    checkpoint: &Path,
    out_dir: &Path,
    data: Option<&Path>,
    config: Option<&Path>,
    seed_override: Option<u64>,
    threshold_flag: Option<f64>,
    renormalize: bool,
) -> Result<()> {
    let ck = Checkpoint::<f32>::load(checkpoint)?;
    let inputs = resolve_clips(data, config, seed_override)?;
    check_schema_match(&ck.net, &inputs.schema)?;
    let threshold_cm = threshold_flag.unwrap_or(inputs.eval.threshold_cm);

    // first clip of each gait keeps the study at K rollouts per gait
    let mut seen = BTreeSet::new();
    let mut studies = Vec::new();
    for (gait, clip) in &inputs.labeled {
        if !seen.insert(gait.clone()) {
            continue;
        }
        let (seed_frame, controls, n_steps) = rollout_inputs(clip, inputs.eval.rollout_frames);
        let results = ablation_study(
            &ck.net,
            &inputs.schema,
            gait,
            &seed_frame,
            &controls,
            n_steps,
            renormalize,
            threshold_cm,
        )?;
        studies.push(GaitAblation {
            gait: gait.clone(),
            clip: clip.id.clone(),
            results,
        });
    }

    let out = prepare_out_dir(out_dir)?;
    write_json(&out.join("ablation.json"), &studies)?;
    for study in &studies {
        let worst = study
            .results
            .iter()
            .filter_map(|r| r.skating_delta.map(|d| (r.expert, d)))
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()));
        match worst {
            Some((expert, delta)) => log::info!(
                "{}: largest skating shift from expert {expert} ({delta:+.4} cm/frame)",
                study.gait
            ),
            None => log::info!("{}: every ablated rollout diverged", study.gait),
        }
    }
    println!(
        "ablated {} experts across {} gaits -> {}",
        ck.net.config.n_experts,
        studies.len(),
        out.display()
    );
    Ok(())
}
