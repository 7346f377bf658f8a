use std::fs;
use std::path::Path;

use serde::Serialize;

use moe_motion::analysis::{compare_traces, trace_activations, ActivationTrace, TraceComparison};
use moe_motion::checkpoint::Checkpoint;
use moe_motion::Result;

use super::{check_schema_match, resolve_clips};
use crate::dataset_io::{prepare_out_dir, write_json};

#[derive(Serialize)]
struct TraceSummary {
    clip: String,
    gait: String,
    model: String,
    entropy: f64,
    mean_omega: Vec<f64>,
}

#[derive(Serialize)]
struct ClipComparison {
    clip: String,
    comparison: TraceComparison,
}

fn summarize(clip_ids: &[String], traces: &[ActivationTrace]) -> Vec<TraceSummary> {
    clip_ids
        .iter()
        .zip(traces)
        .map(|(clip, t)| TraceSummary {
            clip: clip.clone(),
            gait: t.gait.clone(),
            model: t.model.clone(),
            entropy: t.entropy,
            mean_omega: t.mean_omega.clone(),
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn run(
    checkpoint: &Path,
    out_dir: &Path,
    data: Option<&Path>,
    config: Option<&Path>,
    seed_override: Option<u64>,
    model: &str,
    baseline: Option<&Path>,
) -> Result<()> {
    let ck = Checkpoint::<f32>::load(checkpoint)?;
    let inputs = resolve_clips(data, config, seed_override)?;
    check_schema_match(&ck.net, &inputs.schema)?;
    let clip_ids: Vec<String> = inputs.labeled.iter().map(|(_, c)| c.id.clone()).collect();

    let traces = trace_activations(&ck.net, &inputs.labeled, model)?;
    let mut summaries = summarize(&clip_ids, &traces);

    let out = prepare_out_dir(out_dir)?;
    fs::create_dir_all(out.join("traces"))?;
    for (clip, trace) in clip_ids.iter().zip(&traces) {
        fs::write(out.join(format!("traces/{clip}.{}.csv", trace.model)), trace.to_csv())?;
    }

    if let Some(base_path) = baseline {
        let base = Checkpoint::<f32>::load(base_path)?;
        check_schema_match(&base.net, &inputs.schema)?;
        let base_traces = trace_activations(&base.net, &inputs.labeled, "baseline")?;
        for (clip, trace) in clip_ids.iter().zip(&base_traces) {
            fs::write(out.join(format!("traces/{clip}.{}.csv", trace.model)), trace.to_csv())?;
        }
        summaries.extend(summarize(&clip_ids, &base_traces));

        let comparisons = clip_ids
            .iter()
            .zip(traces.iter().zip(&base_traces))
            .map(|(clip, (a, b))| {
                Ok(ClipComparison {
                    clip: clip.clone(),
                    comparison: compare_traces(b, a)?, // delta = model − baseline
                })
            })
            .collect::<Result<Vec<_>>>()?;
        write_json(&out.join("trace_compare.json"), &comparisons)?;
        for c in &comparisons {
            log::info!(
                "{}: entropy delta {:+.4} nats, mean-activation L1 {:.4}",
                c.clip,
                c.comparison.entropy_delta,
                c.comparison.mean_l1_distance
            );
        }
    }

    write_json(&out.join("trace_summary.json"), &summaries)?;
    println!("traced {} clips ({} experts) -> {}", clip_ids.len(), ck.net.config.n_experts, out.display());
    Ok(())
}
