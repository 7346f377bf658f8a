use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use moe_motion::checkpoint::{Checkpoint, CHECKPOINT_VERSION};
use moe_motion::eval::{cost_report, CostReport};
use moe_motion::network::{NetworkConfig, TensorKey, TensorKind};
use moe_motion::Result;

use super::prune_state_from_masks;
use crate::dataset_io::{prepare_out_dir, write_json};

#[derive(Serialize)]
struct ExportSummary<'a> {
    format_version: u32,
    seed: u64,
    config: &'a NetworkConfig,
    cost: CostReport,
}

#[derive(Serialize)]
struct NormalizationExport<'a> {
    in_mean: &'a [f32],
    in_std: &'a [f32],
    out_mean: &'a [f32],
    out_std: &'a [f32],
}

pub fn run(checkpoint: &Path, out_dir: &Path) -> Result<()> {
    let ck = Checkpoint::<f32>::load(checkpoint)?;
    let state = ck.masks.as_ref().map(prune_state_from_masks);
    let cost = cost_report(&ck.net, state.as_ref());

    let mut stats = String::from("tensor,rows,cols,params,nonzero,masked\n");
    for (key, tensor) in ck.net.params.tensors() {
        let dims = match key {
            TensorKey::Gating { layer, .. } => ck.net.config.gating_dims()[layer as usize],
            TensorKey::Expert { layer, .. } => ck.net.config.expert_dims()[layer as usize],
        };
        // weights are matrices; biases export as n x 1 columns
        let (rows, cols) = if key.kind() == TensorKind::Weight {
            dims
        } else {
            (tensor.len(), 1)
        };
        let nonzero = tensor.iter().filter(|v| **v != 0.0).count();
        let masked = state
            .as_ref()
            .and_then(|s| s.masks.get(key))
            .map_or(0, |m| m.masked_count());
        let _ = writeln!(stats, "{key},{rows},{cols},{},{nonzero},{masked}", tensor.len());
    }

    let out = prepare_out_dir(out_dir)?;
    write_json(
        &out.join("summary.json"),
        &ExportSummary {
            format_version: CHECKPOINT_VERSION,
            seed: ck.seed,
            config: &ck.net.config,
            cost: cost.clone(),
        },
    )?;
    write_json(
        &out.join("normalization.json"),
        &NormalizationExport {
            in_mean: &ck.net.norm.in_mean,
            in_std: &ck.net.norm.in_std,
            out_mean: &ck.net.norm.out_mean,
            out_std: &ck.net.norm.out_std,
        },
    )?;
    fs::write(out.join("tensor_stats.csv"), stats)?;
    println!(
        "exported config, normalization, and {} tensor rows ({} of {} params nonzero) -> {}",
        6 + 6 * ck.net.config.n_experts,
        cost.nonzero_params,
        cost.total_params,
        out.display()
    );
    Ok(())
}
