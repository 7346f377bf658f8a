use std::path::Path;

use serde::Serialize;

use moe_motion::checkpoint::Checkpoint;
use moe_motion::data::MotionDataset;
use moe_motion::network::MoeNetwork;
use moe_motion::prune::{MaskEvent, PruneConfig, PruneState};
use moe_motion::train::train;
use moe_motion::{Error, Result};

use crate::config::RunConfig;
use crate::dataset_io::{load_dataset, prepare_out_dir, write_json};

#[derive(Serialize)]
struct TensorSparsity {
    tensor: String,
    params: usize,
    masked: usize,
    sparsity: f64,
}

/// The prune-report document: configuration, final global sparsity,
/// per-tensor split, and the mask-event history.
#[derive(Serialize)]
struct PruneReport<'a> {
    config: &'a PruneConfig,
    achieved_sparsity: f64,
    per_tensor: Vec<TensorSparsity>,
    events: &'a [MaskEvent],
}

pub fn run(
    config_path: &Path,
    data_dir: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
    resume: Option<&Path>,
) -> Result<()> {
    let mut run = RunConfig::load(config_path)?;
    if let Some(seed) = seed_override {
        run.seed = seed;
    }
    let ds = load_dataset(data_dir)?;
    let dataset = MotionDataset::build(ds.clips)?;
    let net_config = run.network_config(&ds.schema);

    let (mut net, resumed_masks) = match resume {
        Some(path) => {
            let ck = Checkpoint::<f32>::load(path)?;
            if ck.net.config != net_config {
                return Err(Error::Config(format!(
                    "checkpoint topology ({} params) differs from the config ({} params); \
                     resume needs matching network sections",
                    ck.net.config.param_count(),
                    net_config.param_count()
                )));
            }
            (ck.net, ck.masks)
        }
        None => (MoeNetwork::<f32>::init(net_config, run.seed)?, None),
    };
    // the network carries the dataset statistics from here on; checkpoints
    // stay self-contained for rollout
    net.norm = dataset.norm.clone();

    let mut prune_state = match &run.prune {
        Some(prune_config) => {
            let mut state = PruneState::new(&net.params, prune_config.clone())?;
            if let Some(masks) = resumed_masks {
                let same_coverage = state.masks.entries.len() == masks.entries.len()
                    && state
                        .masks
                        .entries
                        .iter()
                        .zip(&masks.entries)
                        .all(|((a, _), (b, _))| a == b);
                if !same_coverage {
                    return Err(Error::Config(
                        "checkpoint masks cover different tensors than the prune section; \
                         adjust include_gating/include_biases to match"
                            .into(),
                    ));
                }
                state.masks = masks;
                state.masks.apply(&mut net.params);
            }
            Some(state)
        }
        None => None,
    };

    let out = prepare_out_dir(out_dir)?;
    write_json(&out.join("config.json"), &run)?;

    let mut log_epoch = |r: &moe_motion::train::EpochRecord| {
        log::info!(
            "epoch {:>4}: train {:.6} val {:.6} sparsity {:.3}",
            r.epoch,
            r.train_loss,
            r.val_loss,
            r.sparsity
        );
    };
    let report = train(
        &mut net,
        &dataset,
        &run.train_config(),
        prune_state.as_mut(),
        Some(&mut log_epoch),
    )?;

    write_json(&out.join("train_report.json"), &report)?;
    if let Some(state) = &prune_state {
        let per_tensor = state
            .masks
            .entries
            .iter()
            .map(|(key, mask)| TensorSparsity {
                tensor: key.to_string(),
                params: mask.len(),
                masked: mask.masked_count(),
                sparsity: mask.masked_count() as f64 / mask.len().max(1) as f64,
            })
            .collect();
        write_json(
            &out.join("prune_report.json"),
            &PruneReport {
                config: &state.config,
                achieved_sparsity: state.current_sparsity(),
                per_tensor,
                events: &report.mask_events,
            },
        )?;
    }

    let sparsity = prune_state.as_ref().map_or(0.0, PruneState::current_sparsity);
    let final_val = report.final_val_loss();
    Checkpoint::new(run.seed, net, prune_state.map(|s| s.masks)).save(&out.join("checkpoint.bin"))?;

    match final_val {
        Some(v) => println!(
            "trained {} epochs ({} steps): val loss {v:.6}, sparsity {sparsity:.3} -> {}",
            report.epochs.len(),
            report.total_steps,
            out.display()
        ),
        None => println!("wrote initialized checkpoint (0 epochs) -> {}", out.display()),
    }
    Ok(())
}
