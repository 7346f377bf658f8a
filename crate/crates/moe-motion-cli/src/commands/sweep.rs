use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use moe_motion::checkpoint::Checkpoint;
use moe_motion::data::{MotionClip, MotionDataset, SkeletonSchema};
use moe_motion::eval::{cost_report, sweep_csv, CostReport};
use moe_motion::network::MoeNetwork;
use moe_motion::prune::{PruneConfig, PruneState};
use moe_motion::train::train;
use moe_motion::Result;

use super::mean_rollout_skating;
use crate::config::{parse_sparsity_list, RunConfig};
use crate::dataset_io::{load_dataset, prepare_out_dir, write_json};

struct SweepRow {
    sparsity: f64,
    val_mse: Option<f64>,
    skating: Option<f64>,
    nonzero: Option<usize>,
    size_mb: Option<f64>,
    mflops: Option<f64>,
    error: Option<String>,
}

pub fn run(
    config_path: &Path,
    data_dir: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
    sparsity_flag: Option<&str>,
) -> Result<()> {
    let mut run = RunConfig::load(config_path)?;
    if let Some(seed) = seed_override {
        run.seed = seed;
    }
    let sparsities = match sparsity_flag {
        Some(text) => parse_sparsity_list(text)?,
        None => run.eval.sparsities.clone(),
    };
    let ds = load_dataset(data_dir)?;
    let labeled = ds.labeled_clips();
    let dataset = MotionDataset::build(ds.clips)?;

    let out = prepare_out_dir(out_dir)?;
    write_json(&out.join("config.json"), &run)?;
    fs::create_dir_all(out.join("checkpoints"))?;

    // one model per level, all from the shared run seed; a failing member
    // becomes an error row and the sweep keeps going
    let mut rows = Vec::with_capacity(sparsities.len());
    let mut costs: Vec<CostReport> = Vec::new();
    for &sparsity in &sparsities {
        log::info!("sweep member target sparsity {sparsity:.2}");
        match member(&run, &ds.schema, &labeled, &dataset, sparsity, &out) {
            Ok((row, cost)) => {
                rows.push(row);
                costs.push(cost);
            }
            Err(e) => {
                log::warn!("member at sparsity {sparsity:.2} failed: {e}");
                rows.push(SweepRow {
                    sparsity,
                    val_mse: None,
                    skating: None,
                    nonzero: None,
                    size_mb: None,
                    mflops: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }

    fs::write(out.join("sweep.csv"), render_csv(&rows))?;
    fs::write(out.join("cost_sweep.csv"), sweep_csv(&costs))?;
    let failures = rows.iter().filter(|r| r.error.is_some()).count();
    println!(
        "swept {} sparsity levels ({} failed) -> {}",
        rows.len(),
        failures,
        out.display()
    );
    Ok(())
}

fn member(
    run: &RunConfig,
    schema: &Arc<SkeletonSchema>,
    labeled: &[(String, MotionClip<f32>)],
    dataset: &MotionDataset<f32>,
    sparsity: f64,
    out: &Path,
) -> Result<(SweepRow, CostReport)> {
    let prune_config = match &run.prune {
        Some(template) => PruneConfig {
            target_sparsity: sparsity,
            ..template.clone()
        },
        None => PruneConfig::new(sparsity),
    };
    let mut net = MoeNetwork::<f32>::init(run.network_config(schema), run.seed)?;
    net.norm = dataset.norm.clone();
    let mut state = PruneState::new(&net.params, prune_config)?;
    let report = train(&mut net, dataset, &run.train_config(), Some(&mut state), None)?;

    let skating =
        mean_rollout_skating(&net, schema, labeled, run.eval.rollout_frames, run.eval.threshold_cm)?;
    let cost = cost_report(&net, Some(&state));
    let row = SweepRow {
        sparsity,
        val_mse: report.final_val_loss(),
        skating: Some(skating),
        nonzero: Some(cost.nonzero_params),
        size_mb: Some(cost.size_megabits),
        mflops: Some(cost.mflops),
        error: None,
    };
    let file = format!("checkpoints/s{:03}.bin", (sparsity * 100.0).round() as u32);
    Checkpoint::new(run.seed, net, Some(state.masks)).save(&out.join(file))?;
    Ok((row, cost))
}

fn render_csv(rows: &[SweepRow]) -> String {
    let mut text = String::from("sparsity,val_mse,skating,nonzero_params,size_Mb,MFLOPs,error\n");
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{}",
            r.sparsity,
            opt(r.val_mse),
            opt(r.skating),
            r.nonzero.map(|v| v.to_string()).unwrap_or_default(),
            opt(r.size_mb),
            opt(r.mflops),
            r.error.as_deref().map(|e| e.replace([',', '\n'], ";")).unwrap_or_default(),
        );
    }
    text
}
