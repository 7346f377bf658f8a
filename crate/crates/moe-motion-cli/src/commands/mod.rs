//! One module per subcommand plus the plumbing they share.

pub mod ablate;
pub mod bench;
pub mod eval;
pub mod export;
pub mod gen_data;
pub mod sweep;
pub mod trace;
pub mod train;

use std::path::Path;
use std::sync::Arc;

use moe_motion::data::{generate_gait, rollout, standard_corpus, MotionClip, SkeletonSchema};
use moe_motion::eval::foot_skate;
use moe_motion::network::{MoeNetwork, TensorKind};
use moe_motion::numeric::DenseMatrix;
use moe_motion::prune::{MaskSet, PruneConfig, PruneState};
use moe_motion::{Error, Result};

use crate::config::{EvalSection, RunConfig};
use crate::dataset_io::load_dataset;

/// Clips and schema for the checkpoint-driven commands, from a dataset
/// directory when given, otherwise synthesized from a run config.
pub struct EvalInputs {
    pub schema: Arc<SkeletonSchema>,
    /// (gait label, clip) in corpus order.
    pub labeled: Vec<(String, MotionClip<f32>)>,
    pub seed: u64,
    /// Evaluation settings from the config, defaults when only --data given.
    pub eval: EvalSection,
}

pub fn resolve_clips(
    data: Option<&Path>,
    config: Option<&Path>,
    seed_override: Option<u64>,
) -> Result<EvalInputs> {
    let eval = match config {
        Some(path) => RunConfig::load(path)?.eval,
        None => EvalSection::default(),
    };
    if let Some(dir) = data {
        let ds = load_dataset(dir)?;
        return Ok(EvalInputs {
            schema: ds.schema.clone(),
            labeled: ds.labeled_clips(),
            seed: ds.manifest.seed,
            eval,
        });
    }
    let Some(path) = config else {
        return Err(Error::Config(
            "provide --data or --config to supply evaluation clips".into(),
        ));
    };
    let mut run = RunConfig::load(path)?;
    if let Some(seed) = seed_override {
        run.seed = seed;
    }
    let schema = run.data.schema.build();
    let labeled = standard_corpus(run.data.clips_per_gait, run.data.duration_s, run.seed)
        .iter()
        .map(|spec| Ok((spec.gait.name().to_string(), generate_gait::<f32>(spec, &schema)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalInputs { schema, labeled, seed: run.seed, eval: run.eval })
}

/// Rollout driven by a reference clip: frame 0 seeds the network, the clip's
/// own control columns steer, capped at the clip length.
pub fn rollout_inputs(clip: &MotionClip<f32>, max_frames: usize) -> (Vec<f32>, DenseMatrix<f32>, usize) {
    let n_steps = max_frames.min(clip.n_frames() - 1);
    let cols = clip.schema.control_columns();
    let mut controls = DenseMatrix::zeros(n_steps, cols.len());
    for t in 0..n_steps {
        controls.row_mut(t).copy_from_slice(&clip.frame(t + 1)[cols.clone()]);
    }
    (clip.frame(0).to_vec(), controls, n_steps)
}

/// Mean rollout skating over a labeled clip set; any divergence aborts.
pub fn mean_rollout_skating(
    net: &MoeNetwork<f32>,
    schema: &Arc<SkeletonSchema>,
    labeled: &[(String, MotionClip<f32>)],
    max_frames: usize,
    threshold_cm: f64,
) -> Result<f64> {
    let mut sum = 0.0;
    for (_, clip) in labeled {
        let (seed_frame, controls, n_steps) = rollout_inputs(clip, max_frames);
        let rolled = rollout(net, schema, &seed_frame, &controls, n_steps)?;
        sum += foot_skate(&rolled.clip, threshold_cm)?.mean;
    }
    Ok(sum / labeled.len() as f64)
}

/// Rebuilds enough pruning state from checkpoint masks for cost accounting;
/// the masks' own key set tells which tensors pruning covered.
pub fn prune_state_from_masks(masks: &MaskSet) -> PruneState {
    let mut config = PruneConfig::new(0.0);
    config.include_biases = masks.entries.iter().any(|(k, _)| k.kind() == TensorKind::Bias);
    config.include_gating = masks.entries.iter().any(|(k, _)| k.is_gating());
    PruneState {
        config,
        masks: masks.clone(),
        events: Vec::new(),
    }
}

/// Networks only load onto schemas with matching frame widths.
pub fn check_schema_match(net: &MoeNetwork<f32>, schema: &SkeletonSchema) -> Result<()> {
    if net.config.d_in != schema.d_in() || net.config.d_out != schema.d_out() {
        return Err(Error::shape(
            format!("checkpoint against schema '{}'", schema.name),
            format!("d_in {}, d_out {}", schema.d_in(), schema.d_out()),
            format!("d_in {}, d_out {}", net.config.d_in, net.config.d_out),
        ));
    }
    Ok(())
}
