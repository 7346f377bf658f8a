//! Equal-parameter comparison: small dense networks vs the full topology
//! pruned down to the same number of stored parameters.
//!
//! The sparse side never changes shape — it keeps the full expert bank and
//! hidden width and relies on masks to hit the parameter budget — so any
//! quality gap is attributable to where the capacity lives, not to how much
//! of it there is.

use serde::{Deserialize, Serialize};

use crate::data::{rollout, MotionDataset, CONTROL_COLS};
use crate::error::{Error, Result};
use crate::eval::cost::cost_report;
use crate::eval::skating::{foot_skate, DEFAULT_SKATE_THRESHOLD_CM};
use crate::network::{MoeNetwork, NetworkConfig, ParamSet, TensorKey, TensorKind};
use crate::numeric::{DenseMatrix, Scalar};
use crate::prune::{PruneConfig, PruneState};
use crate::train::{train, TrainConfig};

/// Allowed relative gap between a pair's stored-parameter counts.
pub const PARAM_MATCH_TOLERANCE: f64 = 0.02;

/// One dense-vs-sparse matchup: a dense baseline at `dense_h_size` against
/// the base topology pruned to `target_sparsity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonPair {
    pub dense_h_size: usize,
    pub target_sparsity: f64,
}

impl ComparisonPair {
    /// Pairs `dense_h_size` with the sparsity that equalizes stored
    /// parameters against `base` under `coverage`.
    pub fn matched(base: &NetworkConfig, coverage: &PruneConfig, dense_h_size: usize) -> Result<Self> {
        let s = matched_sparsity(base, coverage, dense_h_size);
        if !(0.0..1.0).contains(&s) {
            return Err(Error::Config(format!(
                "no attainable sparsity matches dense h_size {dense_h_size} against base h_size {} \
                 (would need {s:.4})",
                base.h_size
            )));
        }
        Ok(ComparisonPair {
            dense_h_size,
            target_sparsity: s,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonProtocol {
    /// Topology of the sparse side; dense baselines reuse it with a smaller
    /// hidden layer.
    pub base: NetworkConfig,
    pub pairs: Vec<ComparisonPair>,
    /// Shared budget: every run trains with these settings (seed overridden
    /// per run).
    pub train: TrainConfig,
    /// Pruning template for the sparse runs; `target_sparsity` is overridden
    /// by each pair.
    pub prune: PruneConfig,
    pub seeds: Vec<u64>,
    /// Length of the synthetic rollout scored for skating (capped at the
    /// evaluation clip's length).
    #[serde(default = "default_rollout_frames")]
    pub rollout_frames: usize,
    #[serde(default = "default_threshold")]
    pub skate_threshold_cm: f64,
}

fn default_rollout_frames() -> usize {
    240
}

fn default_threshold() -> f64 {
    DEFAULT_SKATE_THRESHOLD_CM
}

impl ComparisonProtocol {
    /// Rejects a malformed protocol before any training starts; in
    /// particular every pair's stored-parameter counts must match within
    /// [`PARAM_MATCH_TOLERANCE`].
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.train.validate()?;
        self.prune.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("comparison needs at least one seed".into()));
        }
        if self.train.epochs == 0 {
            return Err(Error::Config(
                "comparison needs at least one training epoch to report validation error".into(),
            ));
        }
        if self.rollout_frames == 0 {
            return Err(Error::Config("rollout_frames must be positive".into()));
        }
        if !(self.skate_threshold_cm > 0.0) {
            return Err(Error::Config(format!(
                "skate_threshold_cm must be positive, got {}",
                self.skate_threshold_cm
            )));
        }
        for pair in &self.pairs {
            if !(0.0..1.0).contains(&pair.target_sparsity) {
                return Err(Error::Config(format!(
                    "pair (h={}): target_sparsity {} out of [0, 1)",
                    pair.dense_h_size, pair.target_sparsity
                )));
            }
            let dense = self.dense_config(pair);
            dense.validate()?;
            let dense_total = total_param_count(&dense);
            let sparse_nonzero = sparse_nonzero_count(&self.base, &self.prune, pair.target_sparsity);
            let rel = (sparse_nonzero as f64 - dense_total as f64).abs() / dense_total as f64;
            if rel > PARAM_MATCH_TOLERANCE {
                return Err(Error::Config(format!(
                    "pair (h={}, s={:.4}): dense stores {} parameters but the pruned model keeps \
                     {} ({:.1}% apart, limit {}%)",
                    pair.dense_h_size,
                    pair.target_sparsity,
                    dense_total,
                    sparse_nonzero,
                    rel * 100.0,
                    PARAM_MATCH_TOLERANCE * 100.0
                )));
            }
        }
        Ok(())
    }

    fn dense_config(&self, pair: &ComparisonPair) -> NetworkConfig {
        NetworkConfig {
            h_size: pair.dense_h_size,
            ..self.base.clone()
        }
    }
}

/// One trained model's line in the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    /// "dense" or "sparse".
    pub model: String,
    pub seed: u64,
    pub h_size: usize,
    pub target_sparsity: f64,
    pub nonzero_params: usize,
    pub val_mse: f64,
    /// Mean skating of the synthetic rollout; absent when the rollout
    /// diverged.
    pub skating: Option<f64>,
}

fn tensor_len(config: &NetworkConfig, key: TensorKey) -> usize {
    let (rows, cols) = match key {
        TensorKey::Gating { layer, .. } => config.gating_dims()[layer as usize],
        TensorKey::Expert { layer, .. } => config.expert_dims()[layer as usize],
    };
    match key.kind() {
        TensorKind::Weight => rows * cols,
        TensorKind::Bias => rows,
    }
}

/// Parameter count of the architecture, without materializing it.
pub fn total_param_count(config: &NetworkConfig) -> usize {
    ParamSet::<f32>::tensor_keys(config.n_experts)
        .into_iter()
        .map(|k| tensor_len(config, k))
        .sum()
}

/// Parameters the pruning coverage ranks.
pub fn prunable_param_count(config: &NetworkConfig, coverage: &PruneConfig) -> usize {
    ParamSet::<f32>::tensor_keys(config.n_experts)
        .into_iter()
        .filter(|k| coverage.covers(*k))
        .map(|k| tensor_len(config, k))
        .sum()
}

fn sparse_nonzero_count(base: &NetworkConfig, coverage: &PruneConfig, sparsity: f64) -> usize {
    let prunable = prunable_param_count(base, coverage) as f64;
    total_param_count(base) - (sparsity * prunable).floor() as usize
}

/// Sparsity that leaves the base topology with as many stored parameters as
/// a dense model of hidden width `dense_h_size`.
pub fn matched_sparsity(base: &NetworkConfig, coverage: &PruneConfig, dense_h_size: usize) -> f64 {
    let dense = NetworkConfig {
        h_size: dense_h_size,
        ..base.clone()
    };
    let gap = total_param_count(base) as f64 - total_param_count(&dense) as f64;
    gap / prunable_param_count(base, coverage) as f64
}

/// Trains every pair's dense baseline and matched sparse model (one run per
/// seed each) under the protocol's shared budget and scores both on held-out
/// MSE and rollout skating. Rows arrive dense-then-sparse per (pair, seed);
/// `on_row` fires as each finishes.
pub fn compare_equal_params<T: Scalar>(
    protocol: &ComparisonProtocol,
    data: &MotionDataset<T>,
    mut on_row: Option<&mut dyn FnMut(&ComparisonRow)>,
) -> Result<Vec<ComparisonRow>> {
    protocol.validate()?;
    let eval_clip = rollout_inputs(protocol, data)?;

    let mut rows = Vec::with_capacity(2 * protocol.pairs.len() * protocol.seeds.len());
    for pair in &protocol.pairs {
        for &seed in &protocol.seeds {
            let dense = run_model("dense", protocol.dense_config(pair), None, seed, protocol, data, &eval_clip)?;
            if let Some(hook) = on_row.as_deref_mut() {
                hook(&dense);
            }
            rows.push(dense);

            let prune_cfg = PruneConfig {
                target_sparsity: pair.target_sparsity,
                ..protocol.prune.clone()
            };
            let sparse = run_model("sparse", protocol.base.clone(), Some(prune_cfg), seed, protocol, data, &eval_clip)?;
            if let Some(hook) = on_row.as_deref_mut() {
                hook(&sparse);
            }
            rows.push(sparse);
        }
    }
    Ok(rows)
}

/// Seed frame and per-step controls for the scoring rollout, taken from the
/// clip holding the first validation pair.
struct EvalClip<T> {
    seed_frame: Vec<T>,
    controls: DenseMatrix<T>,
    n_steps: usize,
}

fn rollout_inputs<T: Scalar>(protocol: &ComparisonProtocol, data: &MotionDataset<T>) -> Result<EvalClip<T>> {
    if data.clips.is_empty() {
        return Err(Error::Config(
            "comparison rollouts need a clip-backed dataset; build it from motion clips".into(),
        ));
    }
    let first_val = *data.val_rows.first().expect("dataset guarantees a validation split");
    let mut clip = &data.clips[0];
    let mut start = 0usize;
    for c in &data.clips {
        let pairs = c.n_frames() - 1;
        if first_val < start + pairs {
            clip = c;
            break;
        }
        start += pairs;
    }

    let n_steps = protocol.rollout_frames.min(clip.n_frames() - 1);
    let ctrl = clip.schema.control_columns();
    let mut controls = DenseMatrix::zeros(n_steps, CONTROL_COLS);
    for i in 0..n_steps {
        controls.row_mut(i).copy_from_slice(&clip.frame(i + 1)[ctrl.clone()]);
    }
    Ok(EvalClip {
        seed_frame: clip.frame(0).to_vec(),
        controls,
        n_steps,
    })
}

fn run_model<T: Scalar>(
    label: &str,
    config: NetworkConfig,
    prune_cfg: Option<PruneConfig>,
    seed: u64,
    protocol: &ComparisonProtocol,
    data: &MotionDataset<T>,
    eval_clip: &EvalClip<T>,
) -> Result<ComparisonRow> {
    let h_size = config.h_size;
    let target_sparsity = prune_cfg.as_ref().map_or(0.0, |c| c.target_sparsity);
    let mut net = MoeNetwork::<T>::init(config, seed)?;
    net.norm = data.norm.clone();
    let mut prune_state = prune_cfg.map(|c| PruneState::new(&net.params, c)).transpose()?;

    let train_cfg = TrainConfig {
        seed,
        ..protocol.train.clone()
    };
    let report = train(&mut net, data, &train_cfg, prune_state.as_mut(), None)?;
    let val_mse = report.final_val_loss().expect("validated: at least one epoch");

    let schema = &data.clips[0].schema;
    let skating = match rollout(&net, schema, &eval_clip.seed_frame, &eval_clip.controls, eval_clip.n_steps) {
        Ok(ro) => Some(foot_skate(&ro.clip, protocol.skate_threshold_cm)?.mean),
        Err(Error::Numeric(_)) => None,
        Err(e) => return Err(e),
    };

    Ok(ComparisonRow {
        model: label.to_string(),
        seed,
        h_size,
        target_sparsity,
        nonzero_params: cost_report(&net, prune_state.as_ref()).nonzero_params,
        val_mse,
        skating,
    })
}

/// Comparison table as CSV; a diverged rollout leaves the skating field
/// empty.
pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("model,seed,h_size,target_sparsity,nonzero_params,val_mse,skating\n");
    for r in rows {
        let skating = r.skating.map_or(String::new(), |s| format!("{s}"));
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.model, r.seed, r.h_size, r.target_sparsity, r.nonzero_params, r.val_mse, skating
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_gait, standard_corpus, SkeletonSchema};
    use crate::prune::compute_masks;

    fn base_config() -> NetworkConfig {
        SkeletonSchema::compact().network_config(16, 2, 4)
    }

    #[test]
    fn param_counts_match_a_materialized_network() {
        let cfg = base_config();
        let net = MoeNetwork::<f32>::init(cfg.clone(), 1).unwrap();
        let enumerated: usize = ParamSet::<f32>::tensor_keys(cfg.n_experts)
            .into_iter()
            .map(|k| net.params.tensor(k).len())
            .sum();
        assert_eq!(total_param_count(&cfg), enumerated);

        let coverage = PruneConfig::new(0.5);
        let covered: usize = coverage
            .prunable_keys(cfg.n_experts)
            .into_iter()
            .map(|k| net.params.tensor(k).len())
            .sum();
        assert_eq!(prunable_param_count(&cfg, &coverage), covered);
    }

    #[test]
    fn matched_pairs_equalize_stored_parameters() {
        let base = base_config();
        let coverage = PruneConfig::new(0.0);
        let pair = ComparisonPair::matched(&base, &coverage, 8).unwrap();
        assert!(pair.target_sparsity > 0.0 && pair.target_sparsity < 1.0);

        // counting oracle: apply the matched mask and census the survivors
        let net = MoeNetwork::<f32>::init(base.clone(), 3).unwrap();
        let masks = compute_masks(&net.params, &coverage, pair.target_sparsity).unwrap();
        let dense_cfg = NetworkConfig { h_size: 8, ..base.clone() };
        let kept = total_param_count(&base) - masks.masked_count();
        let dense_total = total_param_count(&dense_cfg);
        let rel = (kept as f64 - dense_total as f64).abs() / dense_total as f64;
        assert!(rel <= PARAM_MATCH_TOLERANCE, "kept {kept} dense {dense_total}");

        // a dense model larger than the base has no matching sparsity
        assert!(ComparisonPair::matched(&base, &coverage, base.h_size * 2).is_err());
    }

    fn tiny_protocol(pairs: Vec<ComparisonPair>) -> ComparisonProtocol {
        ComparisonProtocol {
            base: base_config(),
            pairs,
            train: TrainConfig {
                epochs: 2,
                batch_size: 16,
                seed: 0,
                ..TrainConfig::default()
            },
            prune: PruneConfig::new(0.0),
            seeds: vec![7],
            rollout_frames: 20,
            skate_threshold_cm: 2.5,
        }
    }

    fn tiny_dataset() -> MotionDataset<f32> {
        let schema = std::sync::Arc::new(SkeletonSchema::compact());
        let clips = standard_corpus(2, 1.0, 5)
            .iter()
            .map(|spec| generate_gait(spec, &schema))
            .collect::<crate::error::Result<Vec<_>>>()
            .unwrap();
        MotionDataset::build(clips).unwrap()
    }

    #[test]
    fn mismatched_pair_is_rejected_before_training() {
        let protocol = tiny_protocol(vec![ComparisonPair {
            dense_h_size: 8,
            target_sparsity: 0.05,
        }]);
        let err = compare_equal_params(&protocol, &tiny_dataset(), None).unwrap_err();
        assert!(err.to_string().contains('%'), "{err}");
    }

    #[test]
    fn empty_pair_list_gives_empty_table() {
        let rows = compare_equal_params(&tiny_protocol(Vec::new()), &tiny_dataset(), None).unwrap();
        assert!(rows.is_empty());
    }

    #[test]
    fn matrix_backed_dataset_is_rejected() {
        let data = tiny_dataset();
        let flat = MotionDataset::from_matrices(
            data.xs.clone(),
            data.ys.clone(),
            data.train_rows.clone(),
            data.val_rows.clone(),
        )
        .unwrap();
        let base = base_config();
        let pair = ComparisonPair::matched(&base, &PruneConfig::new(0.0), 8).unwrap();
        let err = compare_equal_params(&tiny_protocol(vec![pair]), &flat, None).unwrap_err();
        assert!(err.to_string().contains("clip"), "{err}");
    }

    #[test]
    fn desk_scale_run_produces_a_full_table() {
        let base = base_config();
        let coverage = PruneConfig::new(0.0);
        let pair = ComparisonPair::matched(&base, &coverage, 8).unwrap();
        let protocol = tiny_protocol(vec![pair]);
        let data = tiny_dataset();

        let mut seen = 0usize;
        let mut hook = |_: &ComparisonRow| seen += 1;
        let rows = compare_equal_params(&protocol, &data, Some(&mut hook)).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(seen, 2);

        let (dense, sparse) = (&rows[0], &rows[1]);
        assert_eq!(dense.model, "dense");
        assert_eq!(dense.h_size, 8);
        assert_eq!(dense.target_sparsity, 0.0);
        assert_eq!(sparse.model, "sparse");
        // topology preserved on the sparse side
        assert_eq!(sparse.h_size, base.h_size);
        assert!(sparse.target_sparsity > 0.0);
        let rel = (sparse.nonzero_params as f64 - dense.nonzero_params as f64).abs()
            / dense.nonzero_params as f64;
        assert!(rel <= PARAM_MATCH_TOLERANCE);
        for row in &rows {
            assert!(row.val_mse.is_finite());
            if let Some(s) = row.skating {
                assert!(s.is_finite() && s >= 0.0);
            }
        }

        let csv = comparison_csv(&rows);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("model,seed,"));
    }
}
