//! The run configuration document: one JSON file describing data synthesis,
//! network topology, training, optional pruning, and evaluation settings.
//! Unknown keys anywhere in the document are rejected.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use moe_motion::data::SkeletonSchema;
use moe_motion::network::NetworkConfig;
use moe_motion::prune::PruneConfig;
use moe_motion::train::TrainConfig;
use moe_motion::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaKind {
    /// 10-joint quadruped, frame width 144; the desk-scale default.
    #[default]
    Compact,
    /// 33-joint quadruped, frame width 420; full-scale cost accounting.
    Dog,
}

impl SchemaKind {
    pub fn build(self) -> Arc<SkeletonSchema> {
        Arc::new(match self {
            SchemaKind::Compact => SkeletonSchema::compact(),
            SchemaKind::Dog => SkeletonSchema::dog(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default)]
    pub schema: SchemaKind,
    #[serde(default = "default_clips_per_gait")]
    pub clips_per_gait: usize,
    #[serde(default = "default_duration_s")]
    pub duration_s: f64,
}

fn default_clips_per_gait() -> usize {
    2
}

fn default_duration_s() -> f64 {
    5.0
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            schema: SchemaKind::default(),
            clips_per_gait: default_clips_per_gait(),
            duration_s: default_duration_s(),
        }
    }
}

/// Network topology knobs; input/output widths and gating columns come from
/// the schema, so they are not part of the document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(default = "default_h_size")]
    pub h_size: usize,
    #[serde(default = "default_n_experts")]
    pub n_experts: usize,
    #[serde(default = "default_g_hidden")]
    pub g_hidden: usize,
    #[serde(default = "default_dropout_retention")]
    pub dropout_retention: f64,
}

fn default_h_size() -> usize {
    512
}

fn default_n_experts() -> usize {
    8
}

fn default_g_hidden() -> usize {
    32
}

fn default_dropout_retention() -> f64 {
    0.7
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            h_size: default_h_size(),
            n_experts: default_n_experts(),
            g_hidden: default_g_hidden(),
            dropout_retention: default_dropout_retention(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Foot-contact height threshold (cm) for the skating metric.
    #[serde(default = "default_threshold_cm")]
    pub threshold_cm: f64,
    /// Frames generated per evaluation rollout (capped at clip length − 1).
    #[serde(default = "default_rollout_frames")]
    pub rollout_frames: usize,
    /// Timing repetitions per benchmark level.
    #[serde(default = "default_bench_reps")]
    pub bench_reps: usize,
    /// Sparsity levels for sweep and bench when no --sparsity flag is given.
    #[serde(default = "default_sparsities")]
    pub sparsities: Vec<f64>,
}

fn default_threshold_cm() -> f64 {
    2.5
}

fn default_rollout_frames() -> usize {
    240
}

fn default_bench_reps() -> usize {
    200
}

fn default_sparsities() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            threshold_cm: default_threshold_cm(),
            rollout_frames: default_rollout_frames(),
            bench_reps: default_bench_reps(),
            sparsities: default_sparsities(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root of every random stream in the run: data synthesis, weight
    /// initialization, shuffling, dropout.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub train: TrainConfig,
    /// Pruning is off when absent.
    #[serde(default)]
    pub prune: Option<PruneConfig>,
    #[serde(default)]
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            data: DataConfig::default(),
            network: NetworkSection::default(),
            train: TrainConfig::default(),
            prune: None,
            eval: EvalSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.clips_per_gait == 0 {
            return Err(Error::Config("data.clips_per_gait must be positive".into()));
        }
        if !(self.data.duration_s > 0.0) {
            return Err(Error::Config(format!(
                "data.duration_s must be positive, got {}",
                self.data.duration_s
            )));
        }
        self.network_config(&self.data.schema.build()).validate()?;
        self.train.validate()?;
        if let Some(prune) = &self.prune {
            prune.validate()?;
        }
        if !(self.eval.threshold_cm > 0.0) {
            return Err(Error::Config(format!(
                "eval.threshold_cm must be positive, got {}",
                self.eval.threshold_cm
            )));
        }
        if self.eval.rollout_frames == 0 {
            return Err(Error::Config("eval.rollout_frames must be positive".into()));
        }
        if let Some(&bad) = self.eval.sparsities.iter().find(|s| !(0.0..1.0).contains(*s)) {
            return Err(Error::Config(format!(
                "eval.sparsities entries must be in [0, 1), got {bad}"
            )));
        }
        Ok(())
    }

    /// Instantiates the network topology against a schema.
    pub fn network_config(&self, schema: &Arc<SkeletonSchema>) -> NetworkConfig {
        let mut config =
            schema.network_config(self.network.h_size, self.network.n_experts, self.network.g_hidden);
        config.dropout_retention = self.network.dropout_retention;
        config
    }

    /// The training section with the run seed folded in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }
}

/// `--sparsity` parser: either a comma list ("0.1,0.5,0.9") or an inclusive
/// decile range ("0.1..0.9", step 0.1).
pub fn parse_sparsity_list(text: &str) -> Result<Vec<f64>> {
    let bad = |msg: String| Error::Config(format!("--sparsity {text:?}: {msg}"));
    let parse = |tok: &str| -> Result<f64> {
        tok.trim()
            .parse::<f64>()
            .map_err(|_| bad(format!("{tok:?} is not a number")))
    };
    let values = if let Some((a, b)) = text.split_once("..") {
        let (a, b) = (parse(a)?, parse(b)?);
        if b < a {
            return Err(bad("range end below start".into()));
        }
        let n = ((b - a) / 0.1).round() as usize;
        (0..=n).map(|i| ((a + i as f64 * 0.1) * 1e9).round() / 1e9).collect()
    } else {
        text.split(',').map(parse).collect::<Result<Vec<f64>>>()?
    };
    if values.is_empty() {
        return Err(bad("empty list".into()));
    }
    if let Some(&v) = values.iter().find(|v| !(0.0..1.0).contains(*v)) {
        return Err(bad(format!("sparsity {v} outside [0, 1)")));
    }
    Ok(values)
}
