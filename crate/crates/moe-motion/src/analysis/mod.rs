//! Expert-level introspection: single-expert ablation rollouts and
//! gating-activation traces with cross-model comparison.

mod ablate;
mod trace;

pub use ablate::{ablate_expert, ablation_study, AblatedNetwork, AblationResult, RolloutMetrics};
pub use trace::{compare_traces, entropy_nats, trace_activations, ActivationTrace, TraceComparison};
