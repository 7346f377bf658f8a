//! Quantitative evaluation: the foot-skating metric, size/FLOPs accounting
//! under masks, the dense-vs-CSR inference micro-benchmark, and the
//! equal-parameter dense-vs-sparse training comparison.

mod bench;
mod compare;
mod cost;
mod skating;

pub use bench::{bench_inference, BenchReport, LayerBench, SparsityBench};
pub use compare::{
    compare_equal_params, comparison_csv, matched_sparsity, prunable_param_count,
    total_param_count, ComparisonPair, ComparisonProtocol, ComparisonRow, PARAM_MATCH_TOLERANCE,
};
pub use cost::{cost_report, sweep_csv, CostReport, BITS_PER_PARAM};
pub use skating::{foot_skate, SkatingReport, DEFAULT_SKATE_THRESHOLD_CM};
