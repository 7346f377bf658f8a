//! Dense vs CSR matrix-vector micro-benchmark over the network's weight
//! tensors at a sweep of sparsities.
//!
//! Per layer and sparsity the masked dense matvec and its CSR counterpart
//! must agree to 1e-5 per element before either path is timed; a mismatch
//! aborts the whole benchmark. Timing runs inline on the calling thread
//! against the monotonic clock, batching calls so every sample spans many
//! clock ticks (reported times are therefore always positive).

use std::hint::black_box;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{MoeNetwork, TensorKind, TensorKey};
use crate::numeric::{CsrMatrix, DenseMatrix, Rng, Scalar};
use crate::prune::{compute_masks, PruneConfig};

const MIN_REPS: usize = 100;
const WARMUP_CALLS: usize = 5;
/// Smallest span one timed sample may cover; the batch size doubles until a
/// sample reaches it.
const MIN_SAMPLE: Duration = Duration::from_micros(2);
const INPUT_STREAM: u64 = 0xBE7C;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerBench {
    pub tensor: String,
    pub rows: usize,
    pub cols: usize,
    pub nnz: usize,
    /// Median wall time of one dense matvec, nanoseconds.
    pub dense_ns: f64,
    /// Median wall time of one CSR matvec, nanoseconds.
    pub csr_ns: f64,
    /// dense_ns / csr_ns; above 1 means CSR is faster.
    pub speedup: f64,
}

/// All layers measured at one sparsity level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityBench {
    pub sparsity: f64,
    pub layers: Vec<LayerBench>,
    pub dense_total_ns: f64,
    pub csr_total_ns: f64,
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub reps: usize,
    /// Smallest positive interval the clock resolved while calibrating.
    pub timer_resolution_ns: f64,
    pub runs: Vec<SparsityBench>,
}

/// Times every weight tensor's dense and CSR matvec at each sparsity in
/// `sparsities` (masks recomputed per level by magnitude; `reps` median
/// samples per path). Speedups are measurements, not assertions: at low
/// sparsity CSR's index indirection usually loses to the dense loop.
pub fn bench_inference<T: Scalar>(
    net: &MoeNetwork<T>,
    sparsities: &[f64],
    reps: usize,
) -> Result<BenchReport> {
    if reps < MIN_REPS {
        return Err(Error::Config(format!(
            "benchmark needs at least {MIN_REPS} repetitions, got {reps}"
        )));
    }
    for &s in sparsities {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Config(format!("benchmark sparsity must be in [0, 1], got {s}")));
        }
    }

    let mut rng = Rng::new(INPUT_STREAM);
    let mut runs = Vec::with_capacity(sparsities.len());
    for &sparsity in sparsities {
        let mut params = net.params.clone();
        let masks = compute_masks(&params, &PruneConfig::new(0.0), sparsity)?;
        masks.apply(&mut params);

        let mut layers = Vec::new();
        for (key, w) in weight_tensors(&params) {
            let mut x = vec![T::zero(); w.cols()];
            rng.fill_uniform(&mut x, -1.0, 1.0);
            let csr = CsrMatrix::from_dense(w, T::zero())?;

            let mut dense_out = vec![T::zero(); w.rows()];
            let mut csr_out = vec![T::zero(); w.rows()];
            w.matvec(&x, &mut dense_out);
            csr.matvec(&x, &mut csr_out);
            check_agreement(&key.to_string(), sparsity, &dense_out, &csr_out)?;

            let dense_ns = time_median(reps, || {
                w.matvec(black_box(&x), black_box(&mut dense_out));
            });
            let csr_ns = time_median(reps, || {
                csr.matvec(black_box(&x), black_box(&mut csr_out));
            });
            layers.push(LayerBench {
                tensor: key.to_string(),
                rows: w.rows(),
                cols: w.cols(),
                nnz: csr.nnz(),
                dense_ns,
                csr_ns,
                speedup: dense_ns / csr_ns,
            });
        }

        let dense_total_ns: f64 = layers.iter().map(|l| l.dense_ns).sum();
        let csr_total_ns: f64 = layers.iter().map(|l| l.csr_ns).sum();
        runs.push(SparsityBench {
            sparsity,
            layers,
            dense_total_ns,
            csr_total_ns,
            speedup: dense_total_ns / csr_total_ns,
        });
    }

    Ok(BenchReport {
        reps,
        timer_resolution_ns: timer_resolution_ns(),
        runs,
    })
}

/// Weight matrices in canonical tensor order.
fn weight_tensors<T: Scalar>(params: &crate::network::ParamSet<T>) -> Vec<(TensorKey, &DenseMatrix<T>)> {
    let mut out = Vec::new();
    for (layer, l) in params.gating.layers.iter().enumerate() {
        out.push((
            TensorKey::Gating {
                layer: layer as u8,
                kind: TensorKind::Weight,
            },
            &l.w,
        ));
    }
    for (expert, ex) in params.experts.iter().enumerate() {
        for (layer, l) in ex.layers.iter().enumerate() {
            out.push((
                TensorKey::Expert {
                    expert: expert as u16,
                    layer: layer as u8,
                    kind: TensorKind::Weight,
                },
                &l.w,
            ));
        }
    }
    out
}

fn check_agreement<T: Scalar>(tensor: &str, sparsity: f64, dense: &[T], csr: &[T]) -> Result<()> {
    for (i, (a, b)) in dense.iter().zip(csr).enumerate() {
        let diff = (a.as_f64() - b.as_f64()).abs();
        if !(diff <= 1e-5) {
            return Err(Error::Numeric(format!(
                "benchmark aborted: dense and csr outputs of {tensor} at sparsity {sparsity} \
                 differ by {diff} at element {i}"
            )));
        }
    }
    Ok(())
}

/// Median nanoseconds per call over `reps` samples. Each sample times a
/// batch of calls sized (by doubling) to span at least [`MIN_SAMPLE`], so
/// cheap calls are still resolvable.
fn time_median<F: FnMut()>(reps: usize, mut f: F) -> f64 {
    for _ in 0..WARMUP_CALLS {
        f();
    }
    let mut inner = 1usize;
    loop {
        let t = Instant::now();
        for _ in 0..inner {
            f();
        }
        if t.elapsed() >= MIN_SAMPLE || inner >= 1 << 24 {
            break;
        }
        inner *= 2;
    }
    let mut samples: Vec<f64> = (0..reps)
        .map(|_| {
            let t = Instant::now();
            for _ in 0..inner {
                f();
            }
            t.elapsed().as_nanos() as f64 / inner as f64
        })
        .collect();
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2.0
    }
}

/// Smallest positive gap between consecutive clock readings.
fn timer_resolution_ns() -> f64 {
    let mut min_delta = f64::INFINITY;
    for _ in 0..1000 {
        let a = Instant::now();
        let mut delta = 0.0;
        for _ in 0..10_000 {
            delta = (Instant::now() - a).as_nanos() as f64;
            if delta > 0.0 {
                break;
            }
        }
        if delta > 0.0 && delta < min_delta {
            min_delta = delta;
        }
    }
    if min_delta.is_finite() {
        min_delta
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkConfig;

    fn small_net() -> MoeNetwork<f32> {
        let cfg = NetworkConfig {
            d_in: 12,
            d_out: 9,
            h_size: 10,
            n_experts: 2,
            g_hidden: 4,
            gating_indices: vec![0, 5],
            dropout_retention: 1.0,
        };
        MoeNetwork::init(cfg, 42).unwrap()
    }

    #[test]
    fn too_few_reps_rejected() {
        let net = small_net();
        assert!(bench_inference(&net, &[0.5], 99).is_err());
        assert!(bench_inference(&net, &[1.5], 100).is_err());
    }

    #[test]
    fn dense_level_stores_every_entry() {
        let net = small_net();
        let report = bench_inference(&net, &[0.0], 100).unwrap();
        assert_eq!(report.runs.len(), 1);
        let run = &report.runs[0];
        // 3 gating + 3 per expert weight tensors
        assert_eq!(run.layers.len(), 9);
        for l in &run.layers {
            assert_eq!(l.nnz, l.rows * l.cols);
            assert!(l.dense_ns > 0.0 && l.csr_ns > 0.0);
        }
        assert!(report.timer_resolution_ns > 0.0);
        assert!(run.speedup > 0.0);
    }

    #[test]
    fn fully_masked_level_is_empty_but_still_timed() {
        let net = small_net();
        let report = bench_inference(&net, &[1.0], 100).unwrap();
        let run = &report.runs[0];
        for l in &run.layers {
            assert_eq!(l.nnz, 0);
            assert!(l.dense_ns > 0.0 && l.csr_ns > 0.0);
        }
    }

    #[test]
    fn totals_sum_the_layers() {
        let net = small_net();
        let report = bench_inference(&net, &[0.3, 0.9], 100).unwrap();
        assert_eq!(report.runs.len(), 2);
        for run in &report.runs {
            let dense: f64 = run.layers.iter().map(|l| l.dense_ns).sum();
            let csr: f64 = run.layers.iter().map(|l| l.csr_ns).sum();
            assert_eq!(run.dense_total_ns, dense);
            assert_eq!(run.csr_total_ns, csr);
            assert_eq!(run.speedup, dense / csr);
        }
        // higher sparsity keeps fewer entries
        let nnz = |r: &SparsityBench| r.layers.iter().map(|l| l.nnz).sum::<usize>();
        assert!(nnz(&report.runs[1]) < nnz(&report.runs[0]));
    }

    #[test]
    fn disagreeing_outputs_abort() {
        let err = check_agreement("expert0.w0", 0.5, &[1.0f32, 2.0], &[1.0, 2.1]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("expert0.w0") && msg.contains("element 1"), "{msg}");
        assert!(check_agreement("t", 0.0, &[1.0f32], &[1.0 + 5e-6]).is_ok());
    }
}
