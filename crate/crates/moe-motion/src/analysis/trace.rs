//! Gating-activation profiling: per-frame expert weights over a motion,
//! their per-expert means, and the entropy of the mean profile.

use serde::{Deserialize, Serialize};

use crate::data::{MotionClip, Rollout};
use crate::error::{Error, Result};
use crate::network::MoeNetwork;
use crate::numeric::{DenseMatrix, Scalar};

/// How much two gate weights may disagree before the sum-to-one invariant or
/// a constant-series test trips.
const GATE_TOLERANCE: f64 = 1e-6;

/// Expert activations over one motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationTrace {
    pub gait: String,
    /// Which network produced it, e.g. "dense" or "sparse".
    pub model: String,
    /// One row per frame, one column per expert; rows sum to 1.
    pub omegas: DenseMatrix<f64>,
    pub mean_omega: Vec<f64>,
    /// Entropy (nats) of the mean activation; `ln K` for a uniform profile,
    /// 0 when one expert takes everything.
    pub entropy: f64,
}

impl ActivationTrace {
    /// Wraps a frames-by-experts activation matrix, checking every row sums
    /// to 1 within 1e-6.
    pub fn new(gait: &str, model: &str, omegas: DenseMatrix<f64>) -> Result<Self> {
        if omegas.rows() == 0 || omegas.cols() == 0 {
            return Err(Error::Config(format!(
                "activation trace '{gait}' needs at least one frame and one expert"
            )));
        }
        for r in 0..omegas.rows() {
            let sum: f64 = omegas.row(r).iter().sum();
            if (sum - 1.0).abs() > GATE_TOLERANCE {
                return Err(Error::Numeric(format!(
                    "activation trace '{gait}': frame {r} gate weights sum to {sum}"
                )));
            }
        }
        let mean_omega = column_means(&omegas);
        let entropy = entropy_nats(&mean_omega);
        Ok(ActivationTrace {
            gait: gait.to_string(),
            model: model.to_string(),
            omegas,
            mean_omega,
            entropy,
        })
    }

    /// Adopts the gating weights a rollout recorded.
    pub fn from_rollout<T: Scalar>(gait: &str, model: &str, rollout: &Rollout<T>) -> Result<Self> {
        let src = &rollout.omegas;
        let mut omegas = DenseMatrix::zeros(src.rows(), src.cols());
        for r in 0..src.rows() {
            for (dst, v) in omegas.row_mut(r).iter_mut().zip(src.row(r)) {
                *dst = v.as_f64();
            }
        }
        ActivationTrace::new(gait, model, omegas)
    }

    pub fn n_frames(&self) -> usize {
        self.omegas.rows()
    }

    pub fn n_experts(&self) -> usize {
        self.omegas.cols()
    }

    /// CSV rows `frame,omega_0..omega_{K-1},gait,model`, plottable directly
    /// as activation curves.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame");
        for k in 0..self.n_experts() {
            out.push_str(&format!(",omega_{k}"));
        }
        out.push_str(",gait,model\n");
        for r in 0..self.n_frames() {
            out.push_str(&format!("{r}"));
            for v in self.omegas.row(r) {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(",{},{}\n", self.gait, self.model));
        }
        out
    }
}

/// Evaluates the network's gate on every frame of every labeled clip
/// (normalizing with the network's stored statistics) and returns one trace
/// per clip.
pub fn trace_activations<T: Scalar>(
    net: &MoeNetwork<T>,
    clips: &[(String, MotionClip<T>)],
    model: &str,
) -> Result<Vec<ActivationTrace>> {
    let mut traces = Vec::with_capacity(clips.len());
    for (gait, clip) in clips {
        if clip.frames.cols() != net.config.d_in {
            return Err(Error::shape(
                format!("trace clip '{gait}'"),
                format!("{} columns", net.config.d_in),
                format!("{}", clip.frames.cols()),
            ));
        }
        let mut omegas = DenseMatrix::zeros(clip.n_frames(), net.config.n_experts);
        let mut normalized = vec![T::zero(); net.config.d_in];
        for t in 0..clip.n_frames() {
            net.norm.normalize_input(clip.frame(t), &mut normalized);
            let omega = net.gate(&normalized)?;
            for (dst, v) in omegas.row_mut(t).iter_mut().zip(&omega) {
                *dst = v.as_f64();
            }
        }
        traces.push(ActivationTrace::new(gait, model, omegas)?);
    }
    Ok(traces)
}

/// Similarity of two activation traces of the same gait.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceComparison {
    pub gait: String,
    pub model_a: String,
    pub model_b: String,
    /// Pearson correlation of each expert's activation series (after
    /// nearest-frame resampling to the shorter trace). Two constant series
    /// count as correlation 1 when they sit at the same level, else 0.
    pub per_expert_correlation: Vec<f64>,
    /// L1 distance between the mean-activation vectors.
    pub mean_l1_distance: f64,
    /// `b.entropy - a.entropy`; positive means `b` spreads its experts more
    /// evenly.
    pub entropy_delta: f64,
}

/// Compares two traces of the same gait; traces of different lengths are
/// nearest-frame resampled to the shorter one.
pub fn compare_traces(a: &ActivationTrace, b: &ActivationTrace) -> Result<TraceComparison> {
    if a.gait != b.gait {
        return Err(Error::Config(format!(
            "cannot compare traces of different gaits '{}' and '{}'",
            a.gait, b.gait
        )));
    }
    if a.n_experts() != b.n_experts() {
        return Err(Error::shape(
            "trace comparison",
            format!("{} experts", a.n_experts()),
            format!("{}", b.n_experts()),
        ));
    }

    let frames = a.n_frames().min(b.n_frames());
    let series = |t: &ActivationTrace, expert: usize| -> Vec<f64> {
        (0..frames).map(|i| t.omegas.get(i * t.n_frames() / frames, expert)).collect()
    };
    let per_expert_correlation = (0..a.n_experts())
        .map(|k| correlation(&series(a, k), &series(b, k)))
        .collect();

    let mean_l1_distance = a
        .mean_omega
        .iter()
        .zip(&b.mean_omega)
        .map(|(x, y)| (x - y).abs())
        .sum();

    Ok(TraceComparison {
        gait: a.gait.clone(),
        model_a: a.model.clone(),
        model_b: b.model.clone(),
        per_expert_correlation,
        mean_l1_distance,
        entropy_delta: b.entropy - a.entropy,
    })
}

fn column_means(m: &DenseMatrix<f64>) -> Vec<f64> {
    let mut means = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        for (acc, v) in means.iter_mut().zip(m.row(r)) {
            *acc += v;
        }
    }
    for v in &mut means {
        *v /= m.rows() as f64;
    }
    means
}

/// Shannon entropy in nats with the 0 ln 0 = 0 convention.
pub fn entropy_nats(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// Pearson correlation with a convention for degenerate series: two flat
/// series correlate 1 when they agree in level and 0 otherwise; a flat
/// series never correlates with a varying one.
fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    let flat_x = vx.sqrt() < GATE_TOLERANCE * n.sqrt();
    let flat_y = vy.sqrt() < GATE_TOLERANCE * n.sqrt();
    if flat_x || flat_y {
        if flat_x && flat_y && (mx - my).abs() < GATE_TOLERANCE {
            return 1.0;
        }
        return 0.0;
    }
    cov / (vx.sqrt() * vy.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{constant_controls, rollout, SkeletonSchema};
    use std::sync::Arc;

    fn compact_net(n_experts: usize, seed: u64) -> (Arc<SkeletonSchema>, MoeNetwork<f64>) {
        let schema = Arc::new(SkeletonSchema::compact());
        let net = MoeNetwork::init(schema.network_config(8, n_experts, 4), seed).unwrap();
        (schema, net)
    }

    fn ramp_clip(schema: &Arc<SkeletonSchema>, frames: usize, scale: f64) -> MotionClip<f64> {
        let mut m = DenseMatrix::zeros(frames, schema.d_full());
        for t in 0..frames {
            for (c, v) in m.row_mut(t).iter_mut().enumerate() {
                *v = scale * ((t + c) % 11) as f64 * 0.1;
            }
        }
        MotionClip::new(schema.clone(), "ramp", m).unwrap()
    }

    #[test]
    fn zeroed_gating_gives_the_uniform_profile() {
        let (schema, mut net) = compact_net(4, 1);
        for layer in &mut net.params.gating.layers {
            layer.w.fill(0.0);
            layer.b.iter_mut().for_each(|v| *v = 0.0);
        }
        let clips = vec![("walk".to_string(), ramp_clip(&schema, 6, 1.0))];
        let traces = trace_activations(&net, &clips, "dense").unwrap();
        assert_eq!(traces.len(), 1);
        let t = &traces[0];
        for r in 0..t.n_frames() {
            for v in t.omegas.row(r) {
                assert!((v - 0.25).abs() < 1e-12);
            }
        }
        assert!((t.entropy - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_expert_trace_is_constant_one_with_zero_entropy() {
        let (schema, net) = compact_net(1, 2);
        let clips = vec![("idle".to_string(), ramp_clip(&schema, 4, 1.0))];
        let t = &trace_activations(&net, &clips, "dense").unwrap()[0];
        assert!(t.omegas.as_slice().iter().all(|v| *v == 1.0));
        assert_eq!(t.entropy, 0.0);
    }

    #[test]
    fn traces_adopt_rollout_gates_verbatim() {
        let (schema, net) = compact_net(3, 3);
        let seed: Vec<f64> = (0..schema.d_full()).map(|i| (i % 3) as f64 * 0.2).collect();
        let r = rollout(&net, &schema, &seed, &constant_controls(0.5, 0.0, 7), 7).unwrap();
        let t = ActivationTrace::from_rollout("walk", "dense", &r).unwrap();
        assert_eq!(t.n_frames(), 7);
        assert_eq!(t.omegas, r.omegas);
    }

    #[test]
    fn self_comparison_is_reflexively_zero() {
        let (schema, net) = compact_net(3, 4);
        let clips = vec![("trot".to_string(), ramp_clip(&schema, 9, 1.0))];
        let t = &trace_activations(&net, &clips, "dense").unwrap()[0];
        let c = compare_traces(t, t).unwrap();
        assert!(c.per_expert_correlation.iter().all(|&r| (r - 1.0).abs() < 1e-12), "{c:?}");
        assert_eq!(c.mean_l1_distance, 0.0);
        assert_eq!(c.entropy_delta, 0.0);
    }

    #[test]
    fn uniform_comparison_exposes_the_entropy_gap() {
        let (schema, net) = compact_net(4, 5);
        let clips = vec![("walk".to_string(), ramp_clip(&schema, 8, 1.0))];
        let t = &trace_activations(&net, &clips, "dense").unwrap()[0];
        let mut uniform = DenseMatrix::zeros(8, 4);
        uniform.fill(0.25);
        let u = ActivationTrace::new("walk", "uniform", uniform).unwrap();
        let c = compare_traces(t, &u).unwrap();
        assert!((c.entropy_delta - (4.0f64.ln() - t.entropy)).abs() < 1e-12);
        // flat vs varying series: correlation defined to 0
        assert!(c.per_expert_correlation.iter().all(|&r| r.abs() <= 1.0));
    }

    #[test]
    fn mismatched_traces_are_rejected_and_lengths_resampled() {
        let (schema, net) = compact_net(3, 6);
        let long = vec![("walk".to_string(), ramp_clip(&schema, 12, 1.0))];
        let short = vec![("walk".to_string(), ramp_clip(&schema, 5, -1.0))];
        let a = &trace_activations(&net, &long, "dense").unwrap()[0];
        let b = &trace_activations(&net, &short, "sparse").unwrap()[0];
        let c = compare_traces(a, b).unwrap();
        assert_eq!(c.per_expert_correlation.len(), 3);
        assert!(c.per_expert_correlation.iter().all(|r| r.is_finite() && r.abs() <= 1.0 + 1e-12));

        let mut other = b.clone();
        other.gait = "trot".to_string();
        assert!(compare_traces(a, &other).is_err());
    }

    #[test]
    fn invalid_rows_are_rejected() {
        let mut bad = DenseMatrix::zeros(2, 3);
        bad.fill(0.5);
        assert!(ActivationTrace::new("walk", "dense", bad).is_err());
        assert!(ActivationTrace::new("walk", "dense", DenseMatrix::zeros(0, 3)).is_err());
    }

    #[test]
    fn csv_lists_every_frame_with_labels() {
        let mut m = DenseMatrix::zeros(3, 2);
        for r in 0..3 {
            m.row_mut(r).copy_from_slice(&[0.75, 0.25]);
        }
        let t = ActivationTrace::new("gallop", "sparse", m).unwrap();
        let csv = t.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("frame,omega_0,omega_1,gait,model"));
        assert_eq!(lines.next(), Some("0,0.75,0.25,gallop,sparse"));
        assert_eq!(csv.lines().count(), 4);
    }
}
