//! The gated mixture-of-experts regression network.
//!
//! A gating stack turns a subset of the input columns into a weight vector
//! omega over the experts; expert parameters are blended tensorwise under
//! omega; the blended three-layer stack maps the full input frame to the
//! output frame. Networks operate in normalized feature space and carry the
//! normalization vectors needed to enter and leave it.

mod config;
mod params;

pub use config::NetworkConfig;
pub use params::{
    BlendedParams, ExpertParams, GatingParams, LayerParams, LayerStack, ParamSet, TensorKey,
    TensorKind,
};

use crate::error::{Error, Result};
use crate::numeric::{ops, Rng, Scalar};

/// Forward-pass mode. Train mode applies inverted dropout to the prediction
/// stack's layer inputs; eval mode is deterministic and draws nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-column statistics mapping raw features to normalized ones. Stored in
/// checkpoints so a network can be rolled out without the dataset it was
/// trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization<T> {
    pub in_mean: Vec<T>,
    pub in_std: Vec<T>,
    pub out_mean: Vec<T>,
    pub out_std: Vec<T>,
}

impl<T: Scalar> Normalization<T> {
    /// Mean 0, std 1: normalized space equals raw space.
    pub fn identity(d_in: usize, d_out: usize) -> Self {
        Normalization {
            in_mean: vec![T::zero(); d_in],
            in_std: vec![T::one(); d_in],
            out_mean: vec![T::zero(); d_out],
            out_std: vec![T::one(); d_out],
        }
    }

    pub fn normalize_input(&self, raw: &[T], out: &mut [T]) {
        for i in 0..raw.len() {
            out[i] = (raw[i] - self.in_mean[i]) / self.in_std[i];
        }
    }

    pub fn denormalize_output(&self, normalized: &[T], out: &mut [T]) {
        for i in 0..normalized.len() {
            out[i] = normalized[i] * self.out_std[i] + self.out_mean[i];
        }
    }

    pub fn validate(&self, d_in: usize, d_out: usize) -> Result<()> {
        if self.in_mean.len() != d_in || self.in_std.len() != d_in {
            return Err(Error::shape(
                "normalization input vectors",
                format!("{d_in}"),
                format!("{}/{}", self.in_mean.len(), self.in_std.len()),
            ));
        }
        if self.out_mean.len() != d_out || self.out_std.len() != d_out {
            return Err(Error::shape(
                "normalization output vectors",
                format!("{d_out}"),
                format!("{}/{}", self.out_mean.len(), self.out_std.len()),
            ));
        }
        if self.in_std.iter().chain(&self.out_std).any(|s| *s <= T::zero()) {
            return Err(Error::Numeric("normalization std must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoeNetwork<T> {
    pub config: NetworkConfig,
    pub params: ParamSet<T>,
    pub norm: Normalization<T>,
}

/// Stream id for initialization draws under the run seed.
pub(crate) const INIT_STREAM: u64 = 1;

impl<T: Scalar> MoeNetwork<T> {
    /// Builds a network with Glorot-uniform weights (`±sqrt(6/(fan_in+fan_out))`,
    /// biases zero), drawn deterministically from `seed` in canonical tensor
    /// order. Identical seeds give bit-identical parameters.
    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::zeros(config.gating_dims(), config.expert_dims(), config.n_experts);
        let mut rng = Rng::new(seed).derive(INIT_STREAM);
        for (key, tensor) in params.tensors_mut() {
            if key.kind() == TensorKind::Weight {
                // fan_in = cols, fan_out = rows; tensors_mut yields canonical order
                let (rows, cols) = match key {
                    TensorKey::Gating { layer, .. } => config.gating_dims()[layer as usize],
                    TensorKey::Expert { layer, .. } => config.expert_dims()[layer as usize],
                };
                let bound = (6.0 / (rows + cols) as f64).sqrt();
                rng.fill_uniform(tensor, -bound, bound);
            }
        }
        let norm = Normalization::identity(config.d_in, config.d_out);
        Ok(MoeNetwork { config, params, norm })
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    /// Gating weights for a normalized input frame: gathers
    /// `gating_indices`, runs the gating stack (ELU hidden layers), and
    /// returns the softmax output. Entries are positive and sum to 1.
    pub fn gate(&self, frame: &[T]) -> Result<Vec<T>> {
        self.check_frame(frame)?;
        let gathered: Vec<T> = self.config.gating_indices.iter().map(|&i| frame[i]).collect();
        self.gate_gathered(&gathered)
    }

    fn gate_gathered(&self, gathered: &[T]) -> Result<Vec<T>> {
        let g = &self.params.gating;
        let mut h0 = vec![T::zero(); self.config.g_hidden];
        g.layers[0].w.matvec_bias(gathered, &g.layers[0].b, &mut h0);
        ops::elu_inplace(&mut h0);
        let mut h1 = vec![T::zero(); self.config.g_hidden];
        g.layers[1].w.matvec_bias(&h0, &g.layers[1].b, &mut h1);
        ops::elu_inplace(&mut h1);
        let mut logits = vec![T::zero(); self.config.n_experts];
        g.layers[2].w.matvec_bias(&h1, &g.layers[2].b, &mut logits);
        if !ops::all_finite(&logits) {
            return Err(Error::Numeric("non-finite value in gating layer 2".into()));
        }
        ops::softmax(&mut logits);
        Ok(logits)
    }

    /// Tensorwise expert blend: every parameter of the result is
    /// `sum_i omega[i] * expert_i`. Linear in omega.
    pub fn blend(&self, omega: &[T]) -> Result<BlendedParams<T>> {
        if omega.len() != self.config.n_experts {
            return Err(Error::shape(
                "blend weights",
                format!("{}", self.config.n_experts),
                format!("{}", omega.len()),
            ));
        }
        let mut out = LayerStack::zeros(self.config.expert_dims());
        for (w, expert) in omega.iter().zip(&self.params.experts) {
            out.axpy_from(*w, expert);
        }
        Ok(out)
    }

    /// One inference step in normalized space: gate, blend, run the blended
    /// stack. Train mode applies inverted dropout (keep probability
    /// `dropout_retention`, kept values scaled by its inverse) to each layer
    /// input; eval mode never touches `rng`.
    pub fn predict(&self, frame: &[T], mode: Mode, rng: &mut Rng) -> Result<Vec<T>> {
        Ok(self.predict_with_gate(frame, mode, rng)?.0)
    }

    /// `predict` that also returns the gating vector, for rollout traces.
    pub fn predict_with_gate(&self, frame: &[T], mode: Mode, rng: &mut Rng) -> Result<(Vec<T>, Vec<T>)> {
        let omega = self.gate(frame)?;
        let blended = self.blend(&omega)?;
        let y = forward_blended(&self.config, &blended, frame, mode, rng)?;
        Ok((y, omega))
    }

    fn check_frame(&self, frame: &[T]) -> Result<()> {
        if frame.len() != self.config.d_in {
            return Err(Error::shape(
                "input frame",
                format!("{}", self.config.d_in),
                format!("{}", frame.len()),
            ));
        }
        Ok(())
    }
}

/// Runs the blended prediction stack on a frame. Factored out so ablation
/// views can reuse it with a modified gating vector.
pub(crate) fn forward_blended<T: Scalar>(
    config: &NetworkConfig,
    blended: &BlendedParams<T>,
    frame: &[T],
    mode: Mode,
    rng: &mut Rng,
) -> Result<Vec<T>> {
    if frame.len() != config.d_in {
        return Err(Error::shape(
            "input frame",
            format!("{}", config.d_in),
            format!("{}", frame.len()),
        ));
    }
    let retention = config.dropout_retention;
    let dropout = mode == Mode::Train && retention < 1.0;
    let keep = T::from_f64(retention);
    let inv_keep = T::from_f64(1.0 / retention);

    let mut x = frame.to_vec();
    let mut bufs = [
        vec![T::zero(); config.h_size],
        vec![T::zero(); config.h_size],
        vec![T::zero(); config.d_out],
    ];
    for (i, out) in bufs.iter_mut().enumerate() {
        if dropout {
            for v in x.iter_mut() {
                *v = if rng.uniform::<T>(0.0, 1.0) < keep { *v * inv_keep } else { T::zero() };
            }
        }
        let layer = &blended.layers[i];
        layer.w.matvec_bias(&x, &layer.b, out);
        if i < 2 {
            ops::elu_inplace(out);
        }
        if !ops::all_finite(out) {
            return Err(Error::Numeric(format!("non-finite value in prediction layer {i}")));
        }
        x = std::mem::take(out);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny_config() -> NetworkConfig {
        NetworkConfig {
            d_in: 6,
            d_out: 4,
            h_size: 5,
            n_experts: 3,
            g_hidden: 4,
            gating_indices: vec![0, 2],
            dropout_retention: 1.0,
        }
    }

    fn frame(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = Rng::new(seed);
        (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = MoeNetwork::<f32>::init(tiny_config(), 7).unwrap();
        let b = MoeNetwork::<f32>::init(tiny_config(), 7).unwrap();
        for ((ka, ta), (_, tb)) in a.params.tensors().iter().zip(b.params.tensors().iter()) {
            assert_eq!(
                ta.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                tb.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                "tensor {ka} differs between identically seeded inits"
            );
        }
        let c = MoeNetwork::<f32>::init(tiny_config(), 8).unwrap();
        assert_ne!(a.params.experts[0].layers[0].w, c.params.experts[0].layers[0].w);

        // Glorot bound on the first expert layer: sqrt(6 / (5 + 6))
        let bound = (6.0f64 / 11.0).sqrt() as f32;
        for &v in a.params.experts[0].layers[0].w.as_slice() {
            assert!(v.abs() <= bound);
        }
        // biases zero
        assert!(a.params.experts[0].layers[0].b.iter().all(|&b| b == 0.0));
        assert!(a.params.gating.layers[0].b.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn param_count_matches_enumeration_for_random_configs() {
        let mut rng = Rng::new(123);
        for _ in 0..20 {
            let cfg = NetworkConfig {
                d_in: 1 + rng.next_below(12) as usize,
                d_out: 1 + rng.next_below(12) as usize,
                h_size: 1 + rng.next_below(16) as usize,
                n_experts: 1 + rng.next_below(6) as usize,
                g_hidden: 1 + rng.next_below(8) as usize,
                gating_indices: vec![0],
                dropout_retention: 0.7,
            };
            let net = MoeNetwork::<f32>::init(cfg.clone(), 1).unwrap();
            assert_eq!(net.param_count(), cfg.param_count(), "config {cfg:?}");
        }
    }

    #[test]
    fn zero_gating_weights_give_uniform_omega() {
        let mut net = MoeNetwork::<f64>::init(tiny_config(), 3).unwrap();
        net.params.gating.fill_zero();
        let omega = net.gate(&frame(6, 1)).unwrap();
        for &w in &omega {
            assert_relative_eq!(w, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn gate_sums_to_one_and_is_positive() {
        let net = MoeNetwork::<f64>::init(tiny_config(), 5).unwrap();
        for s in 0..50 {
            let omega = net.gate(&frame(6, s)).unwrap();
            assert!(omega.iter().all(|&w| w > 0.0));
            assert_relative_eq!(omega.iter().sum::<f64>(), 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn blend_is_linear_in_omega() {
        let net = MoeNetwork::<f64>::init(tiny_config(), 9).unwrap();
        let mut rng = Rng::new(42);
        for _ in 0..10 {
            let w1: Vec<f64> = (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let w2: Vec<f64> = (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let a: f64 = rng.uniform(-2.0, 2.0);
            let combo: Vec<f64> = w1.iter().zip(&w2).map(|(x, y)| a * x + y).collect();
            let blended_combo = net.blend(&combo).unwrap();
            let mut expect = net.blend(&w2).unwrap();
            expect.axpy_from(a, &net.blend(&w1).unwrap());
            for (l, r) in expect.layers.iter().zip(&blended_combo.layers) {
                for (x, y) in l.w.as_slice().iter().zip(r.w.as_slice()) {
                    assert_relative_eq!(x, y, epsilon = 1e-12);
                }
                for (x, y) in l.b.iter().zip(&r.b) {
                    assert_relative_eq!(x, y, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn blend_of_identical_experts_reproduces_them() {
        let mut net = MoeNetwork::<f64>::init(tiny_config(), 11).unwrap();
        let template = net.params.experts[0].clone();
        for e in &mut net.params.experts {
            *e = template.clone();
        }
        // weights sum to 1 -> blend equals the shared expert
        let blended = net.blend(&[0.2, 0.5, 0.3]).unwrap();
        for (l, r) in blended.layers.iter().zip(&template.layers) {
            for (x, y) in l.w.as_slice().iter().zip(r.w.as_slice()) {
                assert_relative_eq!(x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn eval_predict_is_pure_and_leaves_rng_untouched() {
        let net = MoeNetwork::<f64>::init(tiny_config(), 13).unwrap();
        let x = frame(6, 2);
        let mut rng = Rng::new(0);
        let y1 = net.predict(&x, Mode::Eval, &mut rng).unwrap();
        let y2 = net.predict(&x, Mode::Eval, &mut rng).unwrap();
        assert_eq!(y1, y2);
        // untouched rng still produces the same first draw as a fresh clone
        assert_eq!(rng.next_u64(), Rng::new(0).next_u64());
    }

    #[test]
    fn train_mode_dropout_changes_outputs_and_scales_survivors() {
        let mut cfg = tiny_config();
        cfg.dropout_retention = 0.6;
        let net = MoeNetwork::<f64>::init(cfg, 17).unwrap();
        let x = frame(6, 3);
        let mut rng = Rng::new(1);
        let y1 = net.predict(&x, Mode::Train, &mut rng).unwrap();
        let y2 = net.predict(&x, Mode::Train, &mut rng).unwrap();
        assert_ne!(y1, y2, "different dropout masks should change the output");
        // retention 1.0 in train mode equals eval mode exactly
        let net_keep = MoeNetwork::<f64>::init(tiny_config(), 17).unwrap();
        let e = net_keep.predict(&x, Mode::Eval, &mut rng).unwrap();
        let t = net_keep.predict(&x, Mode::Train, &mut rng).unwrap();
        assert_eq!(e, t);
    }

    #[test]
    fn expert_permutation_with_matching_gating_rows_is_invariant() {
        let net = MoeNetwork::<f64>::init(tiny_config(), 23).unwrap();
        // permutation (2, 0, 1)
        let perm = [2usize, 0, 1];
        let mut permuted = net.clone();
        permuted.params.experts = perm.iter().map(|&i| net.params.experts[i].clone()).collect();
        let old = &net.params.gating.layers[2];
        let mut new_last = LayerParams::<f64>::zeros(3, net.config.g_hidden);
        // slot j of the permuted model holds expert perm[j], so its logit
        // row must be the old row perm[j]
        for (new_row, &src) in perm.iter().enumerate() {
            new_last.w.row_mut(new_row).copy_from_slice(old.w.row(src));
            new_last.b[new_row] = old.b[src];
        }
        permuted.params.gating.layers[2] = new_last;

        let mut rng = Rng::new(0);
        for s in 0..20 {
            let x = frame(6, 100 + s);
            let a = net.predict(&x, Mode::Eval, &mut rng).unwrap();
            let b = permuted.predict(&x, Mode::Eval, &mut rng).unwrap();
            for (l, r) in a.iter().zip(&b) {
                assert_relative_eq!(l, r, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn predict_rejects_wrong_frame_length() {
        let net = MoeNetwork::<f64>::init(tiny_config(), 1).unwrap();
        let mut rng = Rng::new(0);
        let err = net.predict(&[0.0; 5], Mode::Eval, &mut rng).unwrap_err().to_string();
        assert!(err.contains("expected 6"), "{err}");
        assert!(err.contains("found 5"), "{err}");
    }

    #[test]
    fn non_finite_parameters_surface_as_layer_error() {
        let mut net = MoeNetwork::<f64>::init(tiny_config(), 1).unwrap();
        net.params.experts[1].layers[1].w.set(0, 0, f64::INFINITY);
        let mut rng = Rng::new(0);
        let err = net.predict(&frame(6, 0), Mode::Eval, &mut rng).unwrap_err().to_string();
        assert!(err.contains("prediction layer 1"), "{err}");
    }
}
