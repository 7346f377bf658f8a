use crate::network::{MoeNetwork, ParamSet};
use crate::numeric::Scalar;
use crate::train::TrainConfig;

/// Cosine-annealing factor at position `t_cycle` within a cycle of length
/// `t_total`: 1 at the start of a cycle, 0 at its end.
pub fn annealing_factor(t_cycle: f64, t_total: f64) -> f64 {
    0.5 * (1.0 + (std::f64::consts::PI * (t_cycle / t_total).clamp(0.0, 1.0)).cos())
}

/// Adam with decoupled weight decay and cosine-annealed warm restarts.
///
/// Moments mirror the parameter layout. The annealing position advances in
/// fractional epochs; when a cycle of `restart_epochs` ends, the factor
/// resets to 1 and the next cycle is `restart_mult` times longer.
#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    pub m: ParamSet<T>,
    pub v: ParamSet<T>,
    /// Completed optimizer steps; drives bias correction.
    pub step: u64,
    cycle_start: f64,
    cycle_len: f64,
    epoch_pos: f64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(net: &MoeNetwork<T>, config: &TrainConfig) -> Self {
        OptimizerState {
            m: ParamSet::zeros_like(&net.params),
            v: ParamSet::zeros_like(&net.params),
            step: 0,
            cycle_start: 0.0,
            cycle_len: config.restart_epochs,
            epoch_pos: 0.0,
        }
    }

    /// Moves the annealing clock to `epoch_pos` (epochs, fractional),
    /// applying warm restarts for every completed cycle.
    pub fn set_epoch_position(&mut self, epoch_pos: f64, config: &TrainConfig) {
        self.epoch_pos = epoch_pos;
        while self.epoch_pos - self.cycle_start >= self.cycle_len {
            self.cycle_start += self.cycle_len;
            self.cycle_len *= config.restart_mult;
        }
    }

    pub fn annealing(&self) -> f64 {
        annealing_factor(self.epoch_pos - self.cycle_start, self.cycle_len)
    }

    /// Zeroes both moment buffers at masked positions so a freshly masked
    /// weight gets no residual momentum push on later steps.
    pub fn reset_masked_moments(&mut self, masks: &crate::prune::MaskSet) {
        masks.suppress(&mut self.m);
        masks.suppress(&mut self.v);
    }

    /// One AdamWR update:
    ///
    /// m ← β1 m + (1-β1) g, v ← β2 v + (1-β2) g², bias-corrected, then
    /// θ ← θ (1 - η_t λ) - η_t m̂ / (√v̂ + ε) with η_t the annealed rate.
    /// The decay term is decoupled: with zero gradients and fresh moments,
    /// parameters shrink by exactly (1 - η_t λ).
    pub fn apply_step(&mut self, params: &mut ParamSet<T>, grads: &ParamSet<T>, config: &TrainConfig) {
        self.step += 1;
        let anneal = self.annealing();
        let lr_t = T::from_f64(anneal * config.learning_rate);
        let decay = T::from_f64(1.0 - anneal * config.learning_rate * config.weight_decay);
        let beta1 = T::from_f64(config.beta1);
        let beta2 = T::from_f64(config.beta2);
        let one_m_beta1 = T::from_f64(1.0 - config.beta1);
        let one_m_beta2 = T::from_f64(1.0 - config.beta2);
        let eps = T::from_f64(config.epsilon);
        let bias1 = T::from_f64(1.0 - config.beta1.powi(self.step as i32));
        let bias2 = T::from_f64(1.0 - config.beta2.powi(self.step as i32));

        let theta = params.tensors_mut();
        let g = grads.tensors();
        let m = self.m.tensors_mut();
        let v = self.v.tensors_mut();
        for (((tt, gg), mm), vv) in theta.into_iter().zip(g).zip(m).zip(v) {
            debug_assert_eq!(tt.0, gg.0);
            debug_assert_eq!(tt.0, mm.0);
            debug_assert_eq!(tt.0, vv.0);
            for (((t, &g), m), v) in tt.1.iter_mut().zip(gg.1).zip(mm.1.iter_mut()).zip(vv.1.iter_mut()) {
                *m = beta1 * *m + one_m_beta1 * g;
                *v = beta2 * *v + one_m_beta2 * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *t = *t * decay - lr_t * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
