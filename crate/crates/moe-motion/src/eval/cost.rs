//! Model size and inference cost accounting under masking.
//!
//! Size counts stored parameters (32-bit each, masked entries dropped).
//! Compute counts dense-equivalent floating-point operations for one
//! prediction: two per surviving weight under the pruning coverage, two per
//! weight outside it, plus a fixed per-frame overhead for bias adds, expert
//! blending, activations, and the softmax. Masked biases shrink storage but
//! not the operation count: the blend still touches every bias slot.

use serde::{Deserialize, Serialize};

use crate::network::{MoeNetwork, ParamSet, TensorKey, TensorKind};
use crate::numeric::Scalar;
use crate::prune::{PruneConfig, PruneState};

pub const BITS_PER_PARAM: u64 = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    /// Every parameter slot in the network, masked or not.
    pub total_params: usize,
    /// Slots that survive masking and must be stored.
    pub nonzero_params: usize,
    pub masked_params: usize,
    /// Masked fraction of the parameters the pruning coverage ranks.
    pub sparsity: f64,
    pub size_megabits: f64,
    pub size_megabytes: f64,
    /// Operations through weights the coverage can prune (shrinks with
    /// sparsity).
    pub prunable_flops: u64,
    /// Operations that survive any amount of pruning: uncovered weights plus
    /// the per-frame overhead.
    pub fixed_flops: u64,
    /// Total operations per predicted frame, in millions.
    pub mflops: f64,
}

/// Per-frame operations that no weight mask removes: bias adds and the
/// omega-weighted blend on every expert layer output (3 ops per expert per
/// unit), ELU on the two blended hidden layers, gating bias adds, gating
/// ELUs, and the softmax.
fn overhead_flops(net_config: &crate::network::NetworkConfig) -> u64 {
    let h = net_config.h_size as u64;
    let k = net_config.n_experts as u64;
    let g = net_config.g_hidden as u64;
    let d_out = net_config.d_out as u64;
    3 * k * (2 * h + d_out) + 2 * h + (2 * g + k) + 2 * g + k
}

/// Accounts size and per-frame compute for `net` under the masks in `prune`
/// (pass `None` for a dense network; coverage then defaults to all weights).
pub fn cost_report<T: Scalar>(net: &MoeNetwork<T>, prune: Option<&PruneState>) -> CostReport {
    let default_coverage = PruneConfig::new(0.0);
    let coverage = prune.map_or(&default_coverage, |st| &st.config);
    let masked_of = |key: TensorKey| -> usize {
        prune.and_then(|st| st.masks.get(key)).map_or(0, |bm| bm.masked_count())
    };

    let mut total_params = 0usize;
    let mut masked_params = 0usize;
    let mut covered_params = 0usize;
    let mut prunable_flops = 0u64;
    let mut fixed_flops = overhead_flops(&net.config);
    for key in ParamSet::<T>::tensor_keys(net.config.n_experts) {
        let len = net.params.tensor(key).len();
        let masked = masked_of(key);
        total_params += len;
        masked_params += masked;
        if coverage.covers(key) {
            covered_params += len;
        }
        if key.kind() == TensorKind::Weight {
            if coverage.covers(key) {
                prunable_flops += 2 * (len - masked) as u64;
            } else {
                fixed_flops += 2 * len as u64;
            }
        }
    }

    let nonzero_params = total_params - masked_params;
    CostReport {
        total_params,
        nonzero_params,
        masked_params,
        sparsity: if covered_params == 0 {
            0.0
        } else {
            masked_params as f64 / covered_params as f64
        },
        size_megabits: (BITS_PER_PARAM * nonzero_params as u64) as f64 / 1e6,
        size_megabytes: (BITS_PER_PARAM * nonzero_params as u64) as f64 / 8e6,
        prunable_flops,
        fixed_flops,
        mflops: (prunable_flops + fixed_flops) as f64 / 1e6,
    }
}

/// Sweep rows as CSV with columns `sparsity,size_Mb,MFLOPs`.
pub fn sweep_csv(rows: &[CostReport]) -> String {
    let mut out = String::from("sparsity,size_Mb,MFLOPs\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.sparsity, r.size_megabits, r.mflops));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SkeletonSchema;
    use crate::numeric::Rng;
    use crate::prune::{compute_masks, MaskSet};

    fn dog_net() -> MoeNetwork<f32> {
        let schema = SkeletonSchema::dog();
        MoeNetwork::init(schema.network_config(512, 8, 32), 11).unwrap()
    }

    fn masked_state<T: Scalar>(net: &MoeNetwork<T>, config: PruneConfig, s: f64) -> PruneState {
        let masks = compute_masks(&net.params, &config, s).unwrap();
        PruneState {
            config,
            masks,
            events: Vec::new(),
        }
    }

    #[test]
    fn full_size_network_matches_published_footprint() {
        let net = dog_net();
        let r = cost_report(&net, None);
        // 8 experts x (512x420 + 512x512 + 408x512 + 1432 biases)
        // + gating (32x12 + 32x32 + 8x32 + 72 biases)
        assert_eq!(r.total_params, 5_501_832);
        assert_eq!(r.nonzero_params, r.total_params);
        assert_eq!(r.masked_params, 0);
        assert_eq!(r.sparsity, 0.0);
        assert!((r.size_megabits / 178.0 - 1.0).abs() < 0.03, "{} Mb", r.size_megabits);
        assert!((r.mflops / 11.10 - 1.0).abs() < 0.03, "{} MFLOPs", r.mflops);
        assert_eq!(r.size_megabytes, r.size_megabits / 8.0);
    }

    #[test]
    fn size_tracks_surviving_fraction_across_the_sweep() {
        let net = dog_net();
        let base = cost_report(&net, None);
        for decile in 1..=9 {
            let s = decile as f64 / 10.0;
            let state = masked_state(&net, PruneConfig::new(0.9), s);
            let r = cost_report(&net, Some(&state));
            let ratio = r.size_megabits / base.size_megabits;
            assert!(
                (ratio / (1.0 - s) - 1.0).abs() < 0.03,
                "s={s}: size ratio {ratio}"
            );
            assert!((r.sparsity - s).abs() < 1e-6);
        }
    }

    #[test]
    fn compute_is_affine_in_sparsity_with_a_positive_floor() {
        let net = dog_net();
        let reports: Vec<CostReport> = (0..=10)
            .map(|d| {
                let s = d as f64 / 10.0;
                if d == 10 {
                    // target_sparsity caps below 1; drive the mask directly
                    let cfg = PruneConfig::new(0.99);
                    let masks = compute_masks(&net.params, &cfg, 1.0).unwrap();
                    cost_report(&net, Some(&PruneState { config: cfg, masks, events: Vec::new() }))
                } else {
                    cost_report(&net, Some(&masked_state(&net, PruneConfig::new(0.99), s)))
                }
            })
            .collect();

        // constant decrement per decile: 2 flops per masked weight
        let first_drop = reports[0].mflops - reports[1].mflops;
        assert!(first_drop > 0.0);
        for w in reports.windows(2) {
            let drop = w[0].mflops - w[1].mflops;
            assert!((drop - first_drop).abs() < 1e-4, "uneven decrement {drop} vs {first_drop}");
            assert_eq!(w[0].fixed_flops, w[1].fixed_flops);
        }
        // every weight masked: only the floor remains, and it is positive;
        // extrapolation is exact up to the per-decile floor() rounding of
        // masked counts (one weight = 2e-6 MFLOPs per step)
        let floor = &reports[10];
        assert_eq!(floor.prunable_flops, 0);
        assert!(floor.fixed_flops > 0);
        assert!((floor.mflops - reports[0].mflops + 10.0 * first_drop).abs() < 1e-4);
    }

    #[test]
    fn nonzero_count_matches_the_stored_values() {
        let cfg = SkeletonSchema::compact().network_config(16, 3, 4);
        let mut net = MoeNetwork::<f32>::init(cfg, 5).unwrap();
        // biases initialize to zero; randomize them so a value census only
        // sees zeros where masks put them
        let mut rng = Rng::new(99);
        for (key, t) in net.params.tensors_mut() {
            if key.kind() == TensorKind::Bias {
                rng.fill_uniform(t, 0.1, 1.0);
            }
        }
        let config = PruneConfig {
            include_biases: true,
            ..PruneConfig::new(0.6)
        };
        let state = masked_state(&net, config, 0.6);
        state.masks.apply(&mut net.params);

        let r = cost_report(&net, Some(&state));
        let census: usize = ParamSet::<f32>::tensor_keys(3)
            .into_iter()
            .map(|k| net.params.tensor(k).iter().filter(|v| **v != 0.0).count())
            .sum();
        assert_eq!(r.nonzero_params, census);
        assert_eq!(r.nonzero_params + r.masked_params, r.total_params);
    }

    #[test]
    fn masked_biases_shrink_size_but_not_compute() {
        let cfg = SkeletonSchema::compact().network_config(16, 3, 4);
        let net = MoeNetwork::<f32>::init(cfg, 5).unwrap();
        let config = PruneConfig {
            include_biases: true,
            ..PruneConfig::new(0.5)
        };
        // mask every bias, no weights
        let entries = config
            .prunable_keys(3)
            .into_iter()
            .map(|k| {
                let mut bm = crate::prune::Bitmask::all_kept(net.params.tensor(k).len());
                if k.kind() == TensorKind::Bias {
                    for i in 0..net.params.tensor(k).len() {
                        bm.mask(i);
                    }
                }
                (k, bm)
            })
            .collect();
        let state = PruneState {
            config,
            masks: MaskSet { entries },
            events: Vec::new(),
        };
        let dense = cost_report(&net, None);
        let r = cost_report(&net, Some(&state));
        assert!(r.masked_params > 0);
        assert!(r.size_megabits < dense.size_megabits);
        assert_eq!(r.mflops, dense.mflops);
    }

    #[test]
    fn uncovered_gating_moves_weights_into_the_fixed_term() {
        let net = dog_net();
        let covered = cost_report(&net, Some(&masked_state(&net, PruneConfig::new(0.5), 0.0)));
        let no_gating = cost_report(
            &net,
            Some(&masked_state(
                &net,
                PruneConfig {
                    include_gating: false,
                    ..PruneConfig::new(0.5)
                },
                0.0,
            )),
        );
        assert_eq!(covered.mflops, no_gating.mflops);
        assert!(no_gating.fixed_flops > covered.fixed_flops);
        assert_eq!(
            no_gating.fixed_flops - covered.fixed_flops,
            covered.prunable_flops - no_gating.prunable_flops
        );
    }
}
