use std::fmt;

use crate::numeric::{DenseMatrix, Scalar};

/// One fully connected layer: `w` is rows x cols, `b` has one entry per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub w: DenseMatrix<T>,
    pub b: Vec<T>,
}

impl<T: Scalar> LayerParams<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        LayerParams {
            w: DenseMatrix::zeros(rows, cols),
            b: vec![T::zero(); rows],
        }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Three stacked fully connected layers. Both the gating network and each
/// expert (and the blended result of the experts) share this shape.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack<T> {
    pub layers: [LayerParams<T>; 3],
}

pub type ExpertParams<T> = LayerStack<T>;
pub type GatingParams<T> = LayerStack<T>;

/// Expert parameters collapsed under a gating weight vector; what the
/// prediction pass actually runs through.
pub type BlendedParams<T> = LayerStack<T>;

impl<T: Scalar> LayerStack<T> {
    pub fn zeros(dims: [(usize, usize); 3]) -> Self {
        LayerStack {
            layers: dims.map(|(r, c)| LayerParams::zeros(r, c)),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerParams::param_count).sum()
    }

    /// self += a * other, tensor by tensor.
    pub fn axpy_from(&mut self, a: T, other: &Self) {
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            dst.w.axpy_from(a, &src.w);
            crate::numeric::ops::axpy(&mut dst.b, a, &src.b);
        }
    }

    pub fn fill_zero(&mut self) {
        for l in &mut self.layers {
            l.w.fill(T::zero());
            l.b.iter_mut().for_each(|v| *v = T::zero());
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TensorKind {
    Weight,
    Bias,
}

/// Stable identity of one tensor inside a [`ParamSet`].
///
/// The derived ordering (gating before experts, then layer, weight before
/// bias) is the canonical tensor order. Initialization draws, optimizer
/// moment layout, pruning tie-breaks, and the checkpoint layout all follow
/// it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TensorKey {
    Gating { layer: u8, kind: TensorKind },
    Expert { expert: u16, layer: u8, kind: TensorKind },
}

impl TensorKey {
    pub fn kind(&self) -> TensorKind {
        match self {
            TensorKey::Gating { kind, .. } | TensorKey::Expert { kind, .. } => *kind,
        }
    }

    pub fn is_gating(&self) -> bool {
        matches!(self, TensorKey::Gating { .. })
    }
}

impl fmt::Display for TensorKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = |k: TensorKind| match k {
            TensorKind::Weight => 'w',
            TensorKind::Bias => 'b',
        };
        match self {
            TensorKey::Gating { layer, kind } => write!(f, "gating.{}{}", tag(*kind), layer),
            TensorKey::Expert { expert, layer, kind } => {
                write!(f, "expert{}.{}{}", expert, tag(*kind), layer)
            }
        }
    }
}

/// Every trainable tensor of the model: one gating stack plus `K` expert
/// stacks.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    pub gating: GatingParams<T>,
    pub experts: Vec<ExpertParams<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn zeros(gating_dims: [(usize, usize); 3], expert_dims: [(usize, usize); 3], n_experts: usize) -> Self {
        ParamSet {
            gating: LayerStack::zeros(gating_dims),
            experts: (0..n_experts).map(|_| LayerStack::zeros(expert_dims)).collect(),
        }
    }

    pub fn zeros_like(other: &Self) -> Self {
        let dims = |s: &LayerStack<T>| {
            [
                (s.layers[0].w.rows(), s.layers[0].w.cols()),
                (s.layers[1].w.rows(), s.layers[1].w.cols()),
                (s.layers[2].w.rows(), s.layers[2].w.cols()),
            ]
        };
        ParamSet::zeros(dims(&other.gating), dims(&other.experts[0]), other.experts.len())
    }

    pub fn n_experts(&self) -> usize {
        self.experts.len()
    }

    /// Canonical tensor order for a model with `n_experts` experts.
    pub fn tensor_keys(n_experts: usize) -> Vec<TensorKey> {
        let mut keys = Vec::with_capacity(6 + 6 * n_experts);
        for layer in 0..3u8 {
            keys.push(TensorKey::Gating { layer, kind: TensorKind::Weight });
            keys.push(TensorKey::Gating { layer, kind: TensorKind::Bias });
        }
        for expert in 0..n_experts as u16 {
            for layer in 0..3u8 {
                keys.push(TensorKey::Expert { expert, layer, kind: TensorKind::Weight });
                keys.push(TensorKey::Expert { expert, layer, kind: TensorKind::Bias });
            }
        }
        keys
    }

    pub fn tensor(&self, key: TensorKey) -> &[T] {
        match key {
            TensorKey::Gating { layer, kind } => {
                let l = &self.gating.layers[layer as usize];
                match kind {
                    TensorKind::Weight => l.w.as_slice(),
                    TensorKind::Bias => &l.b,
                }
            }
            TensorKey::Expert { expert, layer, kind } => {
                let l = &self.experts[expert as usize].layers[layer as usize];
                match kind {
                    TensorKind::Weight => l.w.as_slice(),
                    TensorKind::Bias => &l.b,
                }
            }
        }
    }

    pub fn tensor_mut(&mut self, key: TensorKey) -> &mut [T] {
        match key {
            TensorKey::Gating { layer, kind } => {
                let l = &mut self.gating.layers[layer as usize];
                match kind {
                    TensorKind::Weight => l.w.as_mut_slice(),
                    TensorKind::Bias => &mut l.b,
                }
            }
            TensorKey::Expert { expert, layer, kind } => {
                let l = &mut self.experts[expert as usize].layers[layer as usize];
                match kind {
                    TensorKind::Weight => l.w.as_mut_slice(),
                    TensorKind::Bias => &mut l.b,
                }
            }
        }
    }

    /// All tensors as mutable slices in canonical order; lets the optimizer
    /// zip parameters, gradients, and moments without repeated lookups.
    pub fn tensors_mut(&mut self) -> Vec<(TensorKey, &mut [T])> {
        let mut out = Vec::with_capacity(6 + 6 * self.experts.len());
        for (layer, l) in self.gating.layers.iter_mut().enumerate() {
            let layer = layer as u8;
            out.push((TensorKey::Gating { layer, kind: TensorKind::Weight }, l.w.as_mut_slice()));
            out.push((TensorKey::Gating { layer, kind: TensorKind::Bias }, l.b.as_mut_slice()));
        }
        for (expert, ex) in self.experts.iter_mut().enumerate() {
            let expert = expert as u16;
            for (layer, l) in ex.layers.iter_mut().enumerate() {
                let layer = layer as u8;
                out.push((TensorKey::Expert { expert, layer, kind: TensorKind::Weight }, l.w.as_mut_slice()));
                out.push((TensorKey::Expert { expert, layer, kind: TensorKind::Bias }, l.b.as_mut_slice()));
            }
        }
        out
    }

    pub fn tensors(&self) -> Vec<(TensorKey, &[T])> {
        Self::tensor_keys(self.experts.len())
            .into_iter()
            .map(|k| (k, self.tensor(k)))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.gating.param_count() + self.experts.iter().map(LayerStack::param_count).sum::<usize>()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| crate::numeric::ops::all_finite(t))
    }
}
