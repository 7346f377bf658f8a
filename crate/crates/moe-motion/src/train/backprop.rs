//! Explicit forward/backward pass for the gated mixture network.
//!
//! The forward pass evaluates each expert layer separately and blends the
//! pre-activation outputs (`a_l = sum_i omega_i (W_li x_l + b_li)`), which
//! is algebraically identical to running the blended parameters but keeps
//! the per-expert outputs around: the gradient of the loss with respect to
//! omega_i is then just the inner product of the upstream gradient with
//! expert i's cached output. Gradients flow into every expert scaled by its
//! gating weight and into the gating stack through the softmax.

use crate::error::{Error, Result};
use crate::network::{MoeNetwork, ParamSet};
use crate::numeric::{ops, DenseMatrix, Rng, Scalar};

/// Reusable buffers for one forward/backward evaluation. Sized once per
/// network config; no per-sample allocation happens inside the pass.
#[derive(Debug, Clone)]
pub struct Workspace<T> {
    // gating
    gathered: Vec<T>,
    gh1: Vec<T>,
    gh2: Vec<T>,
    omega: Vec<T>,
    // prediction stack: post-dropout inputs, post-ELU hidden, output
    x0: Vec<T>,
    x1: Vec<T>,
    x2: Vec<T>,
    h0: Vec<T>,
    h1: Vec<T>,
    y_hat: Vec<T>,
    // inverted-dropout factors (0 or 1/retention) per layer input
    m0: Vec<T>,
    m1: Vec<T>,
    m2: Vec<T>,
    // per-expert pre-blend outputs, K contiguous chunks per layer
    z0: Vec<T>,
    z1: Vec<T>,
    z2: Vec<T>,
    // backward scratch
    dy: Vec<T>,
    da1: Vec<T>,
    da0: Vec<T>,
    dx1: Vec<T>,
    dx2: Vec<T>,
    domega: Vec<T>,
    dgh2: Vec<T>,
    dgh1: Vec<T>,
}

impl<T: Scalar> Workspace<T> {
    pub fn new(config: &crate::network::NetworkConfig) -> Self {
        let (d_in, d_out, h, k, g) = (
            config.d_in,
            config.d_out,
            config.h_size,
            config.n_experts,
            config.g_hidden,
        );
        let zeros = |n: usize| vec![T::zero(); n];
        Workspace {
            gathered: zeros(config.gating_indices.len()),
            gh1: zeros(g),
            gh2: zeros(g),
            omega: zeros(k),
            x0: zeros(d_in),
            x1: zeros(h),
            x2: zeros(h),
            h0: zeros(h),
            h1: zeros(h),
            y_hat: zeros(d_out),
            m0: zeros(d_in),
            m1: zeros(h),
            m2: zeros(h),
            z0: zeros(k * h),
            z1: zeros(k * h),
            z2: zeros(k * d_out),
            dy: zeros(d_out),
            da1: zeros(h),
            da0: zeros(h),
            dx1: zeros(h),
            dx2: zeros(h),
            domega: zeros(k),
            dgh2: zeros(g),
            dgh1: zeros(g),
        }
    }
}

#[inline]
fn fill_dropout_factors<T: Scalar>(out: &mut [T], keep: f64, rng: &mut Rng) {
    let inv = T::from_f64(1.0 / keep);
    for v in out.iter_mut() {
        *v = if rng.next_f64() < keep { inv } else { T::zero() };
    }
}

#[inline]
fn apply_factors<T: Scalar>(dst: &mut [T], src: &[T], factors: &[T]) {
    for ((d, &s), &f) in dst.iter_mut().zip(src).zip(factors) {
        *d = s * f;
    }
}

/// Forward pass for one sample; fills the workspace (gating activations,
/// expert outputs, hidden activations, prediction). Dropout factors must
/// already be in `m0..m2` (all ones when inactive).
fn forward_sample<T: Scalar>(net: &MoeNetwork<T>, x: &[T], ws: &mut Workspace<T>) {
    let k = net.config.n_experts;
    let h = net.config.h_size;
    let d_out = net.config.d_out;

    // gating
    for (dst, &i) in ws.gathered.iter_mut().zip(&net.config.gating_indices) {
        *dst = x[i];
    }
    let g = &net.params.gating;
    g.layers[0].w.matvec_bias(&ws.gathered, &g.layers[0].b, &mut ws.gh1);
    ops::elu_inplace(&mut ws.gh1);
    g.layers[1].w.matvec_bias(&ws.gh1, &g.layers[1].b, &mut ws.gh2);
    ops::elu_inplace(&mut ws.gh2);
    g.layers[2].w.matvec_bias(&ws.gh2, &g.layers[2].b, &mut ws.omega);
    ops::softmax(&mut ws.omega);

    // layer 0
    apply_factors(&mut ws.x0, x, &ws.m0);
    ops::fill_zero(&mut ws.h0);
    for (i, chunk) in ws.z0.chunks_exact_mut(h).enumerate() {
        let l = &net.params.experts[i].layers[0];
        l.w.matvec_bias(&ws.x0, &l.b, chunk);
        ops::axpy(&mut ws.h0, ws.omega[i], chunk);
    }
    ops::elu_inplace(&mut ws.h0);

    // layer 1
    apply_factors(&mut ws.x1, &ws.h0, &ws.m1);
    ops::fill_zero(&mut ws.h1);
    for (i, chunk) in ws.z1.chunks_exact_mut(h).enumerate() {
        let l = &net.params.experts[i].layers[1];
        l.w.matvec_bias(&ws.x1, &l.b, chunk);
        ops::axpy(&mut ws.h1, ws.omega[i], chunk);
    }
    ops::elu_inplace(&mut ws.h1);

    // layer 2, linear output
    apply_factors(&mut ws.x2, &ws.h1, &ws.m2);
    ops::fill_zero(&mut ws.y_hat);
    for (i, chunk) in ws.z2.chunks_exact_mut(d_out).enumerate() {
        let l = &net.params.experts[i].layers[2];
        l.w.matvec_bias(&ws.x2, &l.b, chunk);
        ops::axpy(&mut ws.y_hat, ws.omega[i], chunk);
    }
    let _ = k;
}

/// Mean-squared-error loss and parameter gradients over a batch.
///
/// `batch` indexes rows of `xs`/`ys`; the loss is the mean over batch rows
/// and output dimensions of the squared residual. `grads` is overwritten.
/// Dropout draws one seed from `rng` per call and expands it per sample, so
/// the masks do not depend on evaluation order; with retention 1.0 the rng
/// is never touched.
pub fn forward_backward<T: Scalar>(
    net: &MoeNetwork<T>,
    xs: &DenseMatrix<T>,
    ys: &DenseMatrix<T>,
    batch: &[usize],
    rng: &mut Rng,
    grads: &mut ParamSet<T>,
    ws: &mut Workspace<T>,
) -> Result<T> {
    if batch.is_empty() {
        return Err(Error::Config("forward_backward needs a non-empty batch".into()));
    }
    check_data_dims(net, xs, ys)?;
    let k = net.config.n_experts;
    let h = net.config.h_size;
    let d_out = net.config.d_out;
    let retention = net.config.dropout_retention;
    let dropout = retention < 1.0;
    let batch_seed = if dropout { rng.next_u64() } else { 0 };

    for t in grads.tensors_mut() {
        ops::fill_zero(t.1);
    }
    let mut sum_sq = T::zero();
    // d(loss)/dy picks up the 2 from the square and the batch/output mean
    let dy_scale = T::from_f64(2.0 / (batch.len() * d_out) as f64);

    for (pos, &row) in batch.iter().enumerate() {
        let x = xs.row(row);
        let target = ys.row(row);

        if dropout {
            let mut srng = Rng::new(batch_seed).derive(pos as u64);
            fill_dropout_factors(&mut ws.m0, retention, &mut srng);
            fill_dropout_factors(&mut ws.m1, retention, &mut srng);
            fill_dropout_factors(&mut ws.m2, retention, &mut srng);
        } else {
            ws.m0.iter_mut().for_each(|v| *v = T::one());
            ws.m1.iter_mut().for_each(|v| *v = T::one());
            ws.m2.iter_mut().for_each(|v| *v = T::one());
        }

        forward_sample(net, x, ws);

        for ((dy, &y), &t) in ws.dy.iter_mut().zip(&ws.y_hat).zip(target) {
            let r = y - t;
            sum_sq += r * r;
            *dy = r * dy_scale;
        }

        ops::fill_zero(&mut ws.domega);

        // layer 2 backward (linear output): upstream gradient is dy
        for i in 0..k {
            let z = &ws.z2[i * d_out..(i + 1) * d_out];
            ws.domega[i] += ops::dot(&ws.dy, z);
            let gl = &mut grads.experts[i].layers[2];
            gl.w.outer_accum(ws.omega[i], &ws.dy, &ws.x2);
            ops::axpy(&mut gl.b, ws.omega[i], &ws.dy);
        }
        ops::fill_zero(&mut ws.dx2);
        for i in 0..k {
            net.params.experts[i].layers[2]
                .w
                .matvec_transpose_accum_scaled(&ws.dy, ws.omega[i], &mut ws.dx2);
        }

        // through dropout m2 and the ELU at h1
        for ((da, &dx), (&m, &hv)) in ws.da1.iter_mut().zip(&ws.dx2).zip(ws.m2.iter().zip(&ws.h1)) {
            *da = dx * m * ops::elu_derivative_from_output(hv);
        }

        // layer 1 backward
        for i in 0..k {
            let z = &ws.z1[i * h..(i + 1) * h];
            ws.domega[i] += ops::dot(&ws.da1, z);
            let gl = &mut grads.experts[i].layers[1];
            gl.w.outer_accum(ws.omega[i], &ws.da1, &ws.x1);
            ops::axpy(&mut gl.b, ws.omega[i], &ws.da1);
        }
        ops::fill_zero(&mut ws.dx1);
        for i in 0..k {
            net.params.experts[i].layers[1]
                .w
                .matvec_transpose_accum_scaled(&ws.da1, ws.omega[i], &mut ws.dx1);
        }

        for ((da, &dx), (&m, &hv)) in ws.da0.iter_mut().zip(&ws.dx1).zip(ws.m1.iter().zip(&ws.h0)) {
            *da = dx * m * ops::elu_derivative_from_output(hv);
        }

        // layer 0 backward; the input gradient is not needed
        for i in 0..k {
            let z = &ws.z0[i * h..(i + 1) * h];
            ws.domega[i] += ops::dot(&ws.da0, z);
            let gl = &mut grads.experts[i].layers[0];
            gl.w.outer_accum(ws.omega[i], &ws.da0, &ws.x0);
            ops::axpy(&mut gl.b, ws.omega[i], &ws.da0);
        }

        // softmax backward: dlogit_k = omega_k (domega_k - sum_j domega_j omega_j)
        let correction = ops::dot(&ws.domega, &ws.omega);
        for (dl, &w) in ws.domega.iter_mut().zip(&ws.omega) {
            *dl = w * (*dl - correction);
        }
        let dlogits = &ws.domega;

        // gating stack backward
        let gg = &mut grads.gating;
        gg.layers[2].w.outer_accum(T::one(), dlogits, &ws.gh2);
        ops::axpy(&mut gg.layers[2].b, T::one(), dlogits);
        ops::fill_zero(&mut ws.dgh2);
        net.params.gating.layers[2].w.matvec_transpose_accum(dlogits, &mut ws.dgh2);
        for (d, &hv) in ws.dgh2.iter_mut().zip(&ws.gh2) {
            *d *= ops::elu_derivative_from_output(hv);
        }

        gg.layers[1].w.outer_accum(T::one(), &ws.dgh2, &ws.gh1);
        ops::axpy(&mut gg.layers[1].b, T::one(), &ws.dgh2);
        ops::fill_zero(&mut ws.dgh1);
        net.params.gating.layers[1].w.matvec_transpose_accum(&ws.dgh2, &mut ws.dgh1);
        for (d, &hv) in ws.dgh1.iter_mut().zip(&ws.gh1) {
            *d *= ops::elu_derivative_from_output(hv);
        }

        gg.layers[0].w.outer_accum(T::one(), &ws.dgh1, &ws.gathered);
        ops::axpy(&mut gg.layers[0].b, T::one(), &ws.dgh1);
    }

    Ok(sum_sq / T::from_f64((batch.len() * d_out) as f64))
}

/// Eval-mode (no dropout) mean squared error over the given rows; used for
/// validation. Accumulates in f64 so long validation sets stay stable.
pub fn forward_loss<T: Scalar>(
    net: &MoeNetwork<T>,
    xs: &DenseMatrix<T>,
    ys: &DenseMatrix<T>,
    rows: &[usize],
    ws: &mut Workspace<T>,
) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Config("forward_loss needs at least one row".into()));
    }
    check_data_dims(net, xs, ys)?;
    ws.m0.iter_mut().for_each(|v| *v = T::one());
    ws.m1.iter_mut().for_each(|v| *v = T::one());
    ws.m2.iter_mut().for_each(|v| *v = T::one());
    let mut sum_sq = 0.0f64;
    for &row in rows {
        forward_sample(net, xs.row(row), ws);
        for (&y, &t) in ws.y_hat.iter().zip(ys.row(row)) {
            let r = (y - t).as_f64();
            sum_sq += r * r;
        }
    }
    Ok(sum_sq / (rows.len() * net.config.d_out) as f64)
}

fn check_data_dims<T: Scalar>(net: &MoeNetwork<T>, xs: &DenseMatrix<T>, ys: &DenseMatrix<T>) -> Result<()> {
    if xs.cols() != net.config.d_in || ys.cols() != net.config.d_out || xs.rows() != ys.rows() {
        return Err(Error::shape(
            "training batch",
            format!("x: n x {}, y: n x {}", net.config.d_in, net.config.d_out),
            format!("x: {}x{}, y: {}x{}", xs.rows(), xs.cols(), ys.rows(), ys.cols()),
        ));
    }
    Ok(())
}
