//! Slice kernels shared by the dense/sparse types and the training loop.
//!
//! Everything here is written as straight zips over contiguous slices so the
//! compiler can vectorize; these loops dominate training time.

use crate::numeric::Scalar;

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// y += a * x
#[inline]
pub fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// y = a * x + y * 0 is not needed; this is y ← x.
#[inline]
pub fn copy_from<T: Scalar>(y: &mut [T], x: &[T]) {
    y.copy_from_slice(x);
}

#[inline]
pub fn scale<T: Scalar>(y: &mut [T], a: T) {
    for yi in y {
        *yi *= a;
    }
}

#[inline]
pub fn fill_zero<T: Scalar>(y: &mut [T]) {
    for yi in y {
        *yi = T::zero();
    }
}

/// Exponential linear unit: x for x > 0, e^x - 1 otherwise.
#[inline]
pub fn elu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x.exp() - T::one()
    }
}

/// Derivative of ELU expressed through the activation value `y = elu(x)`:
/// 1 for y > 0, y + 1 otherwise. Avoids a second exponential.
#[inline]
pub fn elu_derivative_from_output<T: Scalar>(y: T) -> T {
    if y > T::zero() {
        T::one()
    } else {
        y + T::one()
    }
}

#[inline]
pub fn elu_inplace<T: Scalar>(xs: &mut [T]) {
    for x in xs {
        *x = elu(*x);
    }
}

/// Numerically stable softmax: shifts by the maximum before exponentiating.
/// Output entries are positive and sum to 1 (within float rounding).
pub fn softmax<T: Scalar>(xs: &mut [T]) {
    if xs.is_empty() {
        return;
    }
    let max = xs.iter().copied().fold(xs[0], T::max);
    let mut sum = T::zero();
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x = *x / sum;
    }
}

/// Shannon entropy in nats of a probability vector. Zero entries contribute
/// zero (lim p→0 of p ln p).
pub fn entropy<T: Scalar>(probs: &[T]) -> f64 {
    let mut h = 0.0;
    for &p in probs {
        let p = p.as_f64();
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    h
}

pub fn all_finite<T: Scalar>(xs: &[T]) -> bool {
    xs.iter().all(|x| x.is_finite())
}
