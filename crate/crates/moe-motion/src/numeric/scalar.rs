use num_traits::{Float, NumAssignOps};

/// Floating-point scalar the whole stack is generic over.
///
/// Parameters are stored and trained in `f32`; the same code instantiated at
/// `f64` backs the finite-difference gradient checks, so both widths must
/// run through identical arithmetic.
pub trait Scalar:
    Float
    + NumAssignOps
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_through_f64() {
        assert_eq!(<f32 as Scalar>::from_f64(0.25).as_f64(), 0.25);
        assert_eq!(<f64 as Scalar>::from_f64(-1.5e-8), -1.5e-8);
    }
}
