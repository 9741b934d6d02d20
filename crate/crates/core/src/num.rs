//! Scalar abstraction and compensated accumulation.

use std::fmt;

use num_traits::{Float, FromPrimitive};

/// Scalar type used by the numeric core: any float with the usual
/// transcendental ops plus conversions from literals.
///
/// Implemented for `f32` and `f64` (and anything else satisfying the bounds).
pub trait Real:
    Float + FromPrimitive + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    /// Lift an `f64` constant into `Self`. Panics only if the type cannot
    /// represent finite doubles at all, which no real float type hits.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 constant must convert")
    }

    /// Tolerance for normalization checks: 1e-9, widened for low-precision
    /// scalars where 1e-9 is below machine epsilon.
    fn normalization_tol() -> Self {
        Self::of(1e-9).max(Self::epsilon() * Self::of(64.0))
    }
}

impl<T> Real for T where
    T: Float + FromPrimitive + fmt::Debug + fmt::Display + Send + Sync + 'static
{
}

/// Kahan–Neumaier compensated accumulator.
///
/// The divergence and entropy sums mix terms of wildly different magnitude
/// (block laws decay like 2^-i), so plain summation loses digits we care
/// about at the 1e-9 tolerances used for normalization checks.
#[derive(Debug, Clone, Copy)]
pub struct KahanSum<T> {
    sum: T,
    comp: T,
}

impl<T: Real> KahanSum<T> {
    pub fn new() -> Self {
        KahanSum {
            sum: T::zero(),
            comp: T::zero(),
        }
    }

    pub fn add(&mut self, value: T) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.comp = self.comp + ((self.sum - t) + value);
        } else {
            self.comp = self.comp + ((value - t) + self.sum);
        }
        self.sum = t;
    }

    pub fn value(&self) -> T {
        self.sum + self.comp
    }
}

impl<T: Real> Default for KahanSum<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Compensated sum of an iterator.
pub fn kahan_sum<T: Real, I: IntoIterator<Item = T>>(iter: I) -> T {
    let mut acc = KahanSum::new();
    for v in iter {
        acc.add(v);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_recovers_lost_digits() {
        // 1 + 1e-16 * 1e16 = 2 exactly under compensation; naive f64 drifts.
        let mut acc = KahanSum::<f64>::new();
        acc.add(1.0);
        for _ in 0..10_000_000 {
            acc.add(1e-16);
        }
        let compensated = acc.value();
        assert!((compensated - (1.0 + 1e-9)).abs() < 1e-12);
    }

    #[test]
    fn real_of_roundtrips() {
        assert_eq!(f64::of(0.25), 0.25);
        assert_eq!(f32::of(0.25), 0.25f32);
    }
}
