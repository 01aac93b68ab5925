//! Scalar abstraction shared by every numerical module.
//!
//! All of the model algebra is written against [`Real`], which is implemented
//! for `f32` and `f64`. Linear algebra goes through `nalgebra`, so the trait
//! builds on [`nalgebra::RealField`]; conversions to and from primitive
//! numbers go through `num-traits`.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar usable throughout the crate.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Display + LowerExp + Debug + Send + Sync + 'static
{
    const INFINITY: Self;
    const NEG_INFINITY: Self;
    const EPSILON: Self;
    const NAN: Self;

    /// Converts an `f64` constant into this scalar type.
    #[inline]
    fn c(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 constant representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::c(n as f64)
    }

    #[inline]
    fn f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn is_nan(self) -> bool {
        self != self
    }

    #[inline]
    fn finite(self) -> bool {
        self.f64().is_finite()
    }
}

impl Real for f64 {
    const INFINITY: Self = f64::INFINITY;
    const NEG_INFINITY: Self = f64::NEG_INFINITY;
    const EPSILON: Self = f64::EPSILON;
    const NAN: Self = f64::NAN;
}

impl Real for f32 {
    const INFINITY: Self = f32::INFINITY;
    const NEG_INFINITY: Self = f32::NEG_INFINITY;
    const EPSILON: Self = f32::EPSILON;
    const NAN: Self = f32::NAN;
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy)]
pub struct CompensatedSum<T: Real> {
    sum: T,
    carry: T,
}

impl<T: Real> Default for CompensatedSum<T> {
    fn default() -> Self {
        Self { sum: T::zero(), carry: T::zero() }
    }
}

impl<T: Real> CompensatedSum<T> {
    #[inline]
    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> T {
        self.sum + self.carry
    }
}

/// Compensated sum of an iterator.
pub fn compensated_sum<T: Real, I: IntoIterator<Item = T>>(values: I) -> T {
    let mut acc = CompensatedSum::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Compensated dot product `Σ a_i b_i`.
pub fn compensated_dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    compensated_sum(a.iter().zip(b).map(|(&x, &y)| x * y))
}

/// `ln Σ exp(v_i)` without overflow; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp<T: Real>(values: &[T]) -> T {
    let max = values.iter().copied().fold(T::NEG_INFINITY, |m, v| if v > m { v } else { m });
    if !max.finite() {
        return max;
    }
    let s = compensated_sum(values.iter().map(|&v| (v - max).exp()));
    max + s.ln()
}
