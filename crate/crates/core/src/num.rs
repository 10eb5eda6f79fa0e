//! Scalar abstraction shared by every numeric type in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar used for capacities, volumes, loads and rates.
///
/// The tolerances are per-precision: a residual at or below
/// [`Real::COMPLETION_EPS`] counts as delivered, and rates below
/// [`Real::RATE_EPS`] are clamped to zero.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Residual volume treated as fully delivered.
    const COMPLETION_EPS: Self;
    /// Smallest non-zero rate handed out by an allocator.
    const RATE_EPS: Self;
    /// Slack allowed when checking capacity and demand feasibility.
    const FEASIBILITY_EPS: Self;

    /// Converts an `f64` literal. Panics only for values the type cannot hold.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    const COMPLETION_EPS: Self = 1e-9;
    const RATE_EPS: Self = 1e-12;
    const FEASIBILITY_EPS: Self = 1e-9;
}

impl Real for f32 {
    const COMPLETION_EPS: Self = 1e-4;
    const RATE_EPS: Self = 1e-6;
    const FEASIBILITY_EPS: Self = 1e-4;
}

/// Compensated (Neumaier) running sum.
///
/// Per-edge outstanding volume is maintained by many additions and
/// subtractions of unequal magnitude; the compensation term keeps the
/// incremental total equal to a fresh recomputation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum<T> {
    sum: T,
    carry: T,
}

impl<T: Real> CompensatedSum<T> {
    pub fn new() -> Self {
        Self { sum: T::zero(), carry: T::zero() }
    }

    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry = self.carry + ((self.sum - t) + x);
        } else {
            self.carry = self.carry + ((x - t) + self.sum);
        }
        self.sum = t;
    }

    pub fn value(&self) -> T {
        self.sum + self.carry
    }

    pub fn reset(&mut self) {
        self.sum = T::zero();
        self.carry = T::zero();
    }
}
