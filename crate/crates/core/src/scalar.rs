//! Scalar abstraction for the numeric kernels.
//!
//! Everything that does real-valued math (digests, histograms, two-sample
//! statistics, density-ratio fitting, projections) is generic over [`Real`]
//! so the same code runs at `f32` or `f64`. The crate root exports `f64`
//! aliases, which is what the runtime uses.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar usable by the numeric kernels: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossless-enough round trip used by serialization and reporting.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).unwrap_or_else(Self::nan)
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean<F: Real>(xs: &[F]) -> F {
        xs.iter().copied().sum::<F>() / F::from_usize_lossy(xs.len())
    }

    #[test]
    fn generic_mean_works_for_both_widths() {
        assert_eq!(mean(&[1.0f64, 2.0, 3.0]), 2.0);
        assert_eq!(mean(&[1.0f32, 2.0, 3.0]), 2.0);
    }
}
