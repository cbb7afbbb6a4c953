//! Scalar abstraction for probability arithmetic.
//!
//! All model tables, messages, and posteriors are generic over [`Real`] so the
//! same code runs in `f64` (the default everywhere) or `f32`. Concrete aliases
//! for the main types live at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable as a probability or log-likelihood.
///
/// Implemented for `f32` and `f64`. The associated tolerances scale with the
/// precision of the type: row-stochasticity checks that are meaningful at
/// `1e-9` in `f64` would reject almost every `f32` table.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum<Self> + FromStr + Debug + Display + Send + Sync + 'static
{
    /// Tolerance for "this row sums to one" checks.
    fn stochastic_tol() -> Self;

    /// Lossless for `f64`; rounds to nearest for narrower types.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to any Real")
    }

    /// Widening back to `f64` for reporting and serialization.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

macro_rules! impl_real {
    ($t:ty, $tol:expr) => {
        impl Real for $t {
            fn stochastic_tol() -> Self {
                $tol
            }
        }
    };
}

impl_real!(f32, 1e-5);
impl_real!(f64, 1e-9);
