//! Floating-point scalar abstraction shared by every numeric routine.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the toolkit computes in. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into the scalar type.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    /// Converts a count into the scalar type.
    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("representable count")
    }

    /// Relative rank tolerance: 1e-10, widened for low-precision types.
    fn rank_tol() -> Self {
        let floor = Self::lit(1e-10);
        let widened = Self::epsilon() * Self::lit(64.0);
        if widened > floor {
            widened
        } else {
            floor
        }
    }

    /// Scales an `f64` tolerance so that it stays meaningful at this precision.
    fn tol(v: f64) -> Self {
        let t = Self::lit(v);
        let floor = Self::epsilon() * Self::lit(64.0);
        if floor > t {
            floor
        } else {
            t
        }
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_tol_widens_for_f32() {
        assert_eq!(<f64 as Scalar>::rank_tol(), 1e-10);
        assert!(<f32 as Scalar>::rank_tol() > 1e-6);
    }
}
