use nalgebra::RealField;

/// Real scalar the numerics run on: `f32` or `f64`.
pub trait Scalar: RealField + Copy + num_traits::FromPrimitive + num_traits::ToPrimitive {
    /// Literal conversion from `f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    #[inline]
    fn from_count(i: i64) -> Self {
        Self::from_i64(i).expect("integer fits in scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// A tolerance of `x`, floored at a few hundred ulps of the type.
    #[inline]
    fn tol(x: f64) -> Self {
        let floor = Self::default_epsilon() * Self::lit(256.0);
        Self::lit(x).max(floor)
    }
}

impl<T> Scalar for T where T: RealField + Copy + num_traits::FromPrimitive + num_traits::ToPrimitive {}
