//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type the model and algorithms are generic over: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `log(exp(a) + exp(b))` without overflow.
#[inline]
pub fn log_add_exp<T: Scalar>(a: T, b: T) -> T {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == T::neg_infinity() {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `log(sum(exp(v)))` with max subtraction; `-inf` for an empty slice.
pub fn log_sum_exp<T: Scalar>(v: &[T]) -> T {
    let m = v.iter().copied().fold(T::neg_infinity(), T::max);
    if m == T::neg_infinity() || !m.is_finite() {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<T>().ln()
}

/// Overwrites `v` with its softmax and returns the log normaliser.
pub fn softmax_in_place<T: Scalar>(v: &mut [T]) -> T {
    let m = v.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
    m + total.ln()
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}
