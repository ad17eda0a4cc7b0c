//! Scalar abstraction shared by every numeric module.
//!
//! All index construction and estimation code is written against [`Real`],
//! which is implemented for `f32` and `f64`. The crate root re-exports `f64`
//! aliases for the common case.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar usable throughout the pipeline.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from an `f64` literal or data value.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 value representable in scalar type")
    }

    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Sum
        + Debug
        + Display
        + LowerExp
        + Default
        + Send
        + Sync
        + 'static
{
}

/// Scalars that also support the dense decompositions used by the estimator.
pub trait LinalgReal: Real + nalgebra::RealField {}

impl<T: Real + nalgebra::RealField> LinalgReal for T {}

const PAIRWISE_BLOCK: usize = 8;

/// Pairwise (cascade) summation. The reduction tree depends only on the
/// slice length, so results are reproducible regardless of threading.
pub fn pairwise_sum<T: Real>(xs: &[T]) -> T {
    if xs.len() <= PAIRWISE_BLOCK {
        let mut acc = T::zero();
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise sum of `f(i)` for `i` in `0..n`.
pub fn pairwise_sum_by<T: Real>(n: usize, f: impl FnMut(usize) -> T) -> T {
    let buf: Vec<T> = (0..n).map(f).collect();
    pairwise_sum(&buf)
}

/// Pairwise dot product.
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    pairwise_sum_by(a.len(), |i| a[i] * b[i])
}

/// Euclidean norm computed in two passes (max-abs scaling, then scaled sum
/// of squares) so that tiny or huge components neither underflow nor overflow.
pub fn stable_norm<T: Real>(xs: &[T]) -> T {
    let scale = xs.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    if scale == T::zero() || !scale.is_finite() {
        return scale;
    }
    let ss = pairwise_sum_by(xs.len(), |i| {
        let v = xs[i] / scale;
        v * v
    });
    scale * ss.sqrt()
}

/// Format a value with `sig` significant digits, mimicking C's `%.{sig}g`.
pub fn format_sig(x: f64, sig: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sig = sig.max(1);
    let sci = format!("{:.*e}", sig - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -5 || exp >= sig as i32 {
        let mantissa = trim_fraction(mantissa);
        format!("{mantissa}e{exp}")
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_fraction(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
