//! Value type abstraction. Coordinates and positions are always [`Idx`];
//! only the stored component values are generic.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign};

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};

/// Signed coordinate / position integer. `-1` is reserved as the hashed
/// empty-bucket sentinel.
pub type Idx = i64;

/// Sentinel stored in empty hashed buckets.
pub const EMPTY: Idx = -1;

/// Floating point component value: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumCast
    + ToPrimitive
    + AddAssign
    + MulAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// C type name used by the kernel emitter.
    const C_TYPE: &'static str;
    /// printf conversion that round-trips the value.
    const C_PRINTF: &'static str;
    /// scanf conversion.
    const C_SCANF: &'static str;

    fn from_f64_lossy(v: f64) -> Self {
        <Self as NumCast>::from(v).unwrap_or_else(Self::nan)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    const C_TYPE: &'static str = "double";
    const C_PRINTF: &'static str = "%.17g";
    const C_SCANF: &'static str = "%lf";
}

impl Scalar for f32 {
    const C_TYPE: &'static str = "float";
    const C_PRINTF: &'static str = "%.9g";
    const C_SCANF: &'static str = "%f";
}

/// Relative comparison used throughout the test suites:
/// `|a - b| <= rel * max(|a|, |b|)`, with an absolute floor of `rel` for
/// values that are both (close to) zero.
pub fn rel_close<T: Scalar>(a: T, b: T, rel: f64) -> bool {
    let (a, b) = (a.to_f64_lossy(), b.to_f64_lossy());
    let scale = a.abs().max(b.abs()).max(1.0);
    (a - b).abs() <= rel * scale
}
