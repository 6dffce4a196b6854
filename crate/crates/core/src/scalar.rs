//! Scalar traits.
//!
//! Matrix containers and the lattice builders only need ring arithmetic, so
//! they are generic over [`Field`], which admits exact rationals. Everything
//! that iterates to convergence (eigensolvers, SVD, threshold searches) needs
//! [`Real`], implemented for `f32` and `f64`.

use std::fmt::{Debug, Display, LowerExp};
use std::ops::Neg;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, Num, NumAssign, ToPrimitive};

/// Exact or floating field elements usable as matrix entries.
pub trait Field: Clone + PartialEq + Debug + Num + Neg<Output = Self> {}

impl<T> Field for T where T: Clone + PartialEq + Debug + Num + Neg<Output = T> {}

/// Floating point types used by the numerical routines.
pub trait Real:
    Field
    + Copy
    + Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Default
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` constant into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant representable in T")
}

/// Converts `T` into `f64` for reporting.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Complex constant from two `f64` parts.
#[inline]
pub fn clit<T: Real>(re: f64, im: f64) -> Complex<T> {
    Complex::new(lit(re), lit(im))
}

/// `i` in the scalar type.
#[inline]
pub fn imag_unit<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::one())
}

/// Complex value with `f64` parts, for serialization.
#[inline]
pub fn c64<T: Real>(z: Complex<T>) -> Complex<f64> {
    Complex::new(to_f64(z.re), to_f64(z.im))
}

/// Unit-modulus phase of `z`, or one when `z` vanishes.
#[inline]
pub fn phase<T: Real>(z: Complex<T>) -> Complex<T> {
    let r = z.norm();
    if r == T::zero() {
        Complex::new(T::one(), T::zero())
    } else {
        z / r
    }
}
