use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// Exact rational coefficients.
pub type Rational = BigRational;

/// Coefficient field used by [`super::Polynomial`].
///
/// Two implementations exist: [`Rational`] for exact identity checks and `f64` for
/// estimation. Mixing them is a type error.
pub trait Coeff:
    Clone
    + PartialEq
    + Debug
    + Send
    + Sync
    + Zero
    + One
    + Neg<Output = Self>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + 'static
{
    const EXACT: bool;
    fn from_i64(v: i64) -> Self;
    fn to_f64(&self) -> f64;
    fn fmt_coeff(&self) -> String;
    fn parse_coeff(s: &str) -> Option<Self>;
}

impl Coeff for f64 {
    const EXACT: bool = false;

    fn from_i64(v: i64) -> Self {
        v as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn fmt_coeff(&self) -> String {
        format!("{:?}", self)
    }

    fn parse_coeff(s: &str) -> Option<Self> {
        s.trim().parse().ok()
    }
}

impl Coeff for Rational {
    const EXACT: bool = true;

    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or_else(|| {
            // fall back through the exponent for huge numerators and denominators
            let n = self.numer().bits() as i64;
            let d = self.denom().bits() as i64;
            let shift = (n - d).clamp(-1000, 1000);
            let scaled = if shift >= 0 {
                self / BigRational::from_integer(BigInt::one() << shift as usize)
            } else {
                self * BigRational::from_integer(BigInt::one() << (-shift) as usize)
            };
            ToPrimitive::to_f64(&scaled).unwrap_or(0.0) * 2f64.powi(shift as i32)
        })
    }

    fn fmt_coeff(&self) -> String {
        self.to_string()
    }

    fn parse_coeff(s: &str) -> Option<Self> {
        let s = s.trim();
        match s.split_once('/') {
            Some((n, d)) => {
                let n: BigInt = n.trim().parse().ok()?;
                let d: BigInt = d.trim().parse().ok()?;
                if d.is_zero() {
                    None
                } else {
                    Some(BigRational::new(n, d))
                }
            }
            None => s.parse::<BigInt>().ok().map(BigRational::from_integer),
        }
    }
}

/// Builds the rational `n / d`.
pub fn rat(n: i64, d: i64) -> Rational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Converts a finite double to the exact rational it represents.
pub fn rat_from_f64(x: f64) -> Rational {
    BigRational::from_float(x).unwrap_or_else(BigRational::zero)
}
