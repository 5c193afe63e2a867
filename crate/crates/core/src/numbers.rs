//! Exact scalars: arbitrary-precision rationals and half-integer tree orders.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Reduced fraction of arbitrary-precision integers with positive denominator.
pub type Rational = num_rational::BigRational;

pub fn rational(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn factorial(n: usize) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

pub fn to_f64(r: &Rational) -> f64 {
    // Ratio of two large integers can overflow individually; fall back to
    // shifting when either side is out of range.
    match (r.numer().to_f64(), r.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => {
            let bits = r.numer().bits().max(r.denom().bits()) as i64 - 900;
            let shift = bits.max(0) as u64;
            let n = (r.numer() >> shift).to_f64().unwrap_or(0.0);
            let d = (r.denom() >> shift).to_f64().unwrap_or(1.0);
            n / d
        }
    }
}

/// Parses `"3"`, `"-7/2"` or a finite decimal like `"0.25"` into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let t = s.trim();
    let err = |message: &str| Error::Parse {
        input: s.to_string(),
        pos: 0,
        message: message.to_string(),
    };
    if let Some((n, d)) = t.split_once('/') {
        let n = BigInt::from_str(n.trim()).map_err(|_| err("bad numerator"))?;
        let d = BigInt::from_str(d.trim()).map_err(|_| err("bad denominator"))?;
        if d.is_zero() {
            return Err(err("zero denominator"));
        }
        return Ok(Rational::new(n, d));
    }
    if let Some((whole, frac)) = t.split_once('.') {
        let negative = whole.trim_start().starts_with('-');
        let digits = frac.len() as u32;
        let w = if whole.is_empty() || whole == "-" || whole == "+" {
            BigInt::zero()
        } else {
            BigInt::from_str(whole).map_err(|_| err("bad decimal"))?
        };
        let f = if frac.is_empty() {
            BigInt::zero()
        } else {
            if !frac.chars().all(|c| c.is_ascii_digit()) {
                return Err(err("bad decimal"));
            }
            BigInt::from_str(frac).map_err(|_| err("bad decimal"))?
        };
        let scale = BigInt::from(10).pow(digits);
        let mag = w.abs() * &scale + f;
        let signed = if negative { -mag } else { mag };
        return Ok(Rational::new(signed, scale));
    }
    BigInt::from_str(t)
        .map(Rational::from_integer)
        .map_err(|_| err("expected an integer, fraction or decimal"))
}

/// Tree order ρ stored as `2ρ`, so that half-integers are exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct HalfInt {
    twice: u32,
}

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt { twice: 0 };
    pub const HALF: HalfInt = HalfInt { twice: 1 };
    pub const ONE: HalfInt = HalfInt { twice: 2 };

    pub const fn from_twice(twice: u32) -> Self {
        HalfInt { twice }
    }

    pub const fn from_int(n: u32) -> Self {
        HalfInt { twice: 2 * n }
    }

    pub const fn twice(self) -> u32 {
        self.twice
    }

    pub fn to_f64(self) -> f64 {
        self.twice as f64 / 2.0
    }

    pub fn to_rational(self) -> Rational {
        rational(self.twice as i64, 2)
    }
}

impl std::ops::Add for HalfInt {
    type Output = HalfInt;
    fn add(self, rhs: HalfInt) -> HalfInt {
        HalfInt {
            twice: self.twice + rhs.twice,
        }
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.twice.is_multiple_of(2) {
            write!(f, "{}", self.twice / 2)
        } else {
            write!(f, "{}/2", self.twice)
        }
    }
}

impl FromStr for HalfInt {
    type Err = Error;

    /// Accepts `"3"`, `"7/2"`, `"3.5"`; rejects anything that is not a
    /// non-negative multiple of one half.
    fn from_str(s: &str) -> Result<Self> {
        let r = parse_rational(s)?;
        let twice = r * int(2);
        if !twice.is_integer() || twice.is_negative() {
            return Err(Error::Parse {
                input: s.to_string(),
                pos: 0,
                message: "expected a non-negative multiple of 1/2".into(),
            });
        }
        let twice = twice
            .to_integer()
            .to_u32()
            .ok_or_else(|| Error::InvalidArgument(format!("order {s} too large")))?;
        Ok(HalfInt { twice })
    }
}
