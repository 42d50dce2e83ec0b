use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Exact rational coefficient type.
pub type Rat = BigRational;

/// Builds the rational `num/den`.
pub fn rat(num: i64, den: i64) -> Rat {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Field of polynomial coefficients: exact rationals or floats.
pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
{
    fn from_i64(v: i64) -> Self;
    fn from_rat(v: &Rat) -> Self;
    fn to_f64(&self) -> f64;
    fn abs_val(&self) -> Self;

    fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_i64(num) / Self::from_i64(den)
    }
}

impl Scalar for f64 {
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn from_rat(v: &Rat) -> Self {
        ToPrimitive::to_f64(v).unwrap_or(f64::NAN)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn abs_val(&self) -> Self {
        self.abs()
    }
}

impl Scalar for Rat {
    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
    fn from_rat(v: &Rat) -> Self {
        v.clone()
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn abs_val(&self) -> Self {
        self.abs()
    }
}

/// Parses `"p/q"` or `"p"` into a rational.
pub fn parse_rat(s: &str) -> crate::Result<Rat> {
    let s = s.trim();
    let parse_int = |t: &str| {
        t.trim()
            .parse::<BigInt>()
            .map_err(|e| crate::Error::Parse(format!("bad rational `{s}`: {e}")))
    };
    match s.split_once('/') {
        Some((p, q)) => {
            let den = parse_int(q)?;
            if den.is_zero() {
                return Err(crate::Error::Parse(format!("zero denominator in `{s}`")));
            }
            Ok(BigRational::new(parse_int(p)?, den))
        }
        None => Ok(BigRational::from_integer(parse_int(s)?)),
    }
}

/// Formats a rational as `p/q` (or `p` when integral).
pub fn format_rat(r: &Rat) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Generalized binomial coefficient `binom(a, j)` for rational `a`.
pub fn binom_rat(a: &Rat, j: u32) -> Rat {
    let mut acc = Rat::one();
    for i in 0..j {
        acc = acc * (a - Rat::from_i64(i as i64)) / Rat::from_i64(i as i64 + 1);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format() {
        assert_eq!(parse_rat("3/6").unwrap(), rat(1, 2));
        assert_eq!(parse_rat(" -4 ").unwrap(), rat(-4, 1));
        assert_eq!(format_rat(&rat(-2, 4)), "-1/2");
        assert_eq!(format_rat(&rat(6, 3)), "2");
        assert!(parse_rat("1/0").is_err());
        assert!(parse_rat("x").is_err());
    }

    #[test]
    fn binomial_half() {
        // (1+u)^{1/2} = 1 + u/2 - u^2/8 + u^3/16
        let half = rat(1, 2);
        assert_eq!(binom_rat(&half, 0), rat(1, 1));
        assert_eq!(binom_rat(&half, 1), rat(1, 2));
        assert_eq!(binom_rat(&half, 2), rat(-1, 8));
        assert_eq!(binom_rat(&half, 3), rat(1, 16));
    }
}
