//! Exact rational helpers shared by the verification layer.

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact rational used for every identity check.
pub type Q = BigRational;

pub fn q(num: i64, den: i64) -> Q {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn qi(v: i64) -> Q {
    BigRational::from_integer(BigInt::from(v))
}

pub fn from_ratio(r: Ratio<i64>) -> Q {
    q(*r.numer(), *r.denom())
}

pub fn to_f64(v: &Q) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// `base^exp` for a non-negative integer exponent.
pub fn pow(base: &Q, exp: usize) -> Q {
    let mut acc = Q::one();
    for _ in 0..exp {
        acc *= base;
    }
    acc
}

/// Parses `"2/3"`, `"-1/2"`, `"3"` or a terminating decimal such as `"0.25"`.
pub fn parse_ratio(s: &str) -> Result<Ratio<i64>> {
    let s = s.trim();
    let bad = || Error::InvalidInput(format!("cannot parse rational from {s:?}"));
    if let Some((a, b)) = s.split_once('/') {
        let n: i64 = a.trim().parse().map_err(|_| bad())?;
        let d: i64 = b.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(Ratio::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.len() > 15 || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let neg = int.starts_with('-');
        let ip: i64 = if int.is_empty() || int == "-" { 0 } else { int.parse().map_err(|_| bad())? };
        let den = 10i64.pow(frac.len() as u32);
        let fp: i64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        let num = ip.abs() * den + fp;
        return Ok(Ratio::new(if neg { -num } else { num }, den));
    }
    let n: i64 = s.parse().map_err(|_| bad())?;
    Ok(Ratio::from_integer(n))
}

pub fn is_in_open_unit(r: &Q) -> bool {
    r.is_positive() && r < &Q::one() && !r.is_zero()
}
