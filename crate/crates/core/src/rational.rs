//! Exact rational numbers for breakpoints, interval endpoints and affine map
//! coefficients.

use std::fmt;

use num_rational::Ratio;
use num_traits::{Signed, Zero};

/// Exact rational used for every endpoint and breakpoint.
pub type Rational = Ratio<i128>;

/// Shorthand constructor, `q(1, 3)` is one third.
pub fn q(numer: i128, denom: i128) -> Rational {
    Ratio::new(numer, denom)
}

pub fn int(n: i128) -> Rational {
    Ratio::from_integer(n)
}

/// Same order as `Ord`, by cross-multiplication when it cannot overflow.
pub fn cmp_q(a: &Rational, b: &Rational) -> std::cmp::Ordering {
    if a.denom() == b.denom() {
        return a.numer().cmp(b.numer());
    }
    match (a.numer().checked_mul(*b.denom()), b.numer().checked_mul(*a.denom())) {
        (Some(x), Some(y)) => x.cmp(&y),
        _ => a.cmp(b),
    }
}

/// Nearest `f64` to the rational. Numerators and denominators in this crate
/// stay far below 2^53, so the quotient of the two conversions is accurate to
/// a couple of ulps.
pub fn to_f64(r: &Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Parses `"3"`, `"-1/3"`, `"0.125"` or `"2.5e-3"` into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational, ParseRationalError> {
    let t = s.trim();
    let err = || ParseRationalError(s.to_string());
    if t.is_empty() {
        return Err(err());
    }
    if let Some((n, d)) = t.split_once('/') {
        let n: i128 = n.trim().parse().map_err(|_| err())?;
        let d: i128 = d.trim().parse().map_err(|_| err())?;
        if d == 0 {
            return Err(err());
        }
        return Ok(Ratio::new(n, d));
    }
    let (mantissa, exponent) = match t.find(['e', 'E']) {
        Some(i) => {
            let e: i32 = t[i + 1..].parse().map_err(|_| err())?;
            (&t[..i], e)
        }
        None => (t, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (whole, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if whole.is_empty() && frac.is_empty() {
        return Err(err());
    }
    if !whole.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
        return Err(err());
    }
    let scale = frac.len() as i32 - exponent;
    if scale.abs() > 30 {
        return Err(err());
    }
    let all: String = format!("{whole}{frac}");
    let mut numer: i128 = if all.is_empty() { 0 } else { all.parse().map_err(|_| err())? };
    if neg {
        numer = -numer;
    }
    let value = if scale >= 0 {
        Ratio::new(numer, 10i128.pow(scale as u32))
    } else {
        let factor = 10i128.checked_pow((-scale) as u32).ok_or_else(err)?;
        Ratio::from_integer(numer.checked_mul(factor).ok_or_else(err)?)
    };
    Ok(value)
}

/// Canonical text form: `"3"` for integers, `"-1/3"` otherwise.
pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseRationalError(pub String);

impl fmt::Display for ParseRationalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "not an exact rational: {:?}", self.0)
    }
}

impl std::error::Error for ParseRationalError {}

pub(crate) fn abs(r: &Rational) -> Rational {
    r.abs()
}

pub(crate) fn is_zero(r: &Rational) -> bool {
    r.is_zero()
}
