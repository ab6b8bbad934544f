//! Exact rational number literals with surface-form preservation.
//!
//! Tool arguments and results are exact rationals internally, but the
//! surface string an author wrote ("15", "13.5", "2/3") is kept alongside
//! the value so that rendering round-trips byte-for-byte.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Magnitude cap on numerator/denominator, in bits. Exceeding it during
/// tool execution is reported as overflow rather than silently growing.
pub const RATIONAL_BIT_CAP: u64 = 256;

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum LiteralError {
    #[error("malformed number literal: {0:?}")]
    Malformed(String),
    #[error("zero denominator in literal: {0:?}")]
    ZeroDenominator(String),
}

/// An exact rational plus the surface string it was parsed from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NumberLiteral {
    value: BigRational,
    surface: String,
}

impl NumberLiteral {
    /// Parse an integer, decimal, or `a/b` fraction surface.
    pub fn parse(surface: &str) -> Result<Self, LiteralError> {
        let value = parse_rational(surface)?;
        Ok(Self {
            value,
            surface: surface.to_string(),
        })
    }

    /// Build a literal from a computed value, deriving a canonical surface:
    /// integers bare, otherwise the shortest exact decimal up to six places,
    /// otherwise a reduced `a/b` fraction.
    pub fn from_value(value: BigRational) -> Self {
        let surface = render_rational(&value);
        Self { value, surface }
    }

    pub fn from_int(n: i64) -> Self {
        Self::from_value(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn value(&self) -> &BigRational {
        &self.value
    }

    pub fn surface(&self) -> &str {
        &self.surface
    }

    /// Value equality, ignoring the surface form.
    pub fn value_eq(&self, other: &NumberLiteral) -> bool {
        self.value == other.value
    }

    /// Approximate float value, for tolerance-based comparisons only.
    pub fn to_f64(&self) -> f64 {
        use num_traits::ToPrimitive;
        let n = self.value.numer().to_f64().unwrap_or(f64::NAN);
        let d = self.value.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    }

    pub fn within_bit_cap(&self) -> bool {
        self.value.numer().magnitude().bits() <= RATIONAL_BIT_CAP
            && self.value.denom().magnitude().bits() <= RATIONAL_BIT_CAP
    }
}

impl fmt::Display for NumberLiteral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.surface)
    }
}

fn parse_rational(s: &str) -> Result<BigRational, LiteralError> {
    if s.is_empty() {
        return Err(LiteralError::Malformed(s.to_string()));
    }
    if let Some((num, den)) = s.split_once('/') {
        let n = parse_plain_int(num, s)?;
        let d = parse_plain_int(den, s)?;
        if d.is_zero() {
            return Err(LiteralError::ZeroDenominator(s.to_string()));
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(LiteralError::Malformed(s.to_string()));
        }
        let negative = whole.starts_with('-');
        let w = parse_plain_int(whole, s)?;
        let f = BigInt::from_str(frac).map_err(|_| LiteralError::Malformed(s.to_string()))?;
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let abs = w.abs() * &scale + f;
        let signed = if negative { -abs } else { abs };
        return Ok(BigRational::new(signed, scale));
    }
    Ok(BigRational::from_integer(parse_plain_int(s, s)?))
}

fn parse_plain_int(part: &str, whole: &str) -> Result<BigInt, LiteralError> {
    let digits = part.strip_prefix('-').unwrap_or(part);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(LiteralError::Malformed(whole.to_string()));
    }
    BigInt::from_str(part).map_err(|_| LiteralError::Malformed(whole.to_string()))
}

fn render_rational(value: &BigRational) -> String {
    if value.is_integer() {
        return value.numer().to_string();
    }
    // Shortest exact decimal with at most six places.
    let mut scaled = value.clone();
    let ten = BigRational::from_integer(BigInt::from(10));
    for places in 1..=6u32 {
        scaled *= &ten;
        if scaled.is_integer() {
            let digits = scaled.numer().abs().to_string();
            let places = places as usize;
            let sign = if value.is_negative() { "-" } else { "" };
            let padded = format!("{digits:0>width$}", width = places + 1);
            let split = padded.len() - places;
            return format!("{sign}{}.{}", &padded[..split], &padded[split..]);
        }
    }
    format!("{}/{}", value.numer(), value.denom())
}
