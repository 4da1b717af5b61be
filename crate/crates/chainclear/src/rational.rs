//! Exact rational arithmetic used for all currency amounts and fee levels.
//!
//! Every monetary quantity in this crate is a [`Rational`] (arbitrary-precision
//! ratio). Decimal strings from input files are converted exactly, so greedy
//! tie-breaks and conservation identities never hinge on floating-point noise.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Arbitrary-precision rational number.
pub type Rational = BigRational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseRationalError {
    #[error("empty numeric string")]
    Empty,
    #[error("invalid numeric string {0:?}: expected a decimal like \"5.825\" or a ratio like \"233/40\"")]
    Invalid(String),
    #[error("zero denominator in {0:?}")]
    ZeroDenominator(String),
}

/// Integer as a rational.
pub fn rat(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// `num / den` as a rational. Panics on zero denominator.
pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Parses a decimal string (`"5.825"`, `"-0.25"`) or a slash ratio (`"233/40"`)
/// into an exact rational.
pub fn parse_decimal(s: &str) -> Result<Rational, ParseRationalError> {
    let s = s.trim();
    if s.is_empty() {
        return Err(ParseRationalError::Empty);
    }
    if let Some((num, den)) = s.split_once('/') {
        let num: BigInt = num
            .trim()
            .parse()
            .map_err(|_| ParseRationalError::Invalid(s.to_string()))?;
        let den: BigInt = den
            .trim()
            .parse()
            .map_err(|_| ParseRationalError::Invalid(s.to_string()))?;
        if den.is_zero() {
            return Err(ParseRationalError::ZeroDenominator(s.to_string()));
        }
        return Ok(Rational::new(num, den));
    }

    let (sign, digits) = match s.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(ParseRationalError::Invalid(s.to_string()));
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit())
        || !frac_part.bytes().all(|b| b.is_ascii_digit())
    {
        return Err(ParseRationalError::Invalid(s.to_string()));
    }
    let mut numer: BigInt = if int_part.is_empty() {
        BigInt::zero()
    } else {
        int_part
            .parse()
            .map_err(|_| ParseRationalError::Invalid(s.to_string()))?
    };
    let mut denom = BigInt::one();
    for b in frac_part.bytes() {
        numer = numer * 10 + (b - b'0');
        denom *= 10;
    }
    Ok(Rational::new(numer * sign, denom))
}

/// Formats a rational as a decimal string with at most `max_dp` fractional
/// digits. Exact when the value terminates within `max_dp` digits; otherwise
/// rounded half away from zero.
pub fn format_decimal(r: &Rational, max_dp: usize) -> String {
    let negative = r.is_negative();
    let abs = r.abs();
    let mut scaled_num = abs.numer().clone();
    for _ in 0..max_dp {
        scaled_num *= 10;
    }
    // round(|r| * 10^max_dp), half away from zero
    let (q, rem) = num::Integer::div_rem(&scaled_num, abs.denom());
    let scaled = if &(rem * 2) >= abs.denom() { q + 1 } else { q };
    let digits = scaled.to_string();
    let (int_digits, frac_digits) = if digits.len() > max_dp {
        let (i, f) = digits.split_at(digits.len() - max_dp);
        (i.to_string(), f.to_string())
    } else {
        ("0".to_string(), format!("{digits:0>max_dp$}"))
    };
    let frac_trimmed = frac_digits.trim_end_matches('0');
    let sign = if negative && (int_digits != "0" || !frac_trimmed.is_empty()) {
        "-"
    } else {
        ""
    };
    if frac_trimmed.is_empty() {
        format!("{sign}{int_digits}")
    } else {
        format!("{sign}{int_digits}.{frac_trimmed}")
    }
}

/// Formats a rational as `"p/q"` (or a plain integer when the denominator is 1).
pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Nearest `f64` to the rational.
pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Positive part `max(r, 0)`.
pub fn positive_part(r: &Rational) -> Rational {
    if r.is_negative() {
        Rational::zero()
    } else {
        r.clone()
    }
}
