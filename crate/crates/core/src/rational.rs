//! Exact rational numbers.
//!
//! Every probability, reward, risk level and perturbation in this crate is a
//! [`Rational`] backed by arbitrary-precision integers. Nothing on the core
//! paths is ever rounded.

use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::Error;

pub type Rational = num_rational::BigRational;

/// `n / d` as an exact rational. Panics when `d == 0`.
pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn zero() -> Rational {
    Rational::zero()
}

pub fn one() -> Rational {
    Rational::one()
}

pub fn half(x: &Rational) -> Rational {
    x / int(2)
}

pub fn midpoint(a: &Rational, b: &Rational) -> Rational {
    (a + b) / int(2)
}

pub fn min_ref<'a>(a: &'a Rational, b: &'a Rational) -> &'a Rational {
    if b < a {
        b
    } else {
        a
    }
}

pub fn max_ref<'a>(a: &'a Rational, b: &'a Rational) -> &'a Rational {
    if b > a {
        b
    } else {
        a
    }
}

pub fn clamp(x: Rational, lo: &Rational, hi: &Rational) -> Rational {
    if &x < lo {
        lo.clone()
    } else if &x > hi {
        hi.clone()
    } else {
        x
    }
}

/// Lossy conversion for reporting and float comparisons only.
pub fn to_f64(x: &Rational) -> f64 {
    x.to_f64().unwrap_or_else(|| {
        // numerator/denominator too large for a direct conversion
        let n = x.numer().to_f64().unwrap_or(f64::NAN);
        let d = x.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

/// Canonical text form: `p` for integers, `p/q` otherwise.
pub fn format(x: &Rational) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Parses `"p/q"`, integers, and decimal strings (`"-0.375"`, `"1.5e-2"`)
/// into exact rationals. Decimal input is converted digit by digit, never via
/// binary floating point.
pub fn parse(text: &str) -> Result<Rational, Error> {
    let s = text.trim();
    let bad = || Error::Parse(format!("not a rational number: {text:?}"));
    if s.is_empty() {
        return Err(bad());
    }
    if let Some((n, d)) = s.split_once('/') {
        let n = BigInt::from_str(n.trim()).map_err(|_| bad())?;
        let d = BigInt::from_str(d.trim()).map_err(|_| bad())?;
        if d.is_zero() {
            return Err(Error::Parse(format!("zero denominator in {text:?}")));
        }
        return Ok(Rational::new(n, d));
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(i) => {
            let e: i64 = s[i + 1..].parse().map_err(|_| bad())?;
            (&s[..i], e)
        }
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (whole, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if whole.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    if !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all_digits = format!("{whole}{frac}");
    let numer = BigInt::from_str(if all_digits.is_empty() { "0" } else { &all_digits })
        .map_err(|_| bad())?;
    let scale = exponent - frac.len() as i64;
    let ten = BigInt::from(10);
    let mut value = Rational::from_integer(numer);
    if scale >= 0 {
        value *= Rational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        value /= Rational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Ok(if negative { -value } else { value })
}

pub fn is_in_unit_interval(x: &Rational) -> bool {
    !x.is_negative() && x <= &one()
}

/// Serde adapter storing a [`Rational`] as its canonical string.
pub mod serde_str {
    use super::{format, parse, Rational};
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format(x))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let raw = RationalText::deserialize(d)?;
        match raw {
            RationalText::Text(t) => parse(&t).map_err(D::Error::custom),
            RationalText::Int(i) => Ok(super::int(i)),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum RationalText {
        Text(String),
        Int(i64),
    }
}

/// Same as [`serde_str`] for `Vec<Rational>`.
pub mod serde_str_vec {
    use super::{format, parse, Rational};
    use serde::{de::Error as _, ser::SerializeSeq, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(xs: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(xs.len()))?;
        for x in xs {
            seq.serialize_element(&format(x))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        raw.iter()
            .map(|t| parse(t).map_err(D::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_integers_and_decimals() {
        assert_eq!(parse("3/4").unwrap(), rat(3, 4));
        assert_eq!(parse("-6/8").unwrap(), rat(-3, 4));
        assert_eq!(parse("600").unwrap(), int(600));
        assert_eq!(parse("0.375").unwrap(), rat(3, 8));
        assert_eq!(parse("-0.6875").unwrap(), rat(-11, 16));
        assert_eq!(parse(".5").unwrap(), rat(1, 2));
        assert_eq!(parse("1.5e-2").unwrap(), rat(3, 200));
        assert_eq!(parse("2E3").unwrap(), int(2000));
        assert_eq!(parse("0.1").unwrap(), rat(1, 10));
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["", "abc", "1/0", "1..2", "--1", "1/x", "."] {
            assert!(parse(bad).is_err(), "{bad} should not parse");
        }
    }

    #[test]
    fn formats_canonically() {
        assert_eq!(format(&rat(6, 8)), "3/4");
        assert_eq!(format(&rat(-4, 2)), "-2");
        assert_eq!(format(&zero()), "0");
    }
}
