//! Exact rational scalars and their text form.
//!
//! Every correctness-bearing quantity in this crate (values, budgets, prices,
//! shares) is a [`Rational`]. Floating point appears only inside the random
//! instance generator, and every draw is converted to an exact rational before
//! it touches the model.

use num::bigint::BigInt;
use num::{BigRational, One, Signed, Zero};

use crate::error::{Error, Result};

/// Arbitrary-precision rational, always kept in lowest terms with a positive
/// denominator (guaranteed by `num`).
pub type Rational = BigRational;

/// Build a rational from a small integer pair. Panics on a zero denominator;
/// intended for literals in code and tests.
pub fn rat(num: i64, den: i64) -> Rational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Parse a numeric literal, exactly.
///
/// Accepts fraction syntax (`"79/10"`, `"-3/8"`), integer syntax (`"5"`) and
/// decimal syntax (`"7.9"`, `"0.505"`), each parsed with no rounding:
/// `"7.9"` becomes `79/10`.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let s = text.trim();
    if s.is_empty() {
        return Err(Error::Parse("empty numeric literal".into()));
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad numerator in {s:?}")))?;
        let d: BigInt = den
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad denominator in {s:?}")))?;
        if d.is_zero() {
            return Err(Error::Parse(format!("zero denominator in {s:?}")));
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((int_part, frac_part)) = s.split_once('.') {
        let sign = if int_part.trim_start().starts_with('-') {
            -BigInt::one()
        } else {
            BigInt::one()
        };
        let int_digits = int_part.trim_start_matches(['+', '-']);
        if !int_digits.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
            || frac_part.is_empty()
        {
            return Err(Error::Parse(format!("bad decimal literal {s:?}")));
        }
        let int_val: BigInt = if int_digits.is_empty() {
            BigInt::zero()
        } else {
            int_digits
                .parse()
                .map_err(|_| Error::Parse(format!("bad decimal literal {s:?}")))?
        };
        let frac_val: BigInt = frac_part
            .parse()
            .map_err(|_| Error::Parse(format!("bad decimal literal {s:?}")))?;
        let scale = BigInt::from(10u32).pow(frac_part.len() as u32);
        let magnitude = int_val * &scale + frac_val;
        return Ok(BigRational::new(sign * magnitude, scale));
    }
    let n: BigInt = s
        .parse()
        .map_err(|_| Error::Parse(format!("bad integer literal {s:?}")))?;
    Ok(BigRational::from(n))
}

/// Canonical text form: `"num/den"` in lowest terms, or plain `"num"` when the
/// denominator is 1. [`parse_rational`] round-trips this exactly.
pub fn format_rational(x: &Rational) -> String {
    if x.denom().is_one() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Crude magnitude estimate for display only; never used in comparisons.
pub fn to_f64_lossy(x: &Rational) -> f64 {
    let n = x.numer();
    let d = x.denom();
    num_to_f64(n) / num_to_f64(d)
}

fn num_to_f64(x: &BigInt) -> f64 {
    // BigInt -> f64 via string is fine for display purposes.
    x.to_string().parse().unwrap_or(if x.is_negative() {
        f64::NEG_INFINITY
    } else {
        f64::INFINITY
    })
}

/// serde adapters that write rationals as canonical strings.
pub mod serde_rat {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::{format_rational, parse_rational, Rational};

    pub fn serialize<S: Serializer>(x: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(x))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Rational, D::Error> {
        let text = String::deserialize(d)?;
        parse_rational(&text).map_err(serde::de::Error::custom)
    }
}

/// serde adapters for `Vec<Rational>`.
pub mod serde_rat_vec {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::{format_rational, parse_rational, Rational};

    pub fn serialize<S: Serializer>(xs: &[Rational], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(xs.iter().map(format_rational))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<Rational>, D::Error> {
        let texts = Vec::<String>::deserialize(d)?;
        texts
            .iter()
            .map(|t| parse_rational(t).map_err(serde::de::Error::custom))
            .collect()
    }
}

/// serde adapters for `Option<Rational>`.
pub mod serde_rat_opt {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::{format_rational, parse_rational, Rational};

    pub fn serialize<S: Serializer>(
        x: &Option<Rational>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        match x {
            Some(v) => s.serialize_some(&format_rational(v)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Option<Rational>, D::Error> {
        let text = Option::<String>::deserialize(d)?;
        text.map(|t| parse_rational(&t).map_err(serde::de::Error::custom))
            .transpose()
    }
}
