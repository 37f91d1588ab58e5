//! Exact currency arithmetic.
//!
//! Currency is held as a signed count of 10^-18 units so that settlement
//! conservation can be asserted with `==`. Gas is an integer unit count.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Gas units.
pub type Gas = u64;

/// Number of fractional decimal digits carried by [`Amount`].
pub const DECIMALS: u32 = 18;

const SCALE: i128 = 1_000_000_000_000_000_000;

/// A fixed-point currency amount with 18 fractional digits.
///
/// Also used for per-gas prices, since `price * gas` stays exact.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Amount(i128);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AmountParseError {
    #[error("empty amount")]
    Empty,
    #[error("invalid amount `{0}`")]
    Invalid(String),
    #[error("amount `{0}` has more than 18 fractional digits")]
    TooPrecise(String),
    #[error("amount `{0}` is out of range")]
    Overflow(String),
}

impl Amount {
    pub const ZERO: Amount = Amount(0);

    /// Builds an amount from its raw 10^-18 unit count.
    pub const fn from_atto(atto: i128) -> Self {
        Amount(atto)
    }

    pub const fn atto(self) -> i128 {
        self.0
    }

    /// Whole currency units.
    pub const fn from_int(units: i64) -> Self {
        Amount(units as i128 * SCALE)
    }

    /// Rounds an `f64` to the nearest representable amount.
    ///
    /// Returns `None` for non-finite or out of range inputs.
    pub fn from_f64(value: f64) -> Option<Self> {
        if !value.is_finite() {
            return None;
        }
        // Shortest round-trip rendering, so that e.g. 0.1 maps to exactly 0.1.
        let parsed: Amount = value.to_string().parse().ok().or_else(|| {
            let scaled = (value * SCALE as f64).round();
            if scaled.abs() < i128::MAX as f64 {
                Some(Amount(scaled as i128))
            } else {
                None
            }
        })?;
        Some(parsed)
    }

    pub fn to_f64(self) -> f64 {
        let whole = self.0 / SCALE;
        let frac = self.0 % SCALE;
        whole as f64 + frac as f64 / SCALE as f64
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn abs(self) -> Self {
        Amount(self.0.abs())
    }

    /// `self * gas`, exact.
    pub fn mul_gas(self, gas: Gas) -> Self {
        Amount(self.0.checked_mul(gas as i128).expect("amount * gas overflow"))
    }

    /// `self * num / den`, truncated toward zero.
    ///
    /// Panics if `den == 0`.
    pub fn mul_div(self, num: Gas, den: Gas) -> Self {
        assert!(den > 0, "mul_div by zero");
        let product = self.0.checked_mul(num as i128).expect("amount * gas overflow");
        Amount(product / den as i128)
    }

    /// Rounds toward zero to `digits` fractional digits.
    pub fn truncate_to(self, digits: u32) -> Self {
        if digits >= DECIMALS {
            return self;
        }
        let unit = 10i128.pow(DECIMALS - digits);
        Amount(self.0 / unit * unit)
    }
}

impl Add for Amount {
    type Output = Amount;
    fn add(self, rhs: Amount) -> Amount {
        Amount(self.0.checked_add(rhs.0).expect("amount overflow"))
    }
}

impl AddAssign for Amount {
    fn add_assign(&mut self, rhs: Amount) {
        *self = *self + rhs;
    }
}

impl Sub for Amount {
    type Output = Amount;
    fn sub(self, rhs: Amount) -> Amount {
        Amount(self.0.checked_sub(rhs.0).expect("amount overflow"))
    }
}

impl SubAssign for Amount {
    fn sub_assign(&mut self, rhs: Amount) {
        *self = *self - rhs;
    }
}

impl Neg for Amount {
    type Output = Amount;
    fn neg(self) -> Amount {
        Amount(-self.0)
    }
}

impl Sum for Amount {
    fn sum<I: Iterator<Item = Amount>>(iter: I) -> Amount {
        iter.fold(Amount::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a Amount> for Amount {
    fn sum<I: Iterator<Item = &'a Amount>>(iter: I) -> Amount {
        iter.copied().sum()
    }
}

impl fmt::Display for Amount {
    /// Plain decimal, no exponent, trailing fractional zeros trimmed.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let magnitude = self.0.unsigned_abs();
        let whole = magnitude / SCALE as u128;
        let frac = magnitude % SCALE as u128;
        if frac == 0 {
            write!(f, "{sign}{whole}")
        } else {
            let digits = format!("{:018}", frac);
            write!(f, "{sign}{whole}.{}", digits.trim_end_matches('0'))
        }
    }
}

impl FromStr for Amount {
    type Err = AmountParseError;

    /// Accepts `123`, `-1.5`, `.25`, `7.5e-7`, `1E6`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(AmountParseError::Empty);
        }
        let invalid = || AmountParseError::Invalid(s.to_string());

        let (mantissa, exponent) = match s.find(['e', 'E']) {
            Some(pos) => {
                let exp: i32 = s[pos + 1..].parse().map_err(|_| invalid())?;
                (&s[..pos], exp)
            }
            None => (s, 0),
        };
        let (negative, mantissa) = match mantissa.as_bytes().first() {
            Some(b'-') => (true, &mantissa[1..]),
            Some(b'+') => (false, &mantissa[1..]),
            _ => (false, mantissa),
        };
        let (int_part, frac_part) = match mantissa.split_once('.') {
            Some((i, f)) => (i, f),
            None => (mantissa, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(invalid());
        }
        if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(invalid());
        }

        // digits * 10^(exponent - frac_len) * 10^18
        let digits = format!("{int_part}{frac_part}");
        let digits = digits.trim_start_matches('0');
        let shift = exponent as i64 - frac_part.len() as i64 + DECIMALS as i64;
        let mut value: i128 = 0;
        let overflow = || AmountParseError::Overflow(s.to_string());
        let significant = if shift < 0 {
            let drop = (-shift) as usize;
            let keep = digits.len().saturating_sub(drop);
            if digits[keep..].bytes().any(|b| b != b'0') {
                return Err(AmountParseError::TooPrecise(s.to_string()));
            }
            &digits[..keep]
        } else {
            digits
        };
        for b in significant.bytes() {
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add((b - b'0') as i128))
                .ok_or_else(overflow)?;
        }
        if shift > 0 && value != 0 {
            let factor = 10i128.checked_pow(shift as u32).ok_or_else(overflow)?;
            value = value.checked_mul(factor).ok_or_else(overflow)?;
        }
        Ok(Amount(if negative { -value } else { value }))
    }
}

impl Serialize for Amount {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Amount {
    /// Decimal strings are preferred; JSON numbers are accepted through their
    /// shortest decimal rendering.
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct AmountVisitor;

        impl Visitor<'_> for AmountVisitor {
            type Value = Amount;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a decimal amount as a string or number")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Amount, E> {
                v.parse().map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Amount, E> {
                Ok(Amount(v as i128 * SCALE))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Amount, E> {
                Ok(Amount(v as i128 * SCALE))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Amount, E> {
                Amount::from_f64(v).ok_or_else(|| E::custom(format!("invalid amount {v}")))
            }
        }

        deserializer.deserialize_any(AmountVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn amt(s: &str) -> Amount {
        s.parse().unwrap()
    }

    #[test]
    fn parses_plain_and_exponent_forms() {
        assert_eq!(amt("100"), Amount::from_int(100));
        assert_eq!(amt("7.5e-7").atto(), 750_000_000_000);
        assert_eq!(amt("0.00000075"), amt("7.5e-7"));
        assert_eq!(amt("1E6"), Amount::from_int(1_000_000));
        assert_eq!(amt("-1.25").atto(), -1_250_000_000_000_000_000);
        assert_eq!(amt(".5"), amt("0.5"));
        assert_eq!(amt("1e-18").atto(), 1);
    }

    #[test]
    fn rejects_garbage() {
        assert!("".parse::<Amount>().is_err());
        assert!("abc".parse::<Amount>().is_err());
        assert!("1.2.3".parse::<Amount>().is_err());
        assert!(".".parse::<Amount>().is_err());
        assert_eq!(
            "1e-19".parse::<Amount>(),
            Err(AmountParseError::TooPrecise("1e-19".into()))
        );
        assert!("1e40".parse::<Amount>().is_err());
    }

    #[test]
    fn display_trims_zeros() {
        assert_eq!(amt("10.0750").to_string(), "10.075");
        assert_eq!(amt("-0.5").to_string(), "-0.5");
        assert_eq!(Amount::ZERO.to_string(), "0");
        assert_eq!(Amount::from_atto(1).to_string(), "0.000000000000000001");
    }

    #[test]
    fn mul_div_truncates_toward_zero() {
        let third = Amount::from_int(1).mul_div(1, 3);
        assert_eq!(third.atto(), 333_333_333_333_333_333);
        assert_eq!((-Amount::from_int(1)).mul_div(1, 3).atto(), -333_333_333_333_333_333);
        assert_eq!(Amount::from_int(100).mul_div(100_000, 1_000_000), Amount::from_int(10));
    }

    #[test]
    fn from_f64_rounds_through_decimal() {
        assert_eq!(Amount::from_f64(0.1).unwrap(), amt("0.1"));
        assert_eq!(Amount::from_f64(7.5e-7).unwrap(), amt("7.5e-7"));
        assert!(Amount::from_f64(f64::NAN).is_none());
        assert!((Amount::from_f64(66.66666666666667).unwrap().to_f64() - 66.66666666666667).abs() < 1e-12);
    }

    #[test]
    fn serde_accepts_strings_and_numbers() {
        let a: Amount = serde_json::from_str("\"10.075\"").unwrap();
        assert_eq!(a, amt("10.075"));
        let b: Amount = serde_json::from_str("7.5e-7").unwrap();
        assert_eq!(b, amt("7.5e-7"));
        let c: Amount = serde_json::from_str("42").unwrap();
        assert_eq!(c, Amount::from_int(42));
        assert_eq!(serde_json::to_string(&a).unwrap(), "\"10.075\"");
    }

    proptest::proptest! {
        #[test]
        fn display_parse_round_trip(atto in proptest::prelude::any::<i64>()) {
            let a = Amount::from_atto(atto as i128 * 1_000);
            proptest::prop_assert_eq!(a.to_string().parse::<Amount>().unwrap(), a);
        }
    }
}
