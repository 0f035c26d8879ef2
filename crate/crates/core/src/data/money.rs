use std::fmt;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// An amount of money in integer minor units (cents, grosz).
///
/// Serialized as a major-unit number so that metadata files read naturally
/// (`"budget": 8000000`), while all arithmetic stays in integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Money(i64);

const MINOR_PER_MAJOR: i64 = 100;

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn from_minor(minor: i64) -> Self {
        Money(minor)
    }

    pub fn from_major(major: i64) -> Self {
        Money(major * MINOR_PER_MAJOR)
    }

    pub fn minor(self) -> i64 {
        self.0
    }

    /// Value in major units as a float, for feature engineering and display.
    pub fn as_major_f64(self) -> f64 {
        self.0 as f64 / MINOR_PER_MAJOR as f64
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn checked_add(self, other: Money) -> Option<Money> {
        self.0.checked_add(other.0).map(Money)
    }

    pub fn checked_sub(self, other: Money) -> Option<Money> {
        self.0.checked_sub(other.0).map(Money)
    }
}

impl std::ops::Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl std::ops::Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl std::iter::Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        Money(iter.map(|m| m.0).sum())
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let major = abs / MINOR_PER_MAJOR as u64;
        let minor = abs % MINOR_PER_MAJOR as u64;
        if minor == 0 {
            write!(f, "{sign}{major}")
        } else {
            write!(f, "{sign}{major}.{minor:02}")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid amount {0:?}: expected a decimal number with at most two fractional digits")]
pub struct ParseMoneyError(pub String);

impl FromStr for Money {
    type Err = ParseMoneyError;

    /// Parses `"1500"`, `"1500.5"`, `"1500.50"` or `"-3"`. Thousands separators
    /// are not accepted here; CSV cost columns are plain numbers.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseMoneyError(s.to_string());
        let t = s.trim();
        let (neg, body) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() || !int_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        if frac_part.len() > 2 || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            // Allow trailing zeros beyond two digits ("12.500").
            let trimmed = frac_part.trim_end_matches('0');
            if trimmed.len() > 2 || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
                return Err(err());
            }
        }
        let major: i64 = int_part.parse().map_err(|_| err())?;
        let frac_digits: String = frac_part.chars().take(2).collect();
        let minor_frac: i64 = match frac_digits.len() {
            0 => 0,
            1 => frac_digits.parse::<i64>().map_err(|_| err())? * 10,
            _ => frac_digits.parse().map_err(|_| err())?,
        };
        let value = major
            .checked_mul(MINOR_PER_MAJOR)
            .and_then(|v| v.checked_add(minor_frac))
            .ok_or_else(err)?;
        Ok(Money(if neg { -value } else { value }))
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.0 % MINOR_PER_MAJOR == 0 {
            serializer.serialize_i64(self.0 / MINOR_PER_MAJOR)
        } else {
            serializer.serialize_f64(self.as_major_f64())
        }
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct MoneyVisitor;

        impl Visitor<'_> for MoneyVisitor {
            type Value = Money;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an amount in major currency units")
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Money, E> {
                v.checked_mul(MINOR_PER_MAJOR)
                    .map(Money)
                    .ok_or_else(|| E::custom("amount overflows"))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Money, E> {
                i64::try_from(v)
                    .map_err(|_| E::custom("amount overflows"))
                    .and_then(|v| self.visit_i64(v))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Money, E> {
                if !v.is_finite() {
                    return Err(E::custom("amount must be finite"));
                }
                Ok(Money((v * MINOR_PER_MAJOR as f64).round() as i64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Money, E> {
                v.parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(MoneyVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_integer_and_fractional_amounts() {
        assert_eq!("1500".parse::<Money>().unwrap(), Money::from_minor(150_000));
        assert_eq!("1500.5".parse::<Money>().unwrap(), Money::from_minor(150_050));
        assert_eq!(" 12.05 ".parse::<Money>().unwrap(), Money::from_minor(1205));
        assert_eq!("12.500".parse::<Money>().unwrap(), Money::from_minor(1250));
        assert!("12.505".parse::<Money>().is_err());
        assert!("1,500".parse::<Money>().is_err());
        assert!("abc".parse::<Money>().is_err());
        assert!("".parse::<Money>().is_err());
    }

    #[test]
    fn display_round_trips() {
        for s in ["0", "1500", "1500.50", "-3", "7.05"] {
            let m: Money = s.parse().unwrap();
            assert_eq!(m.to_string().parse::<Money>().unwrap(), m);
        }
        assert_eq!(Money::from_minor(150_050).to_string(), "1500.50");
    }

    #[test]
    fn json_uses_major_units() {
        let m = Money::from_major(8_000_000);
        assert_eq!(serde_json::to_string(&m).unwrap(), "8000000");
        let back: Money = serde_json::from_str("4500000.25").unwrap();
        assert_eq!(back, Money::from_minor(450_000_025));
        let from_str: Money = serde_json::from_str("\"12.3\"").unwrap();
        assert_eq!(from_str, Money::from_minor(1230));
    }
}
