//! Exact currency arithmetic.
//!
//! Cost figures feed reports that are compared digit-for-digit, so amounts are
//! kept as exact rationals instead of binary floats. Values are USD.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};

use num_rational::Ratio;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MoneyError {
    #[error("invalid decimal amount {0:?}")]
    InvalidDecimal(String),
}

/// An exact USD amount.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Money(Ratio<i128>);

impl Money {
    pub const ZERO: Money = Money(Ratio::new_raw(0, 1));

    /// Parses a plain decimal literal such as `"0.002"` or `"-1.50"`.
    pub fn parse(s: &str) -> Result<Money, MoneyError> {
        let t = s.trim();
        let err = || MoneyError::InvalidDecimal(s.to_string());
        let (sign, body) = match t.strip_prefix('-') {
            Some(rest) => (-1i128, rest),
            None => (1i128, t.strip_prefix('+').unwrap_or(t)),
        };
        if body.is_empty() {
            return Err(err());
        }
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(err());
        }
        let digits: String = format!("{int_part}{frac_part}");
        if !digits.chars().all(|c| c.is_ascii_digit()) {
            return Err(err());
        }
        let numer: i128 = digits.parse().map_err(|_| err())?;
        let denom = 10i128.checked_pow(frac_part.len() as u32).ok_or_else(err)?;
        Ok(Money(Ratio::new(sign * numer, denom)))
    }

    pub fn from_int(n: i128) -> Money {
        Money(Ratio::from_integer(n))
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    /// Multiplies by `numer / denom`, exactly.
    pub fn scale(&self, numer: i128, denom: i128) -> Money {
        Money(self.0 * Ratio::new(numer, denom))
    }

    /// Renders as a decimal string, exact when the value terminates within
    /// `max_dp` fractional digits, otherwise rounded half-up at `max_dp`.
    /// Trailing zeros are trimmed.
    pub fn to_decimal_string(&self, max_dp: u32) -> String {
        let s = self.render_fixed(max_dp);
        if !s.contains('.') {
            return s;
        }
        let trimmed = s.trim_end_matches('0').trim_end_matches('.');
        if trimmed.is_empty() || trimmed == "-" {
            "0".to_string()
        } else {
            trimmed.to_string()
        }
    }

    /// Renders with exactly `dp` fractional digits, rounding half away from zero.
    pub fn render_fixed(&self, dp: u32) -> String {
        let scale = 10i128.pow(dp);
        let scaled = self.0 * Ratio::from_integer(scale);
        let rounded = round_half_up(scaled);
        let neg = rounded < 0;
        let abs = rounded.unsigned_abs();
        let int = abs / scale.unsigned_abs();
        let frac = abs % scale.unsigned_abs();
        let sign = if neg { "-" } else { "" };
        if dp == 0 {
            format!("{sign}{int}")
        } else {
            format!("{sign}{int}.{frac:0width$}", width = dp as usize)
        }
    }

    /// The amount expressed in cents (USD × 100).
    pub fn to_cents(&self) -> Money {
        self.scale(100, 1)
    }
}

/// Rounds a rational to the nearest integer, half away from zero.
fn round_half_up(r: Ratio<i128>) -> i128 {
    let two = Ratio::from_integer(2i128);
    let shifted = r * two;
    let numer = *shifted.numer();
    let denom = *shifted.denom();
    if numer >= 0 {
        (numer + denom) / (2 * denom)
    } else {
        -((-numer + denom) / (2 * denom))
    }
}

/// Cost of `total_tokens` at a per-1,000-token price, exactly.
pub fn estimate_cost(total_tokens: u64, price_per_1k: Money) -> Money {
    price_per_1k.scale(total_tokens as i128, 1000)
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl Default for Money {
    fn default() -> Self {
        Money::ZERO
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_decimal_string(12))
    }
}

impl Zero for Money {
    fn zero() -> Self {
        Money::ZERO
    }
    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_decimal_string(12))
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Money, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Str(String),
            Int(i64),
            Float(f64),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Str(s) => Money::parse(&s).map_err(serde::de::Error::custom),
            Repr::Int(n) => Ok(Money::from_int(n as i128)),
            // The shortest round-trip representation recovers the decimal the
            // config author wrote for any ordinary price literal.
            Repr::Float(f) => Money::parse(&format!("{f}")).map_err(serde::de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_decimal_literals() {
        assert_eq!(Money::parse("0.002").unwrap(), Money(Ratio::new(2, 1000)));
        assert_eq!(Money::parse("2").unwrap(), Money::from_int(2));
        assert_eq!(Money::parse(".5").unwrap(), Money(Ratio::new(1, 2)));
        assert_eq!(Money::parse("-1.50").unwrap(), Money(Ratio::new(-3, 2)));
        assert!(Money::parse("").is_err());
        assert!(Money::parse("1.2.3").is_err());
        assert!(Money::parse("abc").is_err());
    }

    #[test]
    fn thousand_tokens_at_standard_price_costs_a_fifth_of_a_cent() {
        let price = Money::parse("0.002").unwrap();
        let cost = estimate_cost(1000, price);
        assert_eq!(cost.to_decimal_string(12), "0.002");
    }

    #[test]
    fn zero_tokens_cost_nothing() {
        let price = Money::parse("0.002").unwrap();
        assert_eq!(estimate_cost(0, price), Money::ZERO);
    }

    #[test]
    fn per_title_cents_render_with_four_places() {
        // 121 tokens at 0.002/1K is 0.000242 USD = 0.0242 cents.
        let price = Money::parse("0.002").unwrap();
        let cost = estimate_cost(121, price);
        assert_eq!(cost.to_decimal_string(12), "0.000242");
        assert_eq!(cost.to_cents().render_fixed(4), "0.0242");
    }

    #[test]
    fn fixed_rendering_pads_and_rounds() {
        assert_eq!(Money::parse("1").unwrap().render_fixed(2), "1.00");
        assert_eq!(Money::parse("0.00005").unwrap().render_fixed(4), "0.0001");
        assert_eq!(Money::parse("0.00004").unwrap().render_fixed(4), "0.0000");
        assert_eq!(Money::parse("-0.125").unwrap().render_fixed(2), "-0.13");
    }

    #[test]
    fn division_is_exactly_invertible() {
        let total = estimate_cost(484, Money::parse("0.002").unwrap());
        let per_title = total.scale(1, 3);
        assert_eq!(per_title.scale(3, 1), total);
    }

    proptest! {
        #[test]
        fn cost_is_linear_in_tokens(a in 0u64..1_000_000, b in 0u64..1_000_000) {
            let price = Money::parse("0.002").unwrap();
            let sum = estimate_cost(a, price) + estimate_cost(b, price);
            prop_assert_eq!(sum, estimate_cost(a + b, price));
        }

        #[test]
        fn decimal_strings_round_trip(numer in 0i64..10_000_000, dp in 0u32..6) {
            let denom = 10i128.pow(dp);
            let m = Money(Ratio::new(numer as i128, denom));
            let rendered = m.to_decimal_string(12);
            prop_assert_eq!(Money::parse(&rendered).unwrap(), m);
        }
    }
}
