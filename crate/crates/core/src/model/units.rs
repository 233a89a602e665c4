use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ModelError;

/// Amount of funds in millisatoshi.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Amount(u64);

impl Amount {
    pub const ZERO: Amount = Amount(0);

    pub const fn from_msat(msat: u64) -> Self {
        Amount(msat)
    }

    pub fn from_sat(sat: u64) -> Self {
        Amount(sat * 1_000)
    }

    pub const fn msat(self) -> u64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Subtraction that refuses to go below zero.
    pub fn checked_sub(self, rhs: Amount) -> Result<Amount, ModelError> {
        self.0
            .checked_sub(rhs.0)
            .map(Amount)
            .ok_or(ModelError::Underflow { lhs: self, rhs })
    }

    pub fn saturating_sub(self, rhs: Amount) -> Amount {
        Amount(self.0.saturating_sub(rhs.0))
    }

    pub fn to_rational(self) -> BigRational {
        BigRational::from_integer(BigInt::from(self.0))
    }

    /// Rounds a non-negative rational half-up to the nearest msat.
    pub fn round_half_up(value: &BigRational) -> Amount {
        assert!(!value.is_negative(), "amounts are non-negative");
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        let rounded = (value + half).floor().to_integer();
        Amount(rounded.to_u64().expect("amount exceeds u64 msat"))
    }

    /// Smallest msat amount that is at least `value`.
    pub fn ceil(value: &BigRational) -> Amount {
        assert!(!value.is_negative(), "amounts are non-negative");
        Amount(value.ceil().to_integer().to_u64().expect("amount exceeds u64 msat"))
    }
}

impl Add for Amount {
    type Output = Amount;

    fn add(self, rhs: Amount) -> Amount {
        Amount(self.0.checked_add(rhs.0).expect("msat overflow"))
    }
}

impl AddAssign for Amount {
    fn add_assign(&mut self, rhs: Amount) {
        *self = *self + rhs;
    }
}

impl Sum for Amount {
    fn sum<I: Iterator<Item = Amount>>(iter: I) -> Amount {
        iter.fold(Amount::ZERO, Add::add)
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} msat", self.0)
    }
}

impl FromStr for Amount {
    type Err = ModelError;

    /// Accepts a bare msat integer or a decimal with one of the suffixes
    /// `msat`, `sat` or `btc` (case-insensitive).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let (number, scale) = if let Some(n) = lower.strip_suffix("msat") {
            (n, 1u64)
        } else if let Some(n) = lower.strip_suffix("sat") {
            (n, 1_000)
        } else if let Some(n) = lower.strip_suffix("btc") {
            (n, 100_000_000_000)
        } else {
            (lower.as_str(), 1)
        };
        let value = parse_decimal(number.trim())
            .ok_or_else(|| ModelError::Parse(format!("invalid amount `{s}`")))?
            * BigRational::from_integer(BigInt::from(scale));
        if value.is_negative() || !value.is_integer() {
            return Err(ModelError::Parse(format!(
                "amount `{s}` is not a whole number of msat"
            )));
        }
        value
            .to_integer()
            .to_u64()
            .map(Amount)
            .ok_or_else(|| ModelError::Parse(format!("amount `{s}` out of range")))
    }
}

/// Whole minutes on the simulation clock. Used both for durations and for
/// absolute points in time measured from the start of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Minutes(u64);

impl Minutes {
    pub const ZERO: Minutes = Minutes(0);

    pub const fn new(minutes: u64) -> Self {
        Minutes(minutes)
    }

    pub const fn get(self) -> u64 {
        self.0
    }

    pub fn days(days: u64) -> Self {
        Minutes(days * 24 * 60)
    }

    pub fn to_rational(self) -> BigRational {
        BigRational::from_integer(BigInt::from(self.0))
    }

    pub fn saturating_sub(self, rhs: Minutes) -> Minutes {
        Minutes(self.0.saturating_sub(rhs.0))
    }
}

impl Add for Minutes {
    type Output = Minutes;

    fn add(self, rhs: Minutes) -> Minutes {
        Minutes(self.0 + rhs.0)
    }
}

impl AddAssign for Minutes {
    fn add_assign(&mut self, rhs: Minutes) {
        self.0 += rhs.0;
    }
}

impl fmt::Display for Minutes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} min", self.0)
    }
}

/// Rate of griefing penalty: the fraction of locked collateral charged per
/// minute. Always within `[0, 1]` and held exactly.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PenaltyRate(BigRational);

impl PenaltyRate {
    pub fn new(rate: BigRational) -> Result<Self, ModelError> {
        if rate.is_negative() || rate > BigRational::one() {
            return Err(ModelError::RateOutOfRange(rate.to_string()));
        }
        Ok(PenaltyRate(rate))
    }

    pub fn from_ratio(numer: u64, denom: u64) -> Result<Self, ModelError> {
        if denom == 0 {
            return Err(ModelError::Parse("zero denominator".into()));
        }
        Self::new(BigRational::new(numer.into(), denom.into()))
    }

    pub fn zero() -> Self {
        PenaltyRate(BigRational::zero())
    }

    pub fn as_rational(&self) -> &BigRational {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
}

impl fmt::Display for PenaltyRate {
    /// Terminating decimals print as decimals, everything else as `n/d`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match terminating_decimal(&self.0) {
            Some(s) => f.write_str(&s),
            None => write!(f, "{}/{}", self.0.numer(), self.0.denom()),
        }
    }
}

impl FromStr for PenaltyRate {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let rate = if let Some((n, d)) = s.split_once('/') {
            let n: BigInt = n.trim().parse().map_err(|_| bad_rate(s))?;
            let d: BigInt = d.trim().parse().map_err(|_| bad_rate(s))?;
            if d.is_zero() {
                return Err(bad_rate(s));
            }
            BigRational::new(n, d)
        } else {
            parse_decimal(s).ok_or_else(|| bad_rate(s))?
        };
        PenaltyRate::new(rate)
    }
}

fn bad_rate(s: &str) -> ModelError {
    ModelError::Parse(format!("invalid penalty rate `{s}`"))
}

impl Serialize for PenaltyRate {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PenaltyRate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Text(String),
            Number(serde_json::Number),
        }
        let text = match Repr::deserialize(deserializer)? {
            Repr::Text(s) => s,
            // Numbers keep their literal spelling, so `0.001` stays exact.
            Repr::Number(n) => n.to_string(),
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses decimal and scientific notation (`0.001`, `1e-8`, `2.5E3`) exactly.
pub fn parse_decimal(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (negative, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{int_part}{frac_part}0").parse().ok()?;
    let scale = exponent - frac_part.len() as i32 - 1;
    let ten = BigInt::from(10);
    let mut value = BigRational::from_integer(digits);
    let factor = BigRational::from_integer(num_traits::pow(ten, scale.unsigned_abs() as usize));
    if scale >= 0 {
        value *= factor;
    } else {
        value /= factor;
    }
    Some(if negative { -value } else { value })
}

/// Decimal expansion of `value` when its denominator has only factors 2 and 5.
fn terminating_decimal(value: &BigRational) -> Option<String> {
    let mut denom = value.denom().clone();
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    let mut places = 0usize;
    let (mut twos, mut fives) = (0usize, 0usize);
    while denom.is_even() {
        denom /= &two;
        twos += 1;
    }
    while (&denom % &five).is_zero() {
        denom /= &five;
        fives += 1;
    }
    if !denom.is_one() {
        return None;
    }
    places = places.max(twos).max(fives);
    let scaled = value * BigRational::from_integer(num_traits::pow(BigInt::from(10), places));
    let digits = scaled.to_integer().abs().to_string();
    let sign = if value.is_negative() { "-" } else { "" };
    if places == 0 {
        return Some(format!("{sign}{digits}"));
    }
    let padded = format!("{digits:0>width$}", width = places + 1);
    let (int, frac) = padded.split_at(padded.len() - places);
    Some(format!("{sign}{int}.{frac}"))
}
