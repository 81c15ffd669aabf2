//! Cost arithmetic.
//!
//! Grid worlds run on exact rationals so closed-loop value tables match to
//! the digit; [`Approx`] is the real-valued mode for non-grid models, with
//! equality up to an absolute tolerance of 1e-9.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Arithmetic required of stage costs and optimal values: a nonnegative
/// ordered field fragment (add/sub/mul/div, zero, one).
pub trait CostValue: Clone + PartialEq + PartialOrd + fmt::Debug + Send + Sync + 'static {
    fn zero() -> Self;
    fn one() -> Self;
    fn add(&self, rhs: &Self) -> Self;
    fn sub(&self, rhs: &Self) -> Self;
    fn mul(&self, rhs: &Self) -> Self;
    fn div(&self, rhs: &Self) -> Self;
    fn is_zero(&self) -> bool {
        *self == Self::zero()
    }
}

/// Exact rational cost, rendered as `p/q` (or just `p` when integral).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct Rat(Ratio<i64>);

impl Rat {
    pub fn new(num: i64, den: i64) -> Self {
        Rat(Ratio::new(num, den))
    }

    pub fn int(n: i64) -> Self {
        Rat(Ratio::from_integer(n))
    }

    pub fn num(&self) -> i64 {
        *self.0.numer()
    }

    pub fn den(&self) -> i64 {
        *self.0.denom()
    }
}

impl CostValue for Rat {
    fn zero() -> Self {
        Rat::int(0)
    }
    fn one() -> Self {
        Rat::int(1)
    }
    fn add(&self, rhs: &Self) -> Self {
        Rat(self.0 + rhs.0)
    }
    fn sub(&self, rhs: &Self) -> Self {
        Rat(self.0 - rhs.0)
    }
    fn mul(&self, rhs: &Self) -> Self {
        Rat(self.0 * rhs.0)
    }
    fn div(&self, rhs: &Self) -> Self {
        Rat(self.0 / rhs.0)
    }
}

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den() == 1 {
            write!(f, "{}", self.num())
        } else {
            write!(f, "{}/{}", self.num(), self.den())
        }
    }
}

impl FromStr for Rat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        match s.split_once('/') {
            Some((n, d)) => {
                let num: i64 = n.trim().parse().map_err(|e| format!("bad numerator: {e}"))?;
                let den: i64 = d.trim().parse().map_err(|e| format!("bad denominator: {e}"))?;
                if den == 0 {
                    return Err("zero denominator".into());
                }
                Ok(Rat::new(num, den))
            }
            None => {
                let n: i64 = s.parse().map_err(|e| format!("bad rational: {e}"))?;
                Ok(Rat::int(n))
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RatRepr {
    num: i64,
    den: i64,
}

impl Serialize for Rat {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        RatRepr { num: self.num(), den: self.den() }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Rat {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let r = RatRepr::deserialize(deserializer)?;
        if r.den == 0 {
            return Err(D::Error::custom("rational with zero denominator"));
        }
        Ok(Rat::new(r.num, r.den))
    }
}

const APPROX_EPS: f64 = 1e-9;

/// Real-valued cost with tolerance-based equality for non-grid models.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Approx(pub f64);

impl PartialEq for Approx {
    fn eq(&self, other: &Self) -> bool {
        (self.0 - other.0).abs() <= APPROX_EPS
    }
}

impl PartialOrd for Approx {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        if self == other {
            Some(std::cmp::Ordering::Equal)
        } else {
            self.0.partial_cmp(&other.0)
        }
    }
}

impl CostValue for Approx {
    fn zero() -> Self {
        Approx(0.0)
    }
    fn one() -> Self {
        Approx(1.0)
    }
    fn add(&self, rhs: &Self) -> Self {
        Approx(self.0 + rhs.0)
    }
    fn sub(&self, rhs: &Self) -> Self {
        Approx(self.0 - rhs.0)
    }
    fn mul(&self, rhs: &Self) -> Self {
        Approx(self.0 * rhs.0)
    }
    fn div(&self, rhs: &Self) -> Self {
        Approx(self.0 / rhs.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rat_display_and_parse() {
        assert_eq!(Rat::new(5, 9).to_string(), "5/9");
        assert_eq!(Rat::int(37).to_string(), "37");
        assert_eq!("4/13".parse::<Rat>().unwrap(), Rat::new(4, 13));
        assert_eq!("42".parse::<Rat>().unwrap(), Rat::int(42));
        assert!("1/0".parse::<Rat>().is_err());
    }

    #[test]
    fn rat_json_shape() {
        let s = serde_json::to_string(&Rat::new(5, 9)).unwrap();
        assert_eq!(s, r#"{"num":5,"den":9}"#);
        let back: Rat = serde_json::from_str(&s).unwrap();
        assert_eq!(back, Rat::new(5, 9));
    }

    #[test]
    fn approx_tolerance() {
        assert_eq!(Approx(1.0), Approx(1.0 + 1e-12));
        assert!(Approx(1.0) < Approx(1.1));
        assert!(Approx(1e-10).is_zero());
    }
}
