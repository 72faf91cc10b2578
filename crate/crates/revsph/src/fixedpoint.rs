//! Deterministic Q31.32 fixed-point arithmetic.
//!
//! State vectors (positions, velocities) live in this representation during
//! reversible runs. Addition of raws is exact integer addition, hence
//! associative, and negation is exact, which is what makes the Verlet scheme
//! bit-exactly reversible. Overflow is always a hard error: wrapping or
//! saturating would silently destroy reversibility.

use thiserror::Error;

use crate::math::Vec2;

/// Number of fractional bits in the Q31.32 format.
pub const FRACTIONAL_BITS: u32 = 32;

/// 2^32 as f64; scaling by it is exact (power of two).
const SCALE: f64 = 4294967296.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FixedPointError {
    #[error("value {0} overflows Q31.32 range (|x| must be < 2^31)")]
    Overflow(f64),
    #[error("cannot encode non-finite value {0}")]
    NonFinite(f64),
    #[error("fixed-point addition overflow ({0} + {1})")]
    AddOverflow(i64, i64),
    #[error("raw value i64::MIN is outside the valid fixed-point domain")]
    MinRaw,
}

/// A Q31.32 fixed-point number: `value = raw * 2^-32`.
///
/// The raw value `i64::MIN` is excluded from the domain so that negation is
/// total and exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct FixedValue {
    raw: i64,
}

impl FixedValue {
    pub const ZERO: FixedValue = FixedValue { raw: 0 };

    pub fn from_raw(raw: i64) -> Result<FixedValue, FixedPointError> {
        if raw == i64::MIN {
            return Err(FixedPointError::MinRaw);
        }
        Ok(FixedValue { raw })
    }

    pub fn raw(self) -> i64 {
        self.raw
    }

    /// Round `x` to the nearest Q31.32 value, ties to even.
    ///
    /// Round-half-to-even is odd-symmetric (`rhe(-x) == -rhe(x)`), which the
    /// velocity-reversal argument requires of the encoding step.
    pub fn encode(x: f64) -> Result<FixedValue, FixedPointError> {
        if !x.is_finite() {
            return Err(FixedPointError::NonFinite(x));
        }
        if x.abs() >= 2147483648.0 {
            return Err(FixedPointError::Overflow(x));
        }
        // x * 2^32 is exact for in-range finite x.
        let scaled = (x * SCALE).round_ties_even();
        debug_assert!(scaled.abs() < 9.223372036854776e18);
        Ok(FixedValue { raw: scaled as i64 })
    }

    pub fn decode(self) -> f64 {
        self.raw as f64 / SCALE
    }

    pub fn checked_add(self, other: FixedValue) -> Result<FixedValue, FixedPointError> {
        match self.raw.checked_add(other.raw) {
            Some(raw) if raw != i64::MIN => Ok(FixedValue { raw }),
            _ => Err(FixedPointError::AddOverflow(self.raw, other.raw)),
        }
    }

    pub fn checked_sub(self, other: FixedValue) -> Result<FixedValue, FixedPointError> {
        self.checked_add(-other)
    }
}

impl std::ops::Neg for FixedValue {
    type Output = FixedValue;
    fn neg(self) -> FixedValue {
        // Total because i64::MIN is excluded by construction.
        FixedValue { raw: -self.raw }
    }
}

impl std::fmt::Display for FixedValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.decode())
    }
}

/// Componentwise fixed-point 2D vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct FixedVector2 {
    pub x: FixedValue,
    pub y: FixedValue,
}

impl FixedVector2 {
    pub const ZERO: FixedVector2 = FixedVector2 {
        x: FixedValue::ZERO,
        y: FixedValue::ZERO,
    };

    pub fn encode(v: Vec2) -> Result<FixedVector2, FixedPointError> {
        Ok(FixedVector2 {
            x: FixedValue::encode(v.x)?,
            y: FixedValue::encode(v.y)?,
        })
    }

    pub fn decode(self) -> Vec2 {
        Vec2::new(self.x.decode(), self.y.decode())
    }

    pub fn checked_add(self, o: FixedVector2) -> Result<FixedVector2, FixedPointError> {
        Ok(FixedVector2 {
            x: self.x.checked_add(o.x)?,
            y: self.y.checked_add(o.y)?,
        })
    }
}

impl std::ops::Neg for FixedVector2 {
    type Output = FixedVector2;
    fn neg(self) -> FixedVector2 {
        FixedVector2 {
            x: -self.x,
            y: -self.y,
        }
    }
}

/// Left-to-right floating-point summation in canonical (ascending index)
/// order. The result depends only on the sequence of terms, never on thread
/// count or iteration schedule, which is the determinism contract the
/// reversible scheme relies on.
pub fn deterministic_sum<I>(terms: I) -> f64
where
    I: IntoIterator<Item = f64>,
{
    terms.into_iter().fold(0.0, |acc, t| acc + t)
}
