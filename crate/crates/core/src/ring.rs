//! Arithmetic in Z_{2^64} and the fixed-point encoding of reals into it.
//!
//! Every model parameter is carried as a [`Ring`] element holding
//! `round(x * 2^p)` in two's complement. Addition and subtraction are exact;
//! a product of two encodings sits at scale `2^(2p)` and is brought back to
//! scale `2^p` with [`truncate`], an arithmetic right shift of the signed
//! reinterpretation.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of fractional bits.
pub const DEFAULT_PRECISION: u32 = 20;

/// Width of one ring element on the wire.
pub const RING_BYTES: usize = 8;

/// An element of Z_{2^64}. All arithmetic wraps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ring(pub u64);

impl Ring {
    pub const ZERO: Ring = Ring(0);
    pub const ONE: Ring = Ring(1);

    /// Reads the element as a two's-complement signed integer.
    #[inline]
    pub fn signed(self) -> i64 {
        self.0 as i64
    }

    #[inline]
    pub fn from_signed(v: i64) -> Ring {
        Ring(v as u64)
    }

    pub fn to_le_bytes(self) -> [u8; RING_BYTES] {
        self.0.to_le_bytes()
    }
}

#[inline]
pub fn ring_add(a: Ring, b: Ring) -> Ring {
    Ring(a.0.wrapping_add(b.0))
}

#[inline]
pub fn ring_sub(a: Ring, b: Ring) -> Ring {
    Ring(a.0.wrapping_sub(b.0))
}

#[inline]
pub fn ring_mul(a: Ring, b: Ring) -> Ring {
    Ring(a.0.wrapping_mul(b.0))
}

impl Add for Ring {
    type Output = Ring;
    #[inline]
    fn add(self, rhs: Ring) -> Ring {
        ring_add(self, rhs)
    }
}

impl Sub for Ring {
    type Output = Ring;
    #[inline]
    fn sub(self, rhs: Ring) -> Ring {
        ring_sub(self, rhs)
    }
}

impl Mul for Ring {
    type Output = Ring;
    #[inline]
    fn mul(self, rhs: Ring) -> Ring {
        ring_mul(self, rhs)
    }
}

impl Neg for Ring {
    type Output = Ring;
    #[inline]
    fn neg(self) -> Ring {
        Ring(self.0.wrapping_neg())
    }
}

impl AddAssign for Ring {
    #[inline]
    fn add_assign(&mut self, rhs: Ring) {
        *self = *self + rhs;
    }
}

impl SubAssign for Ring {
    #[inline]
    fn sub_assign(&mut self, rhs: Ring) {
        *self = *self - rhs;
    }
}

/// Drops `precision` fractional bits from a product of two encodings.
///
/// Sign-correct: the raw value is reinterpreted as signed and shifted
/// arithmetically, so the result is `floor(v / 2^precision)`.
#[inline]
pub fn truncate(v: Ring, precision: u32) -> Ring {
    Ring::from_signed(v.signed() >> precision)
}

/// A real number encoded in the ring with `precision` fractional bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub raw: Ring,
    pub precision: u32,
}

impl FixedPoint {
    pub fn new(raw: Ring, precision: u32) -> Self {
        Self { raw, precision }
    }

    pub fn decode(self) -> f64 {
        decode(self)
    }

    /// Fixed-point product, truncated back to `self.precision`.
    pub fn mul(self, other: FixedPoint) -> FixedPoint {
        debug_assert_eq!(self.precision, other.precision);
        FixedPoint::new(truncate(self.raw * other.raw, self.precision), self.precision)
    }
}

/// Largest magnitude (exclusive) that encodes at `precision`.
pub fn encodable_bound(precision: u32) -> f64 {
    2f64.powi(63 - precision as i32)
}

/// Encodes `x` as `round(x * 2^precision) mod 2^64`, rounding half away from zero.
pub fn encode(x: f64, precision: u32) -> Result<FixedPoint> {
    if precision >= 63 || !x.is_finite() || x.abs() >= encodable_bound(precision) {
        return Err(Error::EncodingOverflow { value: x, precision });
    }
    let scaled = (x * 2f64.powi(precision as i32)).round();
    Ok(FixedPoint::new(Ring::from_signed(scaled as i64), precision))
}

pub fn decode(v: FixedPoint) -> f64 {
    v.raw.signed() as f64 / 2f64.powi(v.precision as i32)
}

/// Encodes a whole vector, failing on the first out-of-range entry.
pub fn encode_vec(xs: &[f64], precision: u32) -> Result<Vec<Ring>> {
    xs.iter().map(|&x| encode(x, precision).map(|f| f.raw)).collect()
}

pub fn decode_vec(xs: &[Ring], precision: u32) -> Vec<f64> {
    xs.iter()
        .map(|&r| decode(FixedPoint::new(r, precision)))
        .collect()
}
