use std::fmt;

use crate::error::{EtlpError, Result};

/// Signed Q6.10 value: 1 sign bit, 5 integer bits, 10 fractional bits.
/// Arithmetic saturates and rounds to nearest, ties to even.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Fixed(pub i16);

impl Fixed {
    pub const FRAC_BITS: u32 = 10;
    pub const ZERO: Fixed = Fixed(0);
    pub const ONE: Fixed = Fixed(1 << Self::FRAC_BITS);
    pub const MAX: Fixed = Fixed(i16::MAX);
    pub const MIN: Fixed = Fixed(i16::MIN);
    pub const EPSILON: f64 = 1.0 / (1 << Self::FRAC_BITS) as f64;

    pub fn raw(self) -> i16 {
        self.0
    }

    fn saturate(x: i64) -> Fixed {
        Fixed(x.clamp(i64::from(i16::MIN), i64::from(i16::MAX)) as i16)
    }

    pub fn saturating_add(self, rhs: Fixed) -> Fixed {
        Fixed(self.0.saturating_add(rhs.0))
    }

    pub fn saturating_sub(self, rhs: Fixed) -> Fixed {
        Fixed(self.0.saturating_sub(rhs.0))
    }

    pub fn saturating_abs(self) -> Fixed {
        Fixed(self.0.saturating_abs())
    }

    /// Full-precision product rescaled by `2^-10` with round-half-even.
    pub fn saturating_mul(self, rhs: Fixed) -> Fixed {
        let product = i64::from(self.0) * i64::from(rhs.0);
        let floor = product >> Self::FRAC_BITS;
        let rem = product & ((1 << Self::FRAC_BITS) - 1);
        let half = 1 << (Self::FRAC_BITS - 1);
        let rounded = if rem > half || (rem == half && floor & 1 == 1) {
            floor + 1
        } else {
            floor
        };
        Self::saturate(rounded)
    }
}

impl fmt::Display for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", fx_to_real(*self))
    }
}

pub fn fx_quantize(x: f64) -> Result<Fixed> {
    if x.is_nan() {
        return Err(EtlpError::Numeric("fx_quantize"));
    }
    let scaled = (x * f64::from(1u32 << Fixed::FRAC_BITS)).round_ties_even();
    Ok(Fixed(
        scaled.clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16,
    ))
}

pub fn fx_to_real(f: Fixed) -> f64 {
    f64::from(f.0) * Fixed::EPSILON
}
