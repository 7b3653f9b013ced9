//! Exact fixed-point accumulation.
//!
//! Leaf values and per-dimension distance contributions are quantized once
//! into [`Fixed`]. Sums of `Fixed` are plain integer additions, so a margin or
//! distance updated through a chain of diffs is bit-identical to the same
//! quantity summed from scratch in any order.

use std::fmt;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

const FRAC_BITS: i32 = 56;
const SCALE: f64 = (1u64 << FRAC_BITS) as f64;
const I64_LIMIT: f64 = 9_223_372_036_854_775_808.0;

/// Signed fixed-point number with 56 fractional bits stored in an `i128`.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Fixed(i128);

impl Fixed {
    pub const ZERO: Fixed = Fixed(0);

    /// Rounds `value` to the nearest representable number. Non-finite or
    /// out-of-range inputs saturate.
    pub fn from_f64(value: f64) -> Self {
        let r = (value * SCALE).round();
        // The i64 conversion is much cheaper and exact in its range; `as`
        // saturates and maps NaN to zero.
        if r.abs() < I64_LIMIT {
            Fixed(r as i64 as i128)
        } else {
            Fixed(r as i128)
        }
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / SCALE
    }

    pub fn raw(self) -> i128 {
        self.0
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }
}

impl Add for Fixed {
    type Output = Fixed;
    fn add(self, rhs: Fixed) -> Fixed {
        Fixed(self.0 + rhs.0)
    }
}

impl Sub for Fixed {
    type Output = Fixed;
    fn sub(self, rhs: Fixed) -> Fixed {
        Fixed(self.0 - rhs.0)
    }
}

impl Neg for Fixed {
    type Output = Fixed;
    fn neg(self) -> Fixed {
        Fixed(-self.0)
    }
}

impl AddAssign for Fixed {
    fn add_assign(&mut self, rhs: Fixed) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Fixed {
    fn sub_assign(&mut self, rhs: Fixed) {
        self.0 -= rhs.0;
    }
}

impl std::iter::Sum for Fixed {
    fn sum<I: Iterator<Item = Fixed>>(iter: I) -> Fixed {
        iter.fold(Fixed::ZERO, Add::add)
    }
}

impl fmt::Debug for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fixed({})", self.to_f64())
    }
}

impl fmt::Display for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_small_dyadic_values() {
        for v in [0.0, 1.0, -20.0, 0.5, 3.25, 1e6] {
            assert_eq!(Fixed::from_f64(v).to_f64(), v);
        }
    }

    #[test]
    fn sums_are_order_independent() {
        let vals = [0.1, 0.2, 0.3, -0.7, 1e-9, 123.456];
        let fwd: Fixed = vals.iter().map(|&v| Fixed::from_f64(v)).sum();
        let rev: Fixed = vals.iter().rev().map(|&v| Fixed::from_f64(v)).sum();
        assert_eq!(fwd, rev);
        let mut inc = fwd;
        inc -= Fixed::from_f64(0.3);
        inc += Fixed::from_f64(0.9);
        let scratch: Fixed = [0.1, 0.2, 0.9, -0.7, 1e-9, 123.456]
            .iter()
            .map(|&v| Fixed::from_f64(v))
            .sum();
        assert_eq!(inc, scratch);
    }

    #[test]
    fn saturates_on_non_finite() {
        assert!(Fixed::from_f64(f64::INFINITY) > Fixed::from_f64(1e20));
        assert_eq!(Fixed::from_f64(f64::INFINITY), Fixed::from_f64(1e30));
        assert_eq!(Fixed::from_f64(f64::NAN), Fixed::ZERO);
    }
}
