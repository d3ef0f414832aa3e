//! SI quantities used at API boundaries.
//!
//! Every computation inside the crate runs in SI (m, s, m³/s). Litres per
//! second only appear when reading configuration and writing results.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

/// Volumetric flow rate stored in m³/s.
#[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rate(f64);

impl Rate {
    pub const ZERO: Rate = Rate(0.0);

    pub const fn from_m3_per_s(value: f64) -> Self {
        Rate(value)
    }

    pub fn from_l_per_s(value: f64) -> Self {
        Rate(value / 1000.0)
    }

    pub const fn m3_per_s(self) -> f64 {
        self.0
    }

    pub fn l_per_s(self) -> f64 {
        self.0 * 1000.0
    }
}

impl Add for Rate {
    type Output = Rate;
    fn add(self, rhs: Rate) -> Rate {
        Rate(self.0 + rhs.0)
    }
}

impl AddAssign for Rate {
    fn add_assign(&mut self, rhs: Rate) {
        self.0 += rhs.0;
    }
}

impl Sub for Rate {
    type Output = Rate;
    fn sub(self, rhs: Rate) -> Rate {
        Rate(self.0 - rhs.0)
    }
}

impl std::iter::Sum for Rate {
    fn sum<I: Iterator<Item = Rate>>(iter: I) -> Rate {
        iter.fold(Rate::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} l/s", self.l_per_s())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn litre_conversion() {
        let r = Rate::from_l_per_s(39.0);
        assert!((r.m3_per_s() - 0.039).abs() < 1e-15);
        assert!((Rate::from_m3_per_s(0.0065).l_per_s() - 6.5).abs() < 1e-12);
        assert_eq!(format!("{}", Rate::from_l_per_s(1.0)), "1.000 l/s");
    }
}
