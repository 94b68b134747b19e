use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Monotone reaction term `f` with `f(0) = 0` and `f' ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Nonlinearity {
    /// `f ≡ 0`: the linear heat equation.
    Zero,
    /// `f(s) = s³`.
    Cubic,
    /// `f(s) = e^s − 1`.
    Expm1,
}

impl Nonlinearity {
    pub const ALL: [Nonlinearity; 3] = [Nonlinearity::Zero, Nonlinearity::Cubic, Nonlinearity::Expm1];

    pub fn name(self) -> &'static str {
        match self {
            Nonlinearity::Zero => "zero",
            Nonlinearity::Cubic => "cubic",
            Nonlinearity::Expm1 => "expm1",
        }
    }

    #[inline]
    pub fn value(self, s: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Cubic => s * s * s,
            Nonlinearity::Expm1 => s.exp_m1(),
        }
    }

    #[inline]
    pub fn d1(self, s: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Cubic => 3.0 * s * s,
            Nonlinearity::Expm1 => s.exp(),
        }
    }

    #[inline]
    pub fn d2(self, s: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Cubic => 6.0 * s,
            Nonlinearity::Expm1 => s.exp(),
        }
    }

    /// `max |f''(s)|` over `|s| ≤ bound`.
    pub fn d2_bound(self, bound: f64) -> f64 {
        let b = bound.abs();
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Cubic => 6.0 * b,
            Nonlinearity::Expm1 => b.exp(),
        }
    }
}

impl FromStr for Nonlinearity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Nonlinearity::ALL
            .into_iter()
            .find(|n| n.name() == s.trim())
            .ok_or_else(|| Error::Domain(format!("unknown nonlinearity `{s}` (zero | cubic | expm1)")))
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
