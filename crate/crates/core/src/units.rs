use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Reduced Planck constant and particle mass. Everything else in the crate is
/// expressed in whatever units these two fix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    pub hbar: f64,
    pub mass: f64,
}

impl Default for UnitSystem {
    fn default() -> Self {
        Self { hbar: 1.0, mass: 1.0 }
    }
}

impl UnitSystem {
    pub fn new(hbar: f64, mass: f64) -> Result<Self> {
        let units = Self { hbar, mass };
        units.validate()?;
        Ok(units)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hbar.is_finite() && self.hbar > 0.0) {
            return Err(invalid("units.hbar", format!("must be positive, got {}", self.hbar)));
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(invalid("units.mass", format!("must be positive, got {}", self.mass)));
        }
        Ok(())
    }

    /// Free kinetic energy `p²/2m`.
    #[inline]
    pub fn energy(&self, p: f64) -> f64 {
        0.5 * p * p / self.mass
    }

    /// Magnitude of the momentum carrying kinetic energy `e`.
    #[inline]
    pub fn momentum(&self, e: f64) -> f64 {
        (2.0 * self.mass * e).sqrt()
    }

    /// Planck's constant `h = 2πħ`.
    #[inline]
    pub fn planck(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.hbar
    }
}

/// Which momentum half-line a directed packet lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Positive momenta, arriving from the left.
    Plus,
    /// Negative momenta, arriving from the right.
    Minus,
}

impl Direction {
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Direction::Plus => 1.0,
            Direction::Minus => -1.0,
        }
    }

    #[inline]
    pub fn flipped(self) -> Self {
        match self {
            Direction::Plus => Direction::Minus,
            Direction::Minus => Direction::Plus,
        }
    }

    #[inline]
    pub fn contains(self, p: f64) -> bool {
        match self {
            Direction::Plus => p > 0.0,
            Direction::Minus => p < 0.0,
        }
    }

    pub fn of(p: f64) -> Option<Self> {
        if p > 0.0 {
            Some(Direction::Plus)
        } else if p < 0.0 {
            Some(Direction::Minus)
        } else {
            None
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Direction::Plus => "+",
            Direction::Minus => "-",
        })
    }
}
