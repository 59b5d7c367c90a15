//! Physical parameterization of the layered dipole problem.
//!
//! Lengths are measured in units of the layer spacing `d` and energies in
//! units of `ħ²/(m d²)`. With these units the pair `(θ, U)` fully specifies
//! the interaction: `U = m D² / (ħ² d)` is the only strength knob.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Tilt angle and dipolar strength of one calculation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Angle between the dipole moment and the layer plane, in `[0, π/2]`.
    pub theta: f64,
    /// Dimensionless dipolar strength `U ≥ 0`.
    pub strength_u: f64,
}

impl ModelConfig {
    /// Layer spacing; the unit of length.
    pub const LAYER_SPACING: f64 = 1.0;

    pub fn new(theta: f64, strength_u: f64) -> Result<Self> {
        ensure_finite("theta", theta)?;
        ensure_finite("strength_u", strength_u)?;
        // Allow a few ulps of slack so that symbolic π/2 round-trips.
        if !(0.0..=FRAC_PI_2 + 1e-15).contains(&theta) {
            return Err(Error::invalid(format!("theta must lie in [0, pi/2], got {theta}")));
        }
        if strength_u < 0.0 {
            return Err(Error::invalid(format!("strength_u must be >= 0, got {strength_u}")));
        }
        Ok(Self { theta: theta.min(FRAC_PI_2), strength_u })
    }

    pub fn with_strength(self, strength_u: f64) -> Result<Self> {
        Self::new(self.theta, strength_u)
    }
}

/// The two special tilt angles of the in-plane potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalAngles {
    /// `sin²θ_c = 1/3`: the angular monopole of the potential vanishes.
    pub theta_c: f64,
    /// `cos²θ_c* = 1/3`: boundary of the two-minima regime on the x axis.
    pub theta_c_star: f64,
}

impl CriticalAngles {
    pub fn get() -> Self {
        let inv_sqrt3 = 1.0 / 3f64.sqrt();
        Self { theta_c: inv_sqrt3.asin(), theta_c_star: inv_sqrt3.acos() }
    }
}

pub fn theta_c() -> f64 {
    CriticalAngles::get().theta_c
}

pub fn theta_c_star() -> f64 {
    CriticalAngles::get().theta_c_star
}

/// A tilt angle given either numerically or by one of the symbolic names
/// `pi/2`, `theta_c`, `theta_c_star`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Angle {
    Perpendicular,
    ThetaC,
    ThetaCStar,
    Radians(f64),
}

impl Angle {
    pub fn radians(self) -> f64 {
        match self {
            Angle::Perpendicular => FRAC_PI_2,
            Angle::ThetaC => theta_c(),
            Angle::ThetaCStar => theta_c_star(),
            Angle::Radians(r) => r,
        }
    }

    /// Short label used in file names.
    pub fn label(self) -> String {
        match self {
            Angle::Perpendicular => "pi_2".into(),
            Angle::ThetaC => "theta_c".into(),
            Angle::ThetaCStar => "theta_c_star".into(),
            Angle::Radians(r) => format!("{r:.6}"),
        }
    }
}

impl FromStr for Angle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pi/2" | "pi_2" | "perpendicular" => Ok(Angle::Perpendicular),
            "theta_c" => Ok(Angle::ThetaC),
            "theta_c_star" | "theta_c*" => Ok(Angle::ThetaCStar),
            other => other
                .parse::<f64>()
                .map(Angle::Radians)
                .map_err(|_| Error::invalid(format!("unrecognised angle '{s}'"))),
        }
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Angle::Perpendicular => f.write_str("pi/2"),
            Angle::ThetaC => f.write_str("theta_c"),
            Angle::ThetaCStar => f.write_str("theta_c_star"),
            Angle::Radians(r) => write!(f, "{r}"),
        }
    }
}
