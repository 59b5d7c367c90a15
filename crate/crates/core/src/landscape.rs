//! Position of the deep in-plane minimum of the pair potential and the
//! second-order expansion around it,
//! `V(a + w, y) ≈ U (v₀ + α₀ w² + β₀ y²)` (nearest-neighbour layers; the
//! outer pair follows from `V(x, y; 2d) = V(x/2, y/2; d)/8`).

use std::f64::consts::FRAC_PI_2;

use serde::Serialize;

use crate::error::{ensure_finite, Error, Result};
use crate::model::ModelConfig;
use crate::potential::{stationary_points_on_axis, StationaryKind};

/// Smallest tilt accepted by the expansion pipeline. Near `θ = 0` the two
/// minima become degenerate and a single Gaussian cannot describe the pair.
pub const MIN_THETA: f64 = 0.05;

const RESIDUAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpansionCoefficients {
    pub theta: f64,
    /// Minimum position in units of the layer spacing.
    pub a0: f64,
    pub v0: f64,
    pub alpha0: f64,
    pub beta0: f64,
}

/// Stationarity condition on the x axis (layer spacing 1); its roots are
/// the stationary points of `V(x, 0)`.
pub fn minimum_condition(theta: f64, a: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let p = a * c + s;
    let d = a * a + 1.0;
    15.0 * a * p * p - 3.0 * a * d - 6.0 * c * d * p
}

fn check_theta(theta: f64) -> Result<()> {
    ensure_finite("theta", theta)?;
    if theta < MIN_THETA {
        return Err(Error::invalid(format!(
            "theta = {theta} is below {MIN_THETA}: the two near-degenerate minima are outside the single-Gaussian expansion"
        )));
    }
    if theta > FRAC_PI_2 + 1e-15 {
        return Err(Error::invalid(format!("theta must be <= pi/2, got {theta}")));
    }
    Ok(())
}

fn is_perpendicular(theta: f64) -> bool {
    (theta - FRAC_PI_2).abs() < 1e-15
}

/// Dimensionless position `a₀` of the deep minimum on the `x > 0` side.
pub fn solve_minimum(theta: f64) -> Result<f64> {
    check_theta(theta)?;
    if is_perpendicular(theta) {
        return Ok(0.0);
    }
    let config = ModelConfig::new(theta, 1.0)?;
    let deep = stationary_points_on_axis(&config)?
        .into_iter()
        .filter(|p| p.kind == StationaryKind::Min && p.x > 0.0)
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or_else(|| Error::NoRoot(format!("no minimum with x > 0 at theta = {theta}")))?;

    // Polish on the polynomial condition itself.
    let f = |a: f64| minimum_condition(theta, a);
    let mut half = 1e-9f64.max(deep.x * 1e-9);
    let mut a0 = deep.x;
    for _ in 0..20 {
        let (lo, hi) = ((deep.x - half).max(0.0), deep.x + half);
        if f(lo).signum() != f(hi).signum() {
            a0 = crate::roots::brent(f, lo, hi, 1e-16)?;
            break;
        }
        half *= 4.0;
    }
    if f(a0).abs() > RESIDUAL_TOL {
        return Err(Error::NoRoot(format!(
            "minimum condition residual {:e} at a0 = {a0} exceeds {RESIDUAL_TOL:e}",
            f(a0)
        )));
    }
    Ok(a0)
}

/// Closed-form `(v₀, α₀, β₀)` at a given minimum position.
///
/// `α₀` and `β₀` are one half of `∂²V/∂x²` and `∂²V/∂y²` at `(a₀, 0)` for
/// unit strength and unit layer spacing.
pub fn coefficients_at(theta: f64, a0: f64) -> ExpansionCoefficients {
    let (s, c) = theta.sin_cos();
    let d = a0 * a0 + 1.0;
    let p = s + a0 * c;
    let n = d - 3.0 * p * p;
    let d52 = d * d * d.sqrt();
    let v0 = n / d52;
    let alpha0 = (1.0 - 3.0 * c * c + (30.0 * a0 * a0 - 5.0) * n / (2.0 * d * d)
        - 5.0 * a0 * (2.0 * a0 - 6.0 * c * p) / d)
        / d52;
    let beta0 = -1.5 * (d - 5.0 * p * p) / (d52 * d);
    ExpansionCoefficients { theta, a0, v0, alpha0, beta0 }
}

pub fn expansion_coefficients(theta: f64) -> Result<ExpansionCoefficients> {
    let a0 = solve_minimum(theta)?;
    let coeffs = coefficients_at(theta, a0);
    if !(coeffs.alpha0 > 0.0 && coeffs.beta0 > 0.0) {
        return Err(Error::NotPositiveDefinite(format!(
            "expansion at theta = {theta} has curvatures ({}, {})",
            coeffs.alpha0, coeffs.beta0
        )));
    }
    Ok(coeffs)
}

impl ExpansionCoefficients {
    /// Two-body energy in the expanded potential: offset plus zero-point
    /// energies of the relative motion (reduced mass m/2) in x and y.
    pub fn two_body_energy(&self, strength_u: f64) -> f64 {
        strength_u * self.v0 + strength_u.sqrt() * (self.alpha0.sqrt() + self.beta0.sqrt())
    }
}

pub fn two_body_expansion_energy(theta: f64, strength_u: f64) -> Result<f64> {
    ensure_finite("strength_u", strength_u)?;
    if strength_u <= 0.0 {
        return Err(Error::invalid("strength_u must be positive"));
    }
    Ok(expansion_coefficients(theta)?.two_body_energy(strength_u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{theta_c, theta_c_star};
    use crate::potential::PairPotential;

    #[test]
    fn perpendicular_limit_is_exact() {
        let c = expansion_coefficients(FRAC_PI_2).unwrap();
        assert_eq!((c.a0, c.v0, c.alpha0, c.beta0), (0.0, -2.0, 6.0, 6.0));
    }

    #[test]
    fn theta_c_star_minimum_closed_form() {
        let exact = (3.0 * 17f64.sqrt() - 5.0) / 2f64.powf(4.5);
        let a0 = solve_minimum(theta_c_star()).unwrap();
        assert!((a0 - exact).abs() < 1e-12);
    }

    #[test]
    fn theta_c_minimum_matches_dense_argmin() {
        let theta = theta_c();
        let pot = PairPotential::new(theta, 1.0, 1.0);
        let n = 5_000_000;
        let (best_x, _) = (0..=n)
            .map(|i| 5.0 * i as f64 / n as f64)
            .map(|x| (x, pot.value(x, 0.0)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let a0 = solve_minimum(theta).unwrap();
        assert!(a0 > 0.0);
        assert!((a0 - best_x).abs() <= 2e-6);
    }

    #[test]
    fn small_tilt_is_rejected() {
        assert!(matches!(solve_minimum(0.01), Err(Error::InvalidInput(_))));
        assert!(solve_minimum(0.06).is_ok());
    }

    #[test]
    fn gradient_vanishes_and_v0_matches_potential() {
        for k in 1..=15 {
            let theta = 0.1 * k as f64;
            let c = expansion_coefficients(theta).unwrap();
            let pot = PairPotential::new(theta, 1.0, 1.0);
            assert!(pot.dx(c.a0, 0.0).abs() < 1e-10, "theta={theta}");
            assert!(minimum_condition(theta, c.a0).abs() <= 1e-12);
            assert!((c.v0 - pot.value(c.a0, 0.0)).abs() < 1e-12);
            assert!(c.v0 < 0.0);
            assert!(c.a0 >= 0.0 && c.alpha0 > 0.0 && c.beta0 > 0.0);
        }
    }

    #[test]
    fn a0_is_continuous_in_theta() {
        let mut prev = solve_minimum(1.0).unwrap();
        let mut theta = 1.0;
        while theta < FRAC_PI_2 - 1e-3 {
            theta += 1e-3;
            let a0 = solve_minimum(theta).unwrap();
            assert!((a0 - prev).abs() < 1e-3, "jump at theta={theta}");
            prev = a0;
        }
        assert!(prev < 5e-3);
    }

    #[test]
    fn two_body_perpendicular_value() {
        let e = two_body_expansion_energy(FRAC_PI_2, 1.0).unwrap();
        assert!((e - (-2.0 + 2.0 * 6f64.sqrt())).abs() < 1e-14);
        let big = two_body_expansion_energy(FRAC_PI_2, 1e8).unwrap();
        assert!((big / 1e8 + 2.0).abs() < 1e-3);
    }
}
