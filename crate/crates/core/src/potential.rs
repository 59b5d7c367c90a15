//! The interlayer dipole–dipole potential between molecules in two layers
//! separated by `pair_distance`, with dipoles tilted by `θ` out of the
//! layer plane (tilt in the xz-plane):
//!
//! ```text
//! V(x, y) = U · (x² + y² + s² − 3 (x cosθ + s sinθ)²) / (x² + y² + s²)^{5/2}
//! ```
//!
//! where `s` is the pair distance (1 for neighbouring layers, 2 for the outer
//! pair of a three-layer chain).

use std::f64::consts::PI;
use std::io::{self, Write};

use serde::Serialize;

use crate::error::{ensure_finite, Error, Result};
use crate::exec::Strategy;
use crate::model::ModelConfig;
use crate::output::fmt_sig;

/// Pre-evaluated trigonometry for repeated potential evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairPotential {
    strength: f64,
    cos_t: f64,
    sin_t: f64,
    distance: f64,
}

impl PairPotential {
    pub fn new(theta: f64, strength_u: f64, pair_distance: f64) -> Self {
        Self { strength: strength_u, cos_t: theta.cos(), sin_t: theta.sin(), distance: pair_distance }
    }

    pub fn from_config(config: &ModelConfig, pair_distance: f64) -> Self {
        Self::new(config.theta, config.strength_u, pair_distance)
    }

    /// Same geometry with unit strength.
    pub fn unit(self) -> Self {
        Self { strength: 1.0, ..self }
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    #[inline]
    pub fn value(&self, x: f64, y: f64) -> f64 {
        let s = self.distance;
        let r2 = x * x + y * y + s * s;
        let p = x * self.cos_t + s * self.sin_t;
        self.strength * (r2 - 3.0 * p * p) / (r2 * r2 * r2.sqrt())
    }

    /// `∂V/∂x`.
    pub fn dx(&self, x: f64, y: f64) -> f64 {
        let s = self.distance;
        let r2 = x * x + y * y + s * s;
        let p = x * self.cos_t + s * self.sin_t;
        let num = r2 - 3.0 * p * p;
        let dnum = 2.0 * x - 6.0 * self.cos_t * p;
        self.strength * (dnum * r2 - 5.0 * x * num) / (r2 * r2 * r2 * r2.sqrt())
    }

    /// `∂²V/∂x²`.
    pub fn dxx(&self, x: f64, y: f64) -> f64 {
        let s = self.distance;
        let r2 = x * x + y * y + s * s;
        let p = x * self.cos_t + s * self.sin_t;
        let num = r2 - 3.0 * p * p;
        let dnum = 2.0 * x - 6.0 * self.cos_t * p;
        let ddnum = 2.0 - 6.0 * self.cos_t * self.cos_t;
        let bracket = ddnum - 10.0 * x * dnum / r2 - 5.0 * num / r2 + 35.0 * x * x * num / (r2 * r2);
        self.strength * bracket / (r2 * r2 * r2.sqrt())
    }

    /// Angular average `(1/2π)∮ V(r cosφ, r sinφ) dφ`.
    pub fn monopole(&self, r: f64) -> f64 {
        let s = self.distance;
        let r2 = r * r + s * s;
        let num = r * r + s * s - 1.5 * r * r * self.cos_t * self.cos_t - 3.0 * s * s * self.sin_t * self.sin_t;
        self.strength * num / (r2 * r2 * r2.sqrt())
    }
}

/// Potential energy of a pair at in-plane offset `(x, y)`.
pub fn evaluate(config: &ModelConfig, x: f64, y: f64, pair_distance: f64) -> Result<f64> {
    ensure_finite("x", x)?;
    ensure_finite("y", y)?;
    check_distance(pair_distance)?;
    Ok(PairPotential::from_config(config, pair_distance).value(x, y))
}

/// Angular monopole of the potential at in-plane radius `r`.
pub fn angular_monopole(config: &ModelConfig, r: f64, pair_distance: f64) -> Result<f64> {
    ensure_finite("r", r)?;
    if r < 0.0 {
        return Err(Error::invalid(format!("radius must be >= 0, got {r}")));
    }
    check_distance(pair_distance)?;
    Ok(PairPotential::from_config(config, pair_distance).monopole(r))
}

/// Tolerance used for the truncation warning of [`plane_integral`].
pub const PLANE_INTEGRAL_TOLERANCE: f64 = 1e-4;

/// Integral of the potential over the disc of radius `radial_cutoff`,
/// `∫₀ᴿ 2π r ⟨V⟩_φ(r) dr`, for nearest-neighbour layers.
///
/// The integral over the whole plane is zero; the truncated value carries
/// a tail of `−2π U (1 − 1.5 cos²θ) / R` to leading order, which is logged
/// as a warning when it exceeds [`PLANE_INTEGRAL_TOLERANCE`].
pub fn plane_integral(config: &ModelConfig, radial_cutoff: f64) -> Result<f64> {
    ensure_finite("radial_cutoff", radial_cutoff)?;
    if radial_cutoff <= 0.0 {
        return Err(Error::invalid("radial_cutoff must be positive"));
    }
    let pot = PairPotential::from_config(config, 1.0);
    let tail = plane_integral_tail(config, radial_cutoff);
    if radial_cutoff < 10.0 || tail.abs() > PLANE_INTEGRAL_TOLERANCE {
        log::warn!(
            "plane integral truncated at R = {radial_cutoff}: leading tail {tail:.3e} exceeds tolerance {PLANE_INTEGRAL_TOLERANCE:e}"
        );
    }
    let f = |r: f64| 2.0 * PI * r * pot.monopole(r);
    // Panels of growing width keep the integrand well resolved near r ~ 1.
    let mut total = 0.0;
    let mut lo = 0.0;
    let mut width = 0.25;
    while lo < radial_cutoff {
        let hi = (lo + width).min(radial_cutoff);
        total += crate::quadrature::gauss_legendre_panel(&f, lo, hi);
        lo = hi;
        if lo >= 4.0 {
            width = (width * 1.25).min(8.0);
        }
    }
    Ok(total)
}

/// Leading-order truncation tail `∫_R^∞ 2π r ⟨V⟩_φ dr`, i.e. the value the
/// truncated integral is missing.
pub fn plane_integral_tail(config: &ModelConfig, radial_cutoff: f64) -> f64 {
    let c2 = config.theta.cos().powi(2);
    2.0 * PI * config.strength_u * (1.0 - 1.5 * c2) / radial_cutoff
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StationaryKind {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationaryPoint {
    pub x: f64,
    pub value: f64,
    pub kind: StationaryKind,
}

/// Half-width of the x-axis scan, in units of the layer spacing.
pub const AXIS_SCAN_EXTENT: f64 = 10.0;
const AXIS_SCAN_LIMIT: f64 = 1e4;
const AXIS_SCAN_POINTS: usize = 6000;
const AXIS_ROOT_TOL: f64 = 1e-12;

/// All stationary points of `x ↦ V(x, 0)` on `[−X, X]`, sorted by `x`.
/// `X` is 10 unless the shallow x < 0 minimum lies further out, in which
/// case the scan widens to cover it (up to 10⁴).
///
/// The scan uses a log-spaced grid on each side of the origin, brackets
/// sign changes of the analytic derivative and refines them by bisection.
pub fn stationary_points_on_axis(config: &ModelConfig) -> Result<Vec<StationaryPoint>> {
    let shape = PairPotential::from_config(config, 1.0).unit();
    let far = far_minimum_estimate(config.theta);
    let extent = far.map_or(AXIS_SCAN_EXTENT, |r| (3.0 * r).clamp(AXIS_SCAN_EXTENT, AXIS_SCAN_LIMIT));
    let grid = axis_scan_grid(extent);
    let mut points = Vec::new();
    let deriv = |x: f64| shape.dx(x, 0.0);
    let mut prev_x = grid[0];
    let mut prev_d = deriv(prev_x);
    for &x in &grid[1..] {
        let d = deriv(x);
        let root = if d == 0.0 {
            Some(x)
        } else if prev_d != 0.0 && d.signum() != prev_d.signum() {
            Some(crate::roots::bisect(deriv, prev_x, x, AXIS_ROOT_TOL)?)
        } else {
            None
        };
        if let Some(r) = root {
            if points.last().map_or(true, |p: &StationaryPoint| (p.x - r).abs() > 1e-9) {
                let curvature = shape.dxx(r, 0.0);
                let kind = if curvature > 0.0 { StationaryKind::Min } else { StationaryKind::Max };
                points.push(StationaryPoint { x: r, value: config.strength_u * shape.value(r, 0.0), kind });
            }
        }
        prev_x = x;
        prev_d = d;
    }
    let minima = points.iter().filter(|p| p.kind == StationaryKind::Min).count();
    let required = match far {
        Some(r) if 3.0 * r <= AXIS_SCAN_LIMIT => 2,
        _ => 1,
    };
    if minima < required {
        return Err(Error::NoRoot(format!(
            "found {minima} minima of V(x, 0) at theta = {}, expected at least {required}",
            config.theta
        )));
    }
    Ok(points)
}

/// Large-distance position of the shallow x < 0 minimum, from the leading
/// tail `(1 − 3c²)/|x|³ + 6cs/|x|⁴`. Present only for `cos²θ > 1/3`.
fn far_minimum_estimate(theta: f64) -> Option<f64> {
    let (s, c) = theta.sin_cos();
    let k = 3.0 * c * c - 1.0;
    (k > 0.0).then(|| 8.0 * (c * s).abs() / k)
}

fn axis_scan_grid(extent: f64) -> Vec<f64> {
    let n = AXIS_SCAN_POINTS / 2;
    let (lo, hi) = (-7.0f64, extent.log10());
    let side: Vec<f64> = (0..n).map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64)).collect();
    let mut grid: Vec<f64> = side.iter().rev().map(|x| -x).collect();
    grid.push(0.0);
    grid.extend(side);
    grid
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisRange {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl AxisRange {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Self> {
        ensure_finite("range min", min)?;
        ensure_finite("range max", max)?;
        if points < 2 {
            return Err(Error::invalid("grid needs at least 2 points per axis"));
        }
        if max <= min {
            return Err(Error::invalid(format!("empty range [{min}, {max}]")));
        }
        Ok(Self { min, max, points })
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }

    /// Measured from the midpoint so symmetric ranges give exactly
    /// mirrored values.
    pub fn at(&self, i: usize) -> f64 {
        if i == 0 {
            self.min
        } else if i + 1 == self.points {
            self.max
        } else {
            let half = 0.5 * (self.points - 1) as f64;
            0.5 * (self.min + self.max) + (i as f64 - half) * self.step()
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.at(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub x: f64,
    pub y: f64,
    pub value: f64,
}

/// Potential on a rectangular grid, row-major with `x` varying fastest.
pub fn emit_grid(config: &ModelConfig, x: AxisRange, y: AxisRange, strategy: Strategy) -> Vec<GridPoint> {
    let pot = PairPotential::from_config(config, 1.0);
    let xs = x.values();
    strategy
        .map(y.points, |j| {
            let yv = y.at(j);
            xs.iter().map(|&xv| GridPoint { x: xv, y: yv, value: pot.value(xv, yv) }).collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect()
}

/// Potential along the x axis (`y = 0`).
pub fn emit_cut(config: &ModelConfig, x: AxisRange) -> Vec<(f64, f64)> {
    let pot = PairPotential::from_config(config, 1.0);
    x.values().into_iter().map(|xv| (xv, pot.value(xv, 0.0))).collect()
}

pub fn write_grid_csv<W: Write>(mut out: W, grid: &[GridPoint]) -> io::Result<()> {
    writeln!(out, "x,y,V")?;
    for p in grid {
        writeln!(out, "{},{},{}", fmt_sig(p.x), fmt_sig(p.y), fmt_sig(p.value))?;
    }
    Ok(())
}

pub fn write_cut_csv<W: Write>(mut out: W, cut: &[(f64, f64)]) -> io::Result<()> {
    writeln!(out, "x,V")?;
    for (x, v) in cut {
        writeln!(out, "{},{}", fmt_sig(*x), fmt_sig(*v))?;
    }
    Ok(())
}

fn check_distance(pair_distance: f64) -> Result<()> {
    ensure_finite("pair_distance", pair_distance)?;
    if pair_distance <= 0.0 {
        return Err(Error::invalid(format!("pair_distance must be positive, got {pair_distance}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{theta_c, theta_c_star};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn cfg(theta: f64, u: f64) -> ModelConfig {
        ModelConfig::new(theta, u).unwrap()
    }

    #[test]
    fn origin_values() {
        assert_eq!(evaluate(&cfg(FRAC_PI_2, 1.0), 0.0, 0.0, 1.0).unwrap(), -2.0);
        assert_eq!(evaluate(&cfg(0.0, 1.0), 0.0, 0.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn reflection_in_y() {
        let c = cfg(FRAC_PI_4, 1.0);
        assert_eq!(evaluate(&c, 1.0, 1.0, 1.0).unwrap(), evaluate(&c, 1.0, -1.0, 1.0).unwrap());
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = cfg(1.0, 1.0);
        assert!(evaluate(&c, f64::NAN, 0.0, 1.0).is_err());
        assert!(evaluate(&c, 0.0, 0.0, 0.0).is_err());
        assert!(angular_monopole(&c, -1.0, 1.0).is_err());
    }

    #[test]
    fn outer_pair_scaling() {
        // V(x, y; 2d) = V(x/2, y/2; d) / 8
        let p1 = PairPotential::new(0.7, 3.0, 1.0);
        let p2 = PairPotential::new(0.7, 3.0, 2.0);
        for &(x, y) in &[(0.3, 0.1), (-1.0, 2.0), (4.0, -0.5)] {
            let lhs = p2.value(x, y);
            let rhs = p1.value(x / 2.0, y / 2.0) / 8.0;
            assert!((lhs - rhs).abs() < 1e-14 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn monopole_examples() {
        let c = cfg(theta_c(), 1.0);
        for r in [0.5, 1.0, 2.5] {
            assert!(angular_monopole(&c, r, 1.0).unwrap().abs() < 1e-15);
        }
        assert_eq!(angular_monopole(&cfg(FRAC_PI_2, 1.0), 0.0, 1.0).unwrap(), -2.0);
    }

    #[test]
    fn monopole_matches_angular_average() {
        let pot = PairPotential::new(0.4, 1.0, 1.0);
        let n = 256;
        for r in [0.2, 1.3, 3.0] {
            let avg: f64 = (0..n)
                .map(|k| {
                    let phi = 2.0 * PI * k as f64 / n as f64;
                    pot.value(r * phi.cos(), r * phi.sin())
                })
                .sum::<f64>()
                / n as f64;
            assert!((avg - pot.monopole(r)).abs() < 1e-13);
        }
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let pot = PairPotential::new(0.8, 1.0, 1.0);
        let h = 1e-5;
        for &x in &[-1.5, -0.2, 0.0, 0.4, 2.0] {
            let fd = (pot.value(x + h, 0.3) - pot.value(x - h, 0.3)) / (2.0 * h);
            assert!((fd - pot.dx(x, 0.3)).abs() < 1e-8);
            let fd2 = (pot.dx(x + h, 0.3) - pot.dx(x - h, 0.3)) / (2.0 * h);
            assert!((fd2 - pot.dxx(x, 0.3)).abs() < 1e-7);
        }
    }

    #[test]
    fn plane_integral_at_theta_c_vanishes() {
        let v = plane_integral(&cfg(theta_c(), 1.0), 50.0).unwrap();
        assert!(v.abs() < 1e-14);
    }

    #[test]
    fn stationary_points_regimes() {
        let pts = stationary_points_on_axis(&cfg(0.0, 1.0)).unwrap();
        let mins: Vec<_> = pts.iter().filter(|p| p.kind == StationaryKind::Min).collect();
        assert_eq!(mins.len(), 2);
        assert!((mins[0].x + mins[1].x).abs() < 1e-10);
        assert!((mins[0].value - mins[1].value).abs() < 1e-12);

        let pts = stationary_points_on_axis(&cfg(FRAC_PI_2, 1.0)).unwrap();
        let mins: Vec<_> = pts.iter().filter(|p| p.kind == StationaryKind::Min).collect();
        assert_eq!(mins.len(), 1);
        assert!(mins[0].x.abs() < 1e-12);
        // maxima of (x²−2)/(x²+1)^{5/2} at x = ±2
        let maxs: Vec<_> = pts.iter().filter(|p| p.kind == StationaryKind::Max).collect();
        assert_eq!(maxs.len(), 2);
        assert!((maxs[1].x - 2.0).abs() < 1e-10);

        let pts = stationary_points_on_axis(&cfg(0.5, 1.0)).unwrap();
        let mins: Vec<_> = pts.iter().filter(|p| p.kind == StationaryKind::Min).collect();
        assert_eq!(mins.len(), 2);
        let (neg, pos) = (mins[0], mins[1]);
        assert!(neg.x < 0.0 && pos.x > 0.0);
        assert!(pos.value < neg.value);
    }

    #[test]
    fn two_minima_persist_up_to_theta_c_star() {
        let pts = stationary_points_on_axis(&cfg(theta_c_star() - 0.02, 1.0)).unwrap();
        assert_eq!(pts.iter().filter(|p| p.kind == StationaryKind::Min).count(), 2);
        let pts = stationary_points_on_axis(&cfg(theta_c_star() + 0.05, 1.0)).unwrap();
        assert_eq!(pts.iter().filter(|p| p.kind == StationaryKind::Min && p.x < 0.0).count(), 0);
    }

    #[test]
    fn grid_symmetric_and_matches_minimum() {
        let c = cfg(FRAC_PI_4, 1.0);
        let r = AxisRange::new(-3.0, 3.0, 101).unwrap();
        let grid = emit_grid(&c, r, r, Strategy::Serial);
        assert_eq!(grid.len(), 101 * 101);
        for j in 0..101 {
            for i in 0..101 {
                let a = grid[j * 101 + i];
                let b = grid[(100 - j) * 101 + i];
                assert_eq!(a.value, b.value);
                assert_eq!(a.x, b.x);
            }
        }
        let argmin = grid.iter().min_by(|a, b| a.value.total_cmp(&b.value)).unwrap();
        let deep = stationary_points_on_axis(&c)
            .unwrap()
            .into_iter()
            .filter(|p| p.kind == StationaryKind::Min)
            .min_by(|a, b| a.value.total_cmp(&b.value))
            .unwrap();
        assert!((argmin.x - deep.x).abs() <= r.step());
        assert_eq!(argmin.y, 0.0);
        // strong asymmetry in x
        assert!(c.theta < FRAC_PI_2 && grid[50 * 101 + 60].value < grid[50 * 101 + 40].value);
    }

    #[test]
    fn grid_strategies_bit_identical() {
        let c = cfg(0.9, 2.0);
        let r = AxisRange::new(-2.0, 2.0, 33).unwrap();
        let a = emit_grid(&c, r, r, Strategy::Serial);
        let b = emit_grid(&c, r, r, Strategy::Parallel);
        assert_eq!(a, b);
    }

    #[test]
    fn csv_headers() {
        let mut buf = Vec::new();
        write_cut_csv(&mut buf, &[(0.0, -2.0)]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("x,V\n"));
    }
}
