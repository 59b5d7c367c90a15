//! Exactly solvable harmonic model of the three-layer chain.
//!
//! Each interlayer pair `(i, j)` contributes
//! `k_x (x_i − x_j − s)² + k_y (y_i − y_j)² + c`. In Jacobi coordinates the
//! x and y sectors decouple into 2×2 quadratic forms that are solved by
//! completing the square and diagonalizing.

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen, Vector2};
use serde::Serialize;

pub use crate::jacobi::{from_jacobi, particle_coefficients, to_jacobi, Bodies, Pair};

use crate::error::{Error, Result};
use crate::exec::Strategy;
use crate::landscape::ExpansionCoefficients;
use crate::output::fmt_sig;
use crate::potential::AxisRange;
use crate::quadrature::{gaussian_product_marginal, GaussianDensity, PairMarginal};

/// Harmonic interaction of one interlayer pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairTerm {
    pub pair: Pair,
    pub coupling_x: f64,
    pub coupling_y: f64,
    pub shift_x: f64,
    pub constant: f64,
}

/// Sum of the three pairwise harmonic terms of a chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarmonicChainModel {
    pub terms: Vec<PairTerm>,
}

impl HarmonicChainModel {
    /// Chain obtained by expanding every pair around its own minimum. The
    /// outer pair sits at twice the spacing: couplings scale by 1/2⁵, the
    /// shift by 2 and the offset by 1/2³.
    pub fn from_expansion(coeffs: &ExpansionCoefficients, strength_u: f64) -> Self {
        let near = |pair| PairTerm {
            pair,
            coupling_x: strength_u * coeffs.alpha0,
            coupling_y: strength_u * coeffs.beta0,
            shift_x: coeffs.a0,
            constant: strength_u * coeffs.v0,
        };
        let outer = PairTerm {
            pair: Pair::OneThree,
            coupling_x: strength_u * coeffs.alpha0 / 32.0,
            coupling_y: strength_u * coeffs.beta0 / 32.0,
            shift_x: 2.0 * coeffs.a0,
            constant: strength_u * coeffs.v0 / 8.0,
        };
        Self { terms: vec![near(Pair::OneTwo), near(Pair::TwoThree), outer] }
    }

    pub fn term(&self, pair: Pair) -> Option<&PairTerm> {
        self.terms.iter().find(|t| t.pair == pair)
    }

    pub fn total_constant(&self) -> f64 {
        self.terms.iter().map(|t| t.constant).sum()
    }
}

/// Gaussian `exp(−½ (q − μ)ᵀ W (q − μ))` over the two Jacobi modes of one
/// in-plane direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeGaussian {
    pub width: Matrix2<f64>,
    pub center: Vector2<f64>,
}

impl ModeGaussian {
    pub fn diagonal(widths: [f64; 2], center: [f64; 2]) -> Self {
        Self { width: Matrix2::new(widths[0], 0.0, 0.0, widths[1]), center: Vector2::new(center[0], center[1]) }
    }

    /// Covariance of `|ψ|²`, i.e. `(2W)⁻¹`.
    pub fn covariance(&self) -> Matrix2<f64> {
        (2.0 * self.width).try_inverse().expect("width matrix is positive definite")
    }

    /// `⟨−½∇²⟩` of the normalized Gaussian.
    pub fn kinetic_energy(&self) -> f64 {
        0.25 * self.width.trace()
    }

    fn density(&self) -> GaussianDensity {
        GaussianDensity {
            mean: DVector::from_column_slice(self.center.as_slice()),
            precision: DMatrix::from_column_slice(2, 2, (2.0 * self.width).as_slice()),
        }
    }
}

/// Product Gaussian ground state of a chain in Jacobi coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainGaussian {
    pub x: ModeGaussian,
    pub y: ModeGaussian,
}

/// The four Jacobi modes of a three-body chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobiMode {
    Q1x,
    Q2x,
    Q1y,
    Q2y,
}

impl ChainGaussian {
    /// Normalization `N` of `N exp(…)`, with `N² = √(det Wx det Wy) / π²`.
    pub fn normalization(&self) -> f64 {
        ((self.x.width.determinant() * self.y.width.determinant()).sqrt() / (PI * PI)).sqrt()
    }

    /// Diagonal width of one mode.
    pub fn mode_width(&self, mode: JacobiMode) -> f64 {
        match mode {
            JacobiMode::Q1x => self.x.width[(0, 0)],
            JacobiMode::Q2x => self.x.width[(1, 1)],
            JacobiMode::Q1y => self.y.width[(0, 0)],
            JacobiMode::Q2y => self.y.width[(1, 1)],
        }
    }

    pub fn mode_center(&self, mode: JacobiMode) -> f64 {
        match mode {
            JacobiMode::Q1x => self.x.center[0],
            JacobiMode::Q2x => self.x.center[1],
            JacobiMode::Q1y => self.y.center[0],
            JacobiMode::Q2y => self.y.center[1],
        }
    }

    /// Normalized amplitude at Jacobi coordinates `(qx, qy)`.
    pub fn amplitude(&self, qx: [f64; 2], qy: [f64; 2]) -> f64 {
        let quad = |g: &ModeGaussian, q: [f64; 2]| {
            let d = Vector2::new(q[0], q[1]) - g.center;
            d.dot(&(g.width * d))
        };
        self.normalization() * (-0.5 * (quad(&self.x, qx) + quad(&self.y, qy))).exp()
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.x.kinetic_energy() + self.y.kinetic_energy()
    }

    /// Marginal of `|Ψ|²` on a pair's relative coordinate.
    pub fn pair_marginal(&self, pair: Pair) -> Result<PairMarginal> {
        let yp = DMatrix::from_column_slice(2, 2, (2.0 * self.y.width).as_slice());
        gaussian_product_marginal(&self.x.density(), &yp, &pair.coefficients(Bodies::Three), pair.distance())
    }

    /// Marginal of `|Ψ|²` on one molecule's in-plane position with the chain's
    /// center of mass at the origin.
    pub fn layer_marginal(&self, particle: usize) -> Result<LayerMarginal> {
        if !(1..=3).contains(&particle) {
            return Err(Error::invalid(format!("particle must be 1, 2 or 3, got {particle}")));
        }
        let r = particle_coefficients(Bodies::Three, particle);
        let r = Vector2::new(r[0], r[1]);
        Ok(LayerMarginal {
            mean_x: r.dot(&self.x.center),
            mean_y: r.dot(&self.y.center),
            variance_x: r.dot(&(self.x.covariance() * r)),
            variance_y: r.dot(&(self.y.covariance() * r)),
        })
    }
}

/// Independent 2D Gaussian density of one molecule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayerMarginal {
    pub mean_x: f64,
    pub mean_y: f64,
    pub variance_x: f64,
    pub variance_y: f64,
}

impl LayerMarginal {
    pub fn density(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.mean_x;
        let dy = y - self.mean_y;
        (-0.5 * (dx * dx / self.variance_x + dy * dy / self.variance_y)).exp()
            / (2.0 * PI * (self.variance_x * self.variance_y).sqrt())
    }
}

/// Ground state of a harmonic chain.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSolution {
    pub energy: f64,
    pub state: ChainGaussian,
    /// Energies `ħω/2` of the normal modes, x sector first.
    pub mode_energies: [f64; 4],
    /// Constant left after completing the squares; zero when the pair
    /// shifts are geometrically compatible.
    pub frustration: f64,
}

struct SectorSolution {
    gaussian: ModeGaussian,
    mode_energies: [f64; 2],
    frustration: f64,
}

fn solve_sector(terms: &[(f64, f64, Vector2<f64>)], label: &str) -> Result<SectorSolution> {
    // Σ k (c·q − s)² = qᵀAq − 2bᵀq + Σ k s²
    let mut a = Matrix2::zeros();
    let mut b = Vector2::zeros();
    let mut ks2 = 0.0;
    for &(k, s, c) in terms {
        a += k * c * c.transpose();
        b += k * s * c;
        ks2 += k * s * s;
    }
    let eig = SymmetricEigen::new(a);
    let lmin = eig.eigenvalues.min();
    if !(lmin > 1e-14 * eig.eigenvalues.max().abs()) || lmin <= 0.0 {
        return Err(Error::NotPositiveDefinite(format!(
            "{label} sector form has eigenvalues {:?}",
            eig.eigenvalues.as_slice()
        )));
    }
    let center = a.try_inverse().expect("positive definite") * b;
    let frustration = ks2 - b.dot(&center);
    // −½∂² + λq²: ω = √(2λ), ground width √(2λ), energy √(λ/2)
    let sqrt_diag = Matrix2::from_diagonal(&eig.eigenvalues.map(|l| (2.0 * l).sqrt()));
    let width = eig.eigenvectors * sqrt_diag * eig.eigenvectors.transpose();
    let width = 0.5 * (width + width.transpose());
    let mut mode_energies = [(eig.eigenvalues[0] / 2.0).sqrt(), (eig.eigenvalues[1] / 2.0).sqrt()];
    mode_energies.sort_by(|p, q| q.total_cmp(p));
    Ok(SectorSolution { gaussian: ModeGaussian { width, center }, mode_energies, frustration })
}

/// Ground state of any three-body harmonic chain by completion of squares
/// and diagonalization of the Jacobi-space quadratic forms.
pub fn solve_quadratic_model(model: &HarmonicChainModel) -> Result<QuadraticSolution> {
    let mut x_terms = Vec::new();
    let mut y_terms = Vec::new();
    for t in &model.terms {
        // a vanishing coupling is fine as long as the other pairs bind
        if !(t.coupling_x >= 0.0 && t.coupling_y >= 0.0) {
            return Err(Error::NotPositiveDefinite(format!(
                "pair {} has negative couplings ({}, {})",
                t.pair.label(),
                t.coupling_x,
                t.coupling_y
            )));
        }
        let c = t.pair.coefficients(Bodies::Three);
        let c = Vector2::new(c[0], c[1]);
        x_terms.push((t.coupling_x, t.shift_x, c));
        y_terms.push((t.coupling_y, 0.0, c));
    }
    let xs = solve_sector(&x_terms, "x")?;
    let ys = solve_sector(&y_terms, "y")?;
    let frustration = xs.frustration + ys.frustration;
    let zero_point: f64 = xs.mode_energies.iter().chain(&ys.mode_energies).sum();
    Ok(QuadraticSolution {
        energy: zero_point + frustration + model.total_constant(),
        state: ChainGaussian { x: xs.gaussian, y: ys.gaussian },
        mode_energies: [xs.mode_energies[0], xs.mode_energies[1], ys.mode_energies[0], ys.mode_energies[1]],
        frustration,
    })
}

/// Geometric factor `√(3/2) + √(17/32)` of the chain energy.
pub fn chain_mode_factor() -> f64 {
    1.5f64.sqrt() + (17.0f64 / 32.0).sqrt()
}

/// Closed-form energy of the expanded three-body chain,
/// `(√(3/2) + √(17/32))(√α₀ + √β₀)√U + (17/8) v₀ U`.
pub fn closed_form_energy(coeffs: &ExpansionCoefficients, strength_u: f64) -> f64 {
    chain_mode_factor() * (coeffs.alpha0.sqrt() + coeffs.beta0.sqrt()) * strength_u.sqrt()
        + 17.0 / 8.0 * coeffs.v0 * strength_u
}

/// Closed-form ground state of the expanded chain: widths
/// `√(17Uα₀/8), √(6Uα₀), √(17Uβ₀/8), √(6Uβ₀)` and `q₁x` centered at `√2 a₀`.
pub fn chain_wavefunction(coeffs: &ExpansionCoefficients, strength_u: f64) -> ChainGaussian {
    let u = strength_u;
    ChainGaussian {
        x: ModeGaussian::diagonal(
            [(17.0 * u * coeffs.alpha0 / 8.0).sqrt(), (6.0 * u * coeffs.alpha0).sqrt()],
            [std::f64::consts::SQRT_2 * coeffs.a0, 0.0],
        ),
        y: ModeGaussian::diagonal(
            [(17.0 * u * coeffs.beta0 / 8.0).sqrt(), (6.0 * u * coeffs.beta0).sqrt()],
            [0.0, 0.0],
        ),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityPoint {
    pub x: f64,
    pub y: f64,
    pub density: f64,
}

/// Probability density of one molecule's position on a grid, row-major with
/// `x` varying fastest.
pub fn layer_density(
    state: &ChainGaussian,
    particle: usize,
    x: AxisRange,
    y: AxisRange,
    strategy: Strategy,
) -> Result<Vec<DensityPoint>> {
    let marginal = state.layer_marginal(particle)?;
    let xs = x.values();
    Ok(strategy
        .map(y.points, |j| {
            let yv = y.at(j);
            xs.iter().map(|&xv| DensityPoint { x: xv, y: yv, density: marginal.density(xv, yv) }).collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect())
}

/// Write per-layer densities as CSV `layer,x,y,F`.
pub fn write_density_csv<W: Write>(mut out: W, layers: &[(usize, Vec<DensityPoint>)]) -> io::Result<()> {
    writeln!(out, "layer,x,y,F")?;
    for (layer, points) in layers {
        for p in points {
            writeln!(out, "{layer},{},{},{}", fmt_sig(p.x), fmt_sig(p.y), fmt_sig(p.density))?;
        }
    }
    Ok(())
}
