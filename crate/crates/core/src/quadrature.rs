//! Gaussian-weighted expectation values of the exact pair potential.
//!
//! Every energy beyond the pure harmonic model needs
//! `⟨V⟩ = ∬ V(x, y) N(x; μ, σx²) N(y; 0, σy²) dx dy` for some pair
//! marginal. It is evaluated with a tensor-product Gauss–Hermite rule in
//! standardized variables; the node count doubles from 32 up to 256 until
//! successive estimates agree.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_finite, Error, Result};
use crate::potential::PairPotential;

/// Node counts tried in order by [`expect_potential`].
pub const NODE_LEVELS: [usize; 4] = [32, 64, 128, 256];
/// Relative agreement required between successive node levels.
pub const RELATIVE_TOLERANCE: f64 = 1e-9;
/// Absolute floor of the agreement test (unit strength).
pub const ABSOLUTE_FLOOR: f64 = 1e-12;

/// Gauss–Hermite rule for the weight `exp(−t²)`.
#[derive(Debug, Clone)]
pub struct HermiteRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl HermiteRule {
    /// Nodes from the eigenvalues of the Jacobi matrix, each polished by
    /// Newton iteration on the orthonormal Hermite recurrence, which also
    /// gives the weights. Nodes are returned in descending order.
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "Gauss-Hermite rule needs at least two nodes");
        const PIM4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
        let nf = n as f64;
        let jacobi =
            DMatrix::from_fn(n, n, |i, j| if i + 1 == j || j + 1 == i { (i.max(j) as f64 / 2.0).sqrt() } else { 0.0 });
        let mut guesses: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
        guesses.sort_by(|a, b| b.total_cmp(a));
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        for i in 0..(n + 1) / 2 {
            let mut z = if 2 * i + 1 == n { 0.0 } else { 0.5 * (guesses[i] - guesses[n - 1 - i]) };
            let mut pp = 0.0;
            for _ in 0..50 {
                let mut p1 = PIM4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        Self { nodes: x, weights: w }
    }

    /// Cached rule for one of the [`NODE_LEVELS`].
    pub fn cached(n: usize) -> &'static HermiteRule {
        static RULES: [OnceLock<HermiteRule>; 4] = [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
        let idx = NODE_LEVELS
            .iter()
            .position(|&l| l == n)
            .unwrap_or_else(|| panic!("node count {n} is not one of {NODE_LEVELS:?}"));
        RULES[idx].get_or_init(|| HermiteRule::new(n))
    }
}

/// Marginal of a Gaussian state on one pair's relative in-plane offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMarginal {
    pub mean_x: f64,
    pub variance_x: f64,
    pub variance_y: f64,
    pub pair_distance: f64,
}

impl PairMarginal {
    pub fn new(mean_x: f64, variance_x: f64, variance_y: f64, pair_distance: f64) -> Result<Self> {
        ensure_finite("mean_x", mean_x)?;
        ensure_finite("variance_x", variance_x)?;
        ensure_finite("variance_y", variance_y)?;
        ensure_finite("pair_distance", pair_distance)?;
        if variance_x <= 0.0 || variance_y <= 0.0 {
            return Err(Error::invalid(format!(
                "marginal variances must be positive, got ({variance_x}, {variance_y})"
            )));
        }
        if pair_distance <= 0.0 {
            return Err(Error::invalid("pair_distance must be positive"));
        }
        Ok(Self { mean_x, variance_x, variance_y, pair_distance })
    }
}

/// `⟨V⟩` with a fixed number of Gauss–Hermite nodes per axis, evaluated at
/// unit strength. The y sum uses the mirror symmetry of both the weight
/// and the potential, so only positive y nodes are visited.
pub fn expect_unit_potential_fixed(marginal: &PairMarginal, theta: f64, nodes: usize) -> f64 {
    let rule = HermiteRule::cached(nodes);
    let pot = PairPotential::new(theta, 1.0, marginal.pair_distance);
    let sx = (2.0 * marginal.variance_x).sqrt();
    let sy = (2.0 * marginal.variance_y).sqrt();
    let half = nodes / 2;
    let ys: Vec<(f64, f64)> = (0..half).map(|j| (sy * rule.nodes[j], 2.0 * rule.weights[j])).collect();
    let mut total = 0.0;
    for (&tx, &wx) in rule.nodes.iter().zip(&rule.weights) {
        let x = marginal.mean_x + sx * tx;
        let mut row = 0.0;
        for &(y, wy) in &ys {
            row += wy * pot.value(x, y);
        }
        total += wx * row;
    }
    total / std::f64::consts::PI
}

/// Result of the adaptive expectation: value and the node count at which
/// successive estimates agreed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expectation {
    pub value: f64,
    pub nodes: usize,
}

/// Adaptive `⟨V⟩` with node doubling 32 → 256.
pub fn expect_potential(marginal: &PairMarginal, theta: f64, strength_u: f64) -> Result<f64> {
    expect_potential_detailed(marginal, theta, strength_u).map(|e| e.value)
}

pub fn expect_potential_detailed(marginal: &PairMarginal, theta: f64, strength_u: f64) -> Result<Expectation> {
    let mut previous = expect_unit_potential_fixed(marginal, theta, NODE_LEVELS[0]);
    for &nodes in &NODE_LEVELS[1..] {
        let current = expect_unit_potential_fixed(marginal, theta, nodes);
        if (current - previous).abs() <= (RELATIVE_TOLERANCE * current.abs()).max(ABSOLUTE_FLOOR) {
            return Ok(Expectation { value: strength_u * current, nodes });
        }
        if nodes == *NODE_LEVELS.last().unwrap() {
            return Err(Error::QuadratureNotConverged {
                nodes,
                previous: strength_u * previous,
                last: strength_u * current,
            });
        }
        previous = current;
    }
    unreachable!("node levels exhausted")
}

/// Multivariate Gaussian density `∝ exp(−½ (q−μ)ᵀ P (q−μ))` over Jacobi
/// modes, described by its precision matrix `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDensity {
    pub mean: DVector<f64>,
    pub precision: DMatrix<f64>,
}

impl GaussianDensity {
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        let chol = self
            .precision
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite(format!("precision {:?}", self.precision.as_slice())))?;
        Ok(chol.inverse())
    }
}

/// Project x- and y-sector Gaussians onto the pair coordinate `c·q`.
/// The y sector has zero mean by construction.
pub fn gaussian_product_marginal(
    x_density: &GaussianDensity,
    y_precision: &DMatrix<f64>,
    pair_coefficients: &[f64],
    pair_distance: f64,
) -> Result<PairMarginal> {
    let c = DVector::from_column_slice(pair_coefficients);
    if c.len() != x_density.mean.len() || y_precision.nrows() != c.len() {
        return Err(Error::invalid("pair coefficients do not match the number of modes"));
    }
    let cov_x = x_density.covariance()?;
    let cov_y = GaussianDensity { mean: DVector::zeros(c.len()), precision: y_precision.clone() }.covariance()?;
    let mean_x = c.dot(&x_density.mean);
    let variance_x = c.dot(&(&cov_x * &c));
    let variance_y = c.dot(&(&cov_y * &c));
    PairMarginal::new(mean_x, variance_x, variance_y, pair_distance)
}

/// 20-point Gauss–Legendre estimate of `∫_a^b f`.
pub(crate) fn gauss_legendre_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let (nodes, weights) = RULE.get_or_init(|| legendre_rule(20));
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    nodes.iter().zip(weights).map(|(&t, &w)| w * f(mid + half * t)).sum::<f64>() * half
}

fn legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}
