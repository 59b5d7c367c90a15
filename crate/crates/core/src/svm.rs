//! Stochastic variational reference solver.
//!
//! The basis is a product of an x-sector Gaussian with its own center and a
//! centered y-sector Gaussian over the Jacobi modes,
//!
//! ```text
//! g(qx, qy) = exp(−½ (qx − c)ᵀ A (qx − c) − ½ qyᵀ B qy),
//! ```
//!
//! so the shifted, deformed geometry of tilted dipoles is represented while
//! the ground state stays even in y. The basis grows one element per step:
//! a batch of random candidates is scored through the bordered generalized
//! eigenproblem and the best one that keeps the overlap well conditioned is
//! kept.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::ChainGaussian;
use crate::error::{ensure_finite, Error, Result};
use crate::exec::Strategy;
use crate::jacobi::{Bodies, Pair};
use crate::landscape::expansion_coefficients;
use crate::output::fmt_sig;
use crate::quadrature::{expect_potential, PairMarginal};

/// One correlated Gaussian of the basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmBasisElement {
    pub x_form: DMatrix<f64>,
    pub x_center: DVector<f64>,
    pub y_form: DMatrix<f64>,
}

fn check_form(form: &DMatrix<f64>, what: &str) -> Result<()> {
    if !form.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid(format!("{what} has non-finite entries")));
    }
    let eig = form.clone().symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(hi > 0.0 && lo > 1e-14 * hi) {
        return Err(Error::NotPositiveDefinite(format!("{what} eigenvalues {:?}", eig.as_slice())));
    }
    Ok(())
}

impl SvmBasisElement {
    pub fn new(x_form: DMatrix<f64>, x_center: DVector<f64>, y_form: DMatrix<f64>) -> Result<Self> {
        let n = x_center.len();
        if x_form.shape() != (n, n) || y_form.shape() != (n, n) {
            return Err(Error::invalid("basis element dimensions disagree"));
        }
        check_form(&x_form, "x form")?;
        check_form(&y_form, "y form")?;
        if !x_center.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("x center must be finite"));
        }
        Ok(Self { x_form, x_center, y_form })
    }

    pub fn modes(&self) -> usize {
        self.x_center.len()
    }

    /// The product Gaussian of a harmonic chain state.
    pub fn from_chain_gaussian(state: &ChainGaussian) -> Result<Self> {
        let x = DMatrix::from_column_slice(2, 2, state.x.width.as_slice());
        let y = DMatrix::from_column_slice(2, 2, state.y.width.as_slice());
        if state.y.center.norm() > 0.0 {
            return Err(Error::invalid("basis elements have no y shift"));
        }
        Self::new(x, DVector::from_column_slice(state.x.center.as_slice()), y)
    }

    /// Two-body Gaussian `exp(−α/2 (x_rel − a)² − β/2 y_rel²)` expressed in
    /// the Jacobi mode `q = x_rel/√2`.
    pub fn from_pair_widths(alpha: f64, beta: f64, shift: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_element(1, 1, 2.0 * alpha),
            DVector::from_element(1, shift / std::f64::consts::SQRT_2),
            DMatrix::from_element(1, 1, 2.0 * beta),
        )
    }

    /// Center of the element on a pair's relative x coordinate.
    pub fn pair_center(&self, coefficients: &[f64]) -> f64 {
        coefficients.iter().zip(self.x_center.iter()).map(|(c, m)| c * m).sum()
    }
}

/// Product of two sector Gaussians.
struct SectorProduct {
    log_overlap: f64,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    /// `⟨a|−½∇²|b⟩ / ⟨a|b⟩`
    kinetic_ratio: f64,
}

fn sector_product(a: &DMatrix<f64>, ca: &DVector<f64>, b: &DMatrix<f64>, cb: &DVector<f64>) -> Result<SectorProduct> {
    let n = ca.len();
    let m = a + b;
    let chol = m.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite("sum of basis forms".into()))?;
    let v = a * ca + b * cb;
    let mean = chol.solve(&v);
    let covariance = chol.inverse();
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    // summed first so swapping a and b is exact
    let own = ca.dot(&(a * ca)) + cb.dot(&(b * cb));
    let log_overlap =
        0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det + 0.5 * v.dot(&mean) - 0.5 * own;
    let ab = a * b;
    let kinetic_ratio = 0.5 * ((&ab * &covariance).trace() + (&mean - ca).dot(&(&ab * (&mean - cb))));
    Ok(SectorProduct { log_overlap, mean, covariance, kinetic_ratio })
}

fn zero_center(n: usize) -> DVector<f64> {
    DVector::zeros(n)
}

/// `⟨a|b⟩`.
pub fn overlap(a: &SvmBasisElement, b: &SvmBasisElement) -> Result<f64> {
    let x = sector_product(&a.x_form, &a.x_center, &b.x_form, &b.x_center)?;
    let z = zero_center(a.modes());
    let y = sector_product(&a.y_form, &z, &b.y_form, &z)?;
    Ok((x.log_overlap + y.log_overlap).exp())
}

/// `⟨a|T|b⟩` with `T = −½∇²` over all Jacobi modes.
pub fn kinetic_element(a: &SvmBasisElement, b: &SvmBasisElement) -> Result<f64> {
    let x = sector_product(&a.x_form, &a.x_center, &b.x_form, &b.x_center)?;
    let z = zero_center(a.modes());
    let y = sector_product(&a.y_form, &z, &b.y_form, &z)?;
    Ok((x.log_overlap + y.log_overlap).exp() * (x.kinetic_ratio + y.kinetic_ratio))
}

/// Problem definition shared by all matrix elements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmProblem {
    pub theta: f64,
    pub strength_u: f64,
    pub bodies: Bodies,
}

impl SvmProblem {
    pub fn new(theta: f64, strength_u: f64, bodies: Bodies) -> Result<Self> {
        ensure_finite("theta", theta)?;
        ensure_finite("strength_u", strength_u)?;
        if strength_u < 0.0 {
            return Err(Error::invalid("strength_u must be >= 0"));
        }
        Ok(Self { theta, strength_u, bodies })
    }

    fn pairs(&self) -> Vec<(Pair, Vec<f64>)> {
        self.bodies.pairs().iter().map(|&p| (p, p.coefficients(self.bodies))).collect()
    }
}

/// Σ over pairs of `⟨a|V_pair|b⟩`.
pub fn potential_element(a: &SvmBasisElement, b: &SvmBasisElement, problem: &SvmProblem) -> Result<f64> {
    let x = sector_product(&a.x_form, &a.x_center, &b.x_form, &b.x_center)?;
    let z = zero_center(a.modes());
    let y = sector_product(&a.y_form, &z, &b.y_form, &z)?;
    let s = (x.log_overlap + y.log_overlap).exp();
    Ok(s * potential_ratio(&x, &y, problem, &problem.pairs())?)
}

fn potential_ratio(
    x: &SectorProduct,
    y: &SectorProduct,
    problem: &SvmProblem,
    pairs: &[(Pair, Vec<f64>)],
) -> Result<f64> {
    if problem.strength_u == 0.0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (pair, c) in pairs {
        let c = DVector::from_column_slice(c);
        let marginal = PairMarginal::new(
            c.dot(&x.mean),
            c.dot(&(&x.covariance * &c)),
            c.dot(&(&y.covariance * &c)),
            pair.distance(),
        )?;
        total += expect_potential(&marginal, problem.theta, problem.strength_u)?;
    }
    Ok(total)
}

/// Normalized overlap and Hamiltonian element between two elements, plus
/// the log-norms needed to normalize.
struct Elements {
    log_overlap: f64,
    energy_ratio: f64,
}

fn raw_elements(
    a: &SvmBasisElement,
    b: &SvmBasisElement,
    problem: &SvmProblem,
    pairs: &[(Pair, Vec<f64>)],
) -> Result<Elements> {
    let x = sector_product(&a.x_form, &a.x_center, &b.x_form, &b.x_center)?;
    let z = zero_center(a.modes());
    let y = sector_product(&a.y_form, &z, &b.y_form, &z)?;
    let v = potential_ratio(&x, &y, problem, pairs)?;
    Ok(Elements { log_overlap: x.log_overlap + y.log_overlap, energy_ratio: x.kinetic_ratio + y.kinetic_ratio + v })
}

/// Lowest generalized eigenpair of `H c = E S c`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundSolution {
    pub energies: DVector<f64>,
    /// Columns are S-orthonormal eigenvectors.
    pub vectors: DMatrix<f64>,
}

impl GroundSolution {
    pub fn energy(&self) -> f64 {
        self.energies[0]
    }
}

/// Symmetric-definite generalized eigenproblem via Cholesky reduction.
pub fn generalized_eigen(h: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<GroundSolution> {
    let chol = s.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite("overlap matrix".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(s.nrows(), s.nrows()))
        .ok_or_else(|| Error::Eigen("singular Cholesky factor".into()))?;
    let reduced = &linv * h * linv.transpose();
    let reduced = 0.5 * (&reduced + reduced.transpose());
    let eig = reduced.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let energies = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let y = DMatrix::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
    let vectors = linv.transpose() * y;
    if !energies.iter().all(|e| e.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalues".into()));
    }
    Ok(GroundSolution { energies, vectors })
}

/// Lowest eigenvalue after bordering the current solution with one new,
/// normalized function with overlaps `s`, couplings `h` and diagonal `h_nn`.
fn bordered_lowest(ground: &GroundSolution, s: &DVector<f64>, h: &DVector<f64>, h_nn: f64) -> Option<f64> {
    let sigma = ground.vectors.tr_mul(s);
    let eta = ground.vectors.tr_mul(h);
    let nu = 1.0 - sigma.norm_squared();
    if !(nu > 1e-10) {
        return None;
    }
    let e = &ground.energies;
    let g: DVector<f64> = DVector::from_iterator(e.len(), (0..e.len()).map(|i| (eta[i] - e[i] * sigma[i]) / nu.sqrt()));
    let corner = (h_nn - 2.0 * sigma.dot(&eta) + sigma.iter().zip(e.iter()).map(|(s, e)| s * s * e).sum::<f64>()) / nu;
    let e0 = e[0];
    let f = |lambda: f64| corner - lambda - g.iter().zip(e.iter()).map(|(gi, ei)| gi * gi / (ei - lambda)).sum::<f64>();
    let mut lo = corner.min(e0) - g.iter().map(|v| v.abs()).sum::<f64>() - 1.0;
    while f(lo) <= 0.0 {
        lo -= 2.0 * (e0 - lo).abs().max(1.0);
    }
    let mut hi = e0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi.min(e0))
}

/// Sampling and acceptance settings of the basis growth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmOptions {
    pub target_basis: usize,
    pub candidates_per_step: usize,
    pub seed: u64,
    /// Pair widths are `scale · r` with `r` log-uniform in this range and
    /// `scale = √(U α₀)` (x) or `√(U β₀)` (y).
    pub width_range: (f64, f64),
    /// Pair shifts are uniform in `a₀ ± factor · max(a₀, 0.5)`.
    pub shift_factor: f64,
    /// Minimum ratio of smallest to largest overlap eigenvalue.
    pub conditioning: f64,
    /// Stop once the energy changed by less than this over the last 20% of
    /// accepted elements.
    pub plateau_tolerance: f64,
    /// Passes over the grown basis that try to replace each element.
    pub refine_sweeps: usize,
    pub refine_candidates: usize,
    pub strategy: Strategy,
}

impl Default for SvmOptions {
    fn default() -> Self {
        Self {
            target_basis: 80,
            candidates_per_step: 30,
            seed: 1,
            width_range: (0.05, 2.0),
            shift_factor: 0.3,
            conditioning: 1e-12,
            plateau_tolerance: 1e-4,
            refine_sweeps: 0,
            refine_candidates: 10,
            strategy: Strategy::default(),
        }
    }
}

/// Growing SVM basis with its normalized matrices.
#[derive(Debug, Clone)]
pub struct SvmState {
    pub problem: SvmProblem,
    pub basis: Vec<SvmBasisElement>,
    /// Overlaps of the normalized basis (unit diagonal).
    pub overlap_matrix: DMatrix<f64>,
    pub hamiltonian_matrix: DMatrix<f64>,
    /// `(basis_size, ground_energy)` after every accepted element.
    pub energy_history: Vec<(usize, f64)>,
    pub rng_seed: u64,
    log_norms: Vec<f64>,
    ground: Option<GroundSolution>,
    steps: u64,
    pairs: Vec<(Pair, Vec<f64>)>,
}

/// Outcome of one growth step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub accepted: bool,
    pub energy: Option<f64>,
    pub rejected_quadrature: usize,
    pub rejected_conditioning: usize,
}

struct Candidate {
    element: SvmBasisElement,
    log_norm: f64,
    s_row: DVector<f64>,
    h_row: DVector<f64>,
    h_diag: f64,
    estimate: f64,
}

impl SvmState {
    pub fn new(problem: SvmProblem, rng_seed: u64) -> Self {
        let pairs = problem.pairs();
        Self {
            problem,
            basis: Vec::new(),
            overlap_matrix: DMatrix::zeros(0, 0),
            hamiltonian_matrix: DMatrix::zeros(0, 0),
            energy_history: Vec::new(),
            rng_seed,
            log_norms: Vec::new(),
            ground: None,
            steps: 0,
            pairs,
        }
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn energy(&self) -> Option<f64> {
        self.ground.as_ref().map(GroundSolution::energy)
    }

    /// Ground-state coefficients over the normalized basis.
    pub fn ground_coefficients(&self) -> Option<DVector<f64>> {
        self.ground.as_ref().map(|g| g.vectors.column(0).into_owned())
    }

    fn evaluate_candidate(&self, element: SvmBasisElement) -> Result<Candidate> {
        let mut c = self.candidate_rows(element)?;
        c.estimate = match &self.ground {
            None => Some(c.h_diag),
            Some(g) => bordered_lowest(g, &c.s_row, &c.h_row, c.h_diag),
        }
        .ok_or_else(|| Error::NotPositiveDefinite("candidate is linearly dependent on the basis".into()))?;
        Ok(c)
    }

    fn candidate_rows(&self, element: SvmBasisElement) -> Result<Candidate> {
        let diag = raw_elements(&element, &element, &self.problem, &self.pairs)?;
        let log_norm = 0.5 * diag.log_overlap;
        let n = self.basis.len();
        let mut s_row = DVector::zeros(n);
        let mut h_row = DVector::zeros(n);
        for (j, other) in self.basis.iter().enumerate() {
            let el = raw_elements(&element, other, &self.problem, &self.pairs)?;
            let s = (el.log_overlap - log_norm - self.log_norms[j]).exp();
            s_row[j] = s;
            h_row[j] = s * el.energy_ratio;
        }
        let h_diag = diag.energy_ratio;
        Ok(Candidate { element, log_norm, s_row, h_row, h_diag, estimate: f64::NAN })
    }

    fn bordered_matrices(&self, c: &Candidate) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.basis.len();
        let mut s = DMatrix::identity(n + 1, n + 1);
        let mut h = DMatrix::zeros(n + 1, n + 1);
        s.view_mut((0, 0), (n, n)).copy_from(&self.overlap_matrix);
        h.view_mut((0, 0), (n, n)).copy_from(&self.hamiltonian_matrix);
        for j in 0..n {
            s[(n, j)] = c.s_row[j];
            s[(j, n)] = c.s_row[j];
            h[(n, j)] = c.h_row[j];
            h[(j, n)] = c.h_row[j];
        }
        h[(n, n)] = c.h_diag;
        (s, h)
    }

    /// Try to append a scored candidate; returns the new energy on success.
    fn try_accept(&mut self, c: Candidate, conditioning: f64) -> Result<Option<f64>> {
        let (s, h) = self.bordered_matrices(&c);
        let eig = s.clone().symmetric_eigenvalues();
        if !(eig.min() >= conditioning * eig.max()) {
            return Ok(None);
        }
        let ground = match generalized_eigen(&h, &s) {
            Ok(g) => g,
            Err(Error::NotPositiveDefinite(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let energy = ground.energy();
        if let Some(current) = self.energy() {
            if energy > current {
                return Ok(None);
            }
        }
        self.basis.push(c.element);
        self.log_norms.push(c.log_norm);
        self.overlap_matrix = s;
        self.hamiltonian_matrix = h;
        self.ground = Some(ground);
        self.energy_history.push((self.basis.len(), energy));
        Ok(Some(energy))
    }

    /// Offer a specific element (e.g. a harmonic guess) to the basis.
    pub fn try_insert(&mut self, element: SvmBasisElement, conditioning: f64) -> Result<Option<f64>> {
        if element.modes() != self.problem.bodies.modes() {
            return Err(Error::invalid("element has the wrong number of modes"));
        }
        let c = self.evaluate_candidate(element)?;
        self.try_accept(c, conditioning)
    }

    fn sample(&self, rng: &mut ChaCha8Rng, options: &SvmOptions, scales: &Scales) -> Result<SvmBasisElement> {
        let n = self.problem.bodies.modes();
        let (lo, hi) = (options.width_range.0.ln(), options.width_range.1.ln());
        let log_uniform = |rng: &mut ChaCha8Rng| (lo + (hi - lo) * rng.gen::<f64>()).exp();
        let mut a = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, n);
        for (_, c) in &self.pairs {
            let c = DVector::from_column_slice(c);
            let cc = &c * c.transpose();
            a += scales.x * log_uniform(rng) * &cc;
            b += scales.y * log_uniform(rng) * &cc;
        }
        let span = options.shift_factor * scales.shift;
        let d12 = scales.center + span * (2.0 * rng.gen::<f64>() - 1.0);
        let center = match self.problem.bodies {
            Bodies::Two => DVector::from_element(1, d12 / std::f64::consts::SQRT_2),
            Bodies::Three => {
                let d23 = scales.center + span * (2.0 * rng.gen::<f64>() - 1.0);
                DVector::from_vec(vec![(d12 + d23) / std::f64::consts::SQRT_2, (d12 - d23) / 6f64.sqrt()])
            }
        };
        SvmBasisElement::new(a, center, b)
    }

    /// One growth step with `candidates` random trial elements.
    pub fn grow_basis(&mut self, options: &SvmOptions) -> Result<StepOutcome> {
        let scales = Scales::for_problem(&self.problem)?;
        let step = self.steps;
        self.steps += 1;
        let evaluated: Vec<Result<Candidate>> = options.strategy.map(options.candidates_per_step, |i| {
            let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
            rng.set_stream((step << 20) | i as u64);
            let element = self.sample(&mut rng, options, &scales)?;
            self.evaluate_candidate(element)
        });
        let mut rejected_quadrature = 0;
        let mut rejected_conditioning = 0;
        let mut candidates = Vec::new();
        for c in evaluated {
            match c {
                Ok(c) => candidates.push(c),
                Err(Error::QuadratureNotConverged { .. }) => rejected_quadrature += 1,
                Err(Error::NotPositiveDefinite(_)) => rejected_conditioning += 1,
                Err(e) => return Err(e),
            }
        }
        candidates.sort_by(|a, b| a.estimate.total_cmp(&b.estimate));
        for c in candidates {
            if let Some(energy) = self.try_accept(c, options.conditioning)? {
                return Ok(StepOutcome {
                    accepted: true,
                    energy: Some(energy),
                    rejected_quadrature,
                    rejected_conditioning,
                });
            }
            rejected_conditioning += 1;
        }
        Ok(StepOutcome { accepted: false, energy: self.energy(), rejected_quadrature, rejected_conditioning })
    }

    /// Try to replace element `index` by the best of `options.refine_candidates`
    /// random elements; returns the new energy if one lowered it.
    pub fn refine_element(&mut self, index: usize, sweep: u64, options: &SvmOptions) -> Result<Option<f64>> {
        let current = match self.energy() {
            Some(e) => e,
            None => return Ok(None),
        };
        let scales = Scales::for_problem(&self.problem)?;
        let n = self.basis.len();
        let trials: Vec<Result<Option<(f64, Candidate, DMatrix<f64>, DMatrix<f64>)>>> =
            options.strategy.map(options.refine_candidates, |k| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
                rng.set_stream((1 << 62) | (sweep << 40) | ((index as u64) << 20) | k as u64);
                let element = self.sample(&mut rng, options, &scales)?;
                let c = match self.candidate_rows(element) {
                    Ok(c) => c,
                    Err(Error::QuadratureNotConverged { .. }) => return Ok(None),
                    Err(e) => return Err(e),
                };
                let mut s = self.overlap_matrix.clone();
                let mut h = self.hamiltonian_matrix.clone();
                for j in 0..n {
                    let (sv, hv) = if j == index { (1.0, c.h_diag) } else { (c.s_row[j], c.h_row[j]) };
                    s[(index, j)] = sv;
                    s[(j, index)] = sv;
                    h[(index, j)] = hv;
                    h[(j, index)] = hv;
                }
                let eig = s.clone().symmetric_eigenvalues();
                if !(eig.min() >= options.conditioning * eig.max()) {
                    return Ok(None);
                }
                match generalized_eigen(&h, &s) {
                    Ok(g) => Ok(Some((g.energy(), c, s, h))),
                    Err(Error::NotPositiveDefinite(_)) => Ok(None),
                    Err(e) => Err(e),
                }
            });
        let mut best: Option<(f64, Candidate, DMatrix<f64>, DMatrix<f64>)> = None;
        for t in trials {
            if let Some(t) = t? {
                if t.0 < best.as_ref().map_or(current, |b| b.0) {
                    best = Some(t);
                }
            }
        }
        let Some((_, c, s, h)) = best else { return Ok(None) };
        let ground = generalized_eigen(&h, &s)?;
        let energy = ground.energy();
        self.basis[index] = c.element;
        self.log_norms[index] = c.log_norm;
        self.overlap_matrix = s;
        self.hamiltonian_matrix = h;
        self.ground = Some(ground);
        self.energy_history.push((n, energy));
        Ok(Some(energy))
    }

    /// One refinement pass over every element.
    pub fn refine(&mut self, sweep: u64, options: &SvmOptions) -> Result<usize> {
        let mut replaced = 0;
        for i in 0..self.basis.len() {
            if self.refine_element(i, sweep, options)?.is_some() {
                replaced += 1;
            }
        }
        Ok(replaced)
    }

    /// Lowest generalized eigenvalue of the current matrices.
    pub fn solve_ground(&self) -> Result<f64> {
        if self.basis.is_empty() {
            return Err(Error::invalid("empty basis"));
        }
        Ok(generalized_eigen(&self.hamiltonian_matrix, &self.overlap_matrix)?.energy())
    }

    /// True once the energy moved by less than `tolerance` over the last 20%
    /// of accepted elements.
    pub fn plateaued(&self, tolerance: f64) -> bool {
        let n = self.energy_history.len();
        if n < 10 {
            return false;
        }
        let back = (n as f64 * 0.2).ceil() as usize;
        let (_, earlier) = self.energy_history[n - 1 - back];
        let (_, latest) = self.energy_history[n - 1];
        (earlier - latest).abs() < tolerance
    }

    /// Ground-state expectation of a pair's relative x coordinate.
    pub fn pair_mean_x(&self, pair: Pair) -> Result<f64> {
        let coeffs = self.ground_coefficients().ok_or_else(|| Error::invalid("empty basis"))?;
        let c = DVector::from_column_slice(&pair.coefficients(self.problem.bodies));
        let z = zero_center(self.problem.bodies.modes());
        let mut total = 0.0;
        for (i, a) in self.basis.iter().enumerate() {
            for (j, b) in self.basis.iter().enumerate() {
                let x = sector_product(&a.x_form, &a.x_center, &b.x_form, &b.x_center)?;
                let y = sector_product(&a.y_form, &z, &b.y_form, &z)?;
                let s = (x.log_overlap + y.log_overlap - self.log_norms[i] - self.log_norms[j]).exp();
                total += coeffs[i] * coeffs[j] * s * c.dot(&x.mean);
            }
        }
        Ok(total)
    }

    /// Centers of the accepted elements on a pair's relative x coordinate.
    pub fn element_pair_centers(&self, pair: Pair) -> Vec<f64> {
        let c = pair.coefficients(self.problem.bodies);
        self.basis.iter().map(|e| e.pair_center(&c)).collect()
    }

    pub fn report(&self) -> SvmReport {
        SvmReport {
            theta: self.problem.theta,
            strength_u: self.problem.strength_u,
            bodies: self.problem.bodies.count(),
            seed: self.rng_seed,
            steps: self.steps,
            energy: self.energy(),
            energy_history: self
                .energy_history
                .iter()
                .map(|&(basis_size, energy)| HistoryEntry { basis_size, energy })
                .collect(),
            basis: self.basis.iter().map(ElementRecord::from).collect(),
        }
    }

    /// Rebuild a state (matrices and ground solution) from a saved report.
    pub fn from_report(report: &SvmReport) -> Result<Self> {
        let bodies = Bodies::from_count(report.bodies)
            .ok_or_else(|| Error::invalid(format!("bodies must be 2 or 3, got {}", report.bodies)))?;
        let problem = SvmProblem::new(report.theta, report.strength_u, bodies)?;
        let mut state = SvmState::new(problem, report.seed);
        for record in &report.basis {
            let element = record.to_element()?;
            let c = state.evaluate_candidate(element)?;
            let (s, h) = state.bordered_matrices(&c);
            state.ground = Some(generalized_eigen(&h, &s)?);
            state.basis.push(c.element);
            state.log_norms.push(c.log_norm);
            state.overlap_matrix = s;
            state.hamiltonian_matrix = h;
        }
        state.energy_history = report.energy_history.iter().map(|e| (e.basis_size, e.energy)).collect();
        state.steps = report.steps;
        Ok(state)
    }
}

struct Scales {
    x: f64,
    y: f64,
    /// Pair shifts are drawn around the deep minimum `a₀`.
    center: f64,
    shift: f64,
}

impl Scales {
    fn for_problem(problem: &SvmProblem) -> Result<Self> {
        let c = expansion_coefficients(problem.theta)?;
        let u = problem.strength_u.max(1e-3);
        Ok(Self { x: (u * c.alpha0).sqrt(), y: (u * c.beta0).sqrt(), center: c.a0, shift: c.a0.max(0.5) })
    }
}

/// Grow a basis to `options.target_basis` elements (or until the energy
/// plateaus), after offering `initial` elements first.
pub fn run(
    theta: f64,
    strength_u: f64,
    bodies: Bodies,
    options: &SvmOptions,
    initial: &[SvmBasisElement],
) -> Result<(f64, SvmState)> {
    let problem = SvmProblem::new(theta, strength_u, bodies)?;
    let mut state = SvmState::new(problem, options.seed);
    for element in initial {
        state.try_insert(element.clone(), options.conditioning)?;
    }
    let max_steps = 4 * options.target_basis.max(1);
    let mut steps = 0;
    while state.len() < options.target_basis && steps < max_steps {
        state.grow_basis(options)?;
        steps += 1;
        if state.plateaued(options.plateau_tolerance) {
            break;
        }
    }
    for sweep in 0..options.refine_sweeps {
        state.refine(sweep as u64, options)?;
    }
    let energy = state.energy().ok_or_else(|| Error::Eigen("no basis element was accepted".into()))?;
    Ok((energy, state))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub basis_size: usize,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementRecord {
    pub x_form: Vec<Vec<f64>>,
    pub x_center: Vec<f64>,
    pub y_form: Vec<Vec<f64>>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(r: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = r.len();
    if r.iter().any(|row| row.len() != n) {
        return Err(Error::invalid("basis forms must be square"));
    }
    Ok(DMatrix::from_row_iterator(n, n, r.iter().flatten().copied()))
}

impl From<&SvmBasisElement> for ElementRecord {
    fn from(e: &SvmBasisElement) -> Self {
        Self { x_form: rows(&e.x_form), x_center: e.x_center.iter().copied().collect(), y_form: rows(&e.y_form) }
    }
}

impl ElementRecord {
    pub fn to_element(&self) -> Result<SvmBasisElement> {
        SvmBasisElement::new(
            from_rows(&self.x_form)?,
            DVector::from_column_slice(&self.x_center),
            from_rows(&self.y_form)?,
        )
    }
}

/// Persisted result of an SVM run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmReport {
    pub theta: f64,
    pub strength_u: f64,
    pub bodies: usize,
    pub seed: u64,
    /// Growth steps taken, so a resumed run continues the random stream.
    #[serde(default)]
    pub steps: u64,
    pub energy: Option<f64>,
    pub energy_history: Vec<HistoryEntry>,
    pub basis: Vec<ElementRecord>,
}

pub fn write_history_csv<W: Write>(mut out: W, history: &[(usize, f64)]) -> io::Result<()> {
    writeln!(out, "basis_size,energy")?;
    for (n, e) in history {
        writeln!(out, "{n},{}", fmt_sig(*e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn element_1d(a: f64, c: f64, b: f64) -> SvmBasisElement {
        SvmBasisElement::new(
            DMatrix::from_element(1, 1, a),
            DVector::from_element(1, c),
            DMatrix::from_element(1, 1, b),
        )
        .unwrap()
    }

    #[test]
    fn unit_overlap_closed_form() {
        // ∫ e^{-q²} dq in each of x and y: π
        let e = element_1d(1.0, 0.0, 1.0);
        assert!((overlap(&e, &e).unwrap() - PI).abs() < 1e-14);
    }

    #[test]
    fn rejects_indefinite_forms() {
        let bad = SvmBasisElement::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
            DVector::zeros(2),
            DMatrix::identity(2, 2),
        );
        assert!(bad.is_err());
    }

    #[test]
    fn zero_strength_has_no_potential() {
        let p = SvmProblem::new(1.0, 0.0, Bodies::Two).unwrap();
        let a = element_1d(3.0, 0.2, 2.0);
        let b = element_1d(1.0, -0.1, 5.0);
        assert_eq!(potential_element(&a, &b, &p).unwrap(), 0.0);
    }

    #[test]
    fn single_element_energy_is_rayleigh_quotient() {
        let p = SvmProblem::new(FRAC_PI_2, 5.0, Bodies::Two).unwrap();
        let mut st = SvmState::new(p.clone(), 3);
        let a = element_1d(8.0, 0.0, 8.0);
        let e = st.try_insert(a.clone(), 1e-12).unwrap().unwrap();
        let s = overlap(&a, &a).unwrap();
        let h = kinetic_element(&a, &a).unwrap() + potential_element(&a, &a, &p).unwrap();
        assert!((e - h / s).abs() < 1e-12);
        assert!((st.solve_ground().unwrap() - e).abs() < 1e-12);
    }

    #[test]
    fn bordered_estimate_matches_full_solve() {
        let p = SvmProblem::new(1.2, 6.0, Bodies::Two).unwrap();
        let mut st = SvmState::new(p, 9);
        for (a, c, b) in [(4.0, 0.1, 5.0), (9.0, 0.3, 3.0), (2.0, -0.2, 7.0)] {
            st.try_insert(element_1d(a, c, b), 1e-12).unwrap();
        }
        let cand = st.evaluate_candidate(element_1d(6.0, 0.25, 9.0)).unwrap();
        let (s, h) = st.bordered_matrices(&cand);
        let full = generalized_eigen(&h, &s).unwrap().energy();
        assert!((cand.estimate - full).abs() < 1e-9 * full.abs().max(1.0));
    }

    #[test]
    fn generalized_eigen_small_case() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let g = generalized_eigen(&h, &s).unwrap();
        // det(H − ES) = 0 → 0.75E² − 4E + 5 = 0
        let expected = (4.0 - (16.0f64 - 15.0).sqrt()) / 1.5;
        assert!((g.energy() - expected).abs() < 1e-12);
        let c = g.vectors.column(0);
        assert!((c.dot(&(&s * c)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn history_is_monotone_and_seeded_runs_repeat() {
        let opts = SvmOptions { target_basis: 12, candidates_per_step: 8, seed: 5, ..Default::default() };
        let (e1, s1) = run(FRAC_PI_2, 6.0, Bodies::Two, &opts, &[]).unwrap();
        let (e2, s2) = run(FRAC_PI_2, 6.0, Bodies::Two, &opts, &[]).unwrap();
        assert_eq!(e1.to_bits(), e2.to_bits());
        assert_eq!(s1.energy_history, s2.energy_history);
        assert!(s1.energy_history.windows(2).all(|w| w[1].1 <= w[0].1));
        let serial = SvmOptions { strategy: Strategy::Serial, ..opts };
        let (e3, _) = run(FRAC_PI_2, 6.0, Bodies::Two, &serial, &[]).unwrap();
        assert_eq!(e1.to_bits(), e3.to_bits());
    }

    #[test]
    fn report_round_trip_rebuilds_energy() {
        let opts = SvmOptions { target_basis: 6, candidates_per_step: 5, seed: 2, ..Default::default() };
        let (e, st) = run(1.0, 4.0, Bodies::Three, &opts, &[]).unwrap();
        let json = serde_json::to_string(&st.report()).unwrap();
        let back: SvmReport = serde_json::from_str(&json).unwrap();
        let rebuilt = SvmState::from_report(&back).unwrap();
        assert!((rebuilt.energy().unwrap() - e).abs() < 1e-10 * e.abs().max(1.0));
        assert_eq!(rebuilt.len(), st.len());
    }
}
