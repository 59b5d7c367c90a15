//! Gaussian variational energies with the exact pair potential.
//!
//! Two-body states are single Gaussians in the relative coordinate,
//!
//! ```text
//! G = exp(−α̃/2 (x − ã)² − β̃/2 y²),   x = x₁ − x₂, y = y₁ − y₂,
//! ```
//!
//! with reduced mass m/2, so `⟨T⟩ = (α̃ + β̃)/2` in units of ħ²/md². The
//! oscillator whose ground state is exactly `G` has the quadratic
//! coefficients `α̃²` and `β̃²` and the zero-point energy `α̃ + β̃`; this
//! is the pair model transplanted into the three-body chain.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chain::{
    chain_wavefunction, closed_form_energy, solve_quadratic_model, ChainGaussian, HarmonicChainModel, PairTerm,
    QuadraticSolution,
};
use crate::error::{ensure_finite, Error, Result};
use crate::exec::Strategy;
use crate::jacobi::{Bodies, Pair};
use crate::landscape::{expansion_coefficients, MIN_THETA};
use crate::output::fmt_sig;
use crate::quadrature::{
    expect_potential, expect_potential_detailed, expect_unit_potential_fixed, PairMarginal, NODE_LEVELS,
};
use crate::simplex::{minimize, SimplexOptions};
use crate::svm::{self, SvmBasisElement, SvmOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairGaussian {
    pub alpha_tilde: f64,
    pub beta_tilde: f64,
    pub a_tilde: f64,
    pub pair_distance: f64,
}

impl PairGaussian {
    pub fn new(alpha_tilde: f64, beta_tilde: f64, a_tilde: f64, pair_distance: f64) -> Result<Self> {
        ensure_finite("alpha_tilde", alpha_tilde)?;
        ensure_finite("beta_tilde", beta_tilde)?;
        ensure_finite("a_tilde", a_tilde)?;
        if !(alpha_tilde > 0.0 && beta_tilde > 0.0) {
            return Err(Error::invalid(format!("Gaussian widths must be positive, got ({alpha_tilde}, {beta_tilde})")));
        }
        if !(pair_distance > 0.0) {
            return Err(Error::invalid("pair_distance must be positive"));
        }
        Ok(Self { alpha_tilde, beta_tilde, a_tilde, pair_distance })
    }

    /// Marginal of `|G|²` on the relative coordinate.
    pub fn marginal(&self) -> Result<PairMarginal> {
        PairMarginal::new(self.a_tilde, 0.5 / self.alpha_tilde, 0.5 / self.beta_tilde, self.pair_distance)
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * (self.alpha_tilde + self.beta_tilde)
    }

    /// Zero-point energy of the oscillator with ground state `G`.
    pub fn oscillator_energy(&self) -> f64 {
        self.alpha_tilde + self.beta_tilde
    }

    fn from_log_params(p: &[f64], pair_distance: f64) -> Self {
        Self { alpha_tilde: p[0].exp(), beta_tilde: p[1].exp(), a_tilde: p[2], pair_distance }
    }

    fn log_params(&self) -> [f64; 3] {
        [self.alpha_tilde.ln(), self.beta_tilde.ln(), self.a_tilde]
    }
}

/// `E[G] = ⟨G|H|G⟩/⟨G|G⟩`.
pub fn two_body_energy(params: &PairGaussian, theta: f64, strength_u: f64) -> Result<f64> {
    if strength_u == 0.0 {
        return Ok(params.kinetic_energy());
    }
    Ok(params.kinetic_energy() + expect_potential(&params.marginal()?, theta, strength_u)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub params: PairGaussian,
    pub energy: f64,
    pub oscillator_energy: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// False when no Gaussian has a negative energy: the optimum is then the
    /// infinitely wide limit, reported as `energy = oscillator_energy = 0`.
    pub bound: bool,
    /// Final energies of the individual (re)starts, at the optimizer's
    /// fixed quadrature order.
    pub restart_energies: Vec<f64>,
}

// Log-widths outside this box are not physical for any U in use and make
// the fixed-order quadrature meaningless.
const LOG_WIDTH_BOX: f64 = 14.0;

fn check_problem(theta: f64, strength_u: f64) -> Result<()> {
    ensure_finite("theta", theta)?;
    ensure_finite("strength_u", strength_u)?;
    if !(theta > MIN_THETA && theta <= std::f64::consts::FRAC_PI_2 + 1e-12) {
        return Err(Error::invalid(format!("theta must lie in ({MIN_THETA}, pi/2], got {theta}")));
    }
    if !(strength_u > 0.0) {
        return Err(Error::invalid("strength_u must be positive"));
    }
    Ok(())
}

/// Quadrature order for the optimizer: one level above the adaptive level
/// of the starting point, so the objective is a fixed smooth function.
fn optimizer_nodes(start: &PairGaussian, theta: f64) -> usize {
    let adaptive = start
        .marginal()
        .and_then(|m| expect_potential_detailed(&m, theta, 1.0))
        .map_or(*NODE_LEVELS.last().unwrap(), |e| e.nodes);
    let idx = NODE_LEVELS.iter().position(|&n| n == adaptive).unwrap_or(NODE_LEVELS.len() - 1);
    NODE_LEVELS[(idx + 1).min(NODE_LEVELS.len() - 1)]
}

struct Run {
    point: Vec<f64>,
    value: f64,
    iterations: usize,
    evaluations: usize,
    converged: bool,
}

fn polished_run(theta: f64, strength_u: f64, distance: f64, nodes: usize, start: &[f64]) -> Result<Run> {
    let objective = |p: &[f64]| -> Result<f64> {
        if p[..2].iter().any(|v| v.abs() > LOG_WIDTH_BOX) {
            return Ok(f64::INFINITY);
        }
        let g = PairGaussian::from_log_params(p, distance);
        let m = g.marginal()?;
        Ok(g.kinetic_energy() + strength_u * expect_unit_potential_fixed(&m, theta, nodes))
    };
    let opts = SimplexOptions::default();
    let first = minimize(objective, start, &opts)?;
    // a restart from the optimum guards against simplex collapse
    let second = minimize(objective, &first.point, &SimplexOptions { initial_step: 0.02, ..opts })?;
    let best = if second.value <= first.value { second.clone() } else { first.clone() };
    Ok(Run {
        point: best.point,
        value: best.value,
        iterations: first.iterations + second.iterations,
        evaluations: first.evaluations + second.evaluations,
        converged: first.converged && second.converged,
    })
}

fn finish(theta: f64, strength_u: f64, distance: f64, runs: Vec<Run>) -> Result<OptimizationResult> {
    let restart_energies: Vec<f64> = runs.iter().map(|r| r.value).collect();
    let iterations = runs.iter().map(|r| r.iterations).sum();
    let evaluations = runs.iter().map(|r| r.evaluations).sum();
    let converged = runs.iter().all(|r| r.converged);
    let best = runs
        .into_iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or_else(|| Error::invalid("no optimizer runs"))?;
    let params = PairGaussian::from_log_params(&best.point, distance);
    let at_box = best.point[..2].iter().any(|v| v.abs() >= LOG_WIDTH_BOX - 1.0);
    if at_box || best.value >= 0.0 {
        return Ok(OptimizationResult {
            params,
            energy: 0.0,
            oscillator_energy: 0.0,
            iterations,
            evaluations,
            converged,
            bound: false,
            restart_energies,
        });
    }
    // weakly bound pairs are wide enough that 256 nodes still disagree in
    // the tenth digit; keep the finest estimate and flag it
    let (energy, quadrature_ok) = match two_body_energy(&params, theta, strength_u) {
        Ok(e) => (e, true),
        Err(Error::QuadratureNotConverged { last, .. }) => (params.kinetic_energy() + last, false),
        Err(e) => return Err(e),
    };
    Ok(OptimizationResult {
        params,
        energy,
        oscillator_energy: params.oscillator_energy(),
        iterations,
        evaluations,
        converged: converged && quadrature_ok,
        bound: true,
        restart_energies,
    })
}

/// Expansion-predicted starting Gaussian at a given pair distance `s`:
/// curvatures scale as `s⁻⁵` and the minimum as `s a₀`.
pub fn expansion_start(theta: f64, strength_u: f64, pair_distance: f64) -> Result<PairGaussian> {
    let c = expansion_coefficients(theta)?;
    let s5 = pair_distance.powi(5);
    PairGaussian::new(
        (strength_u * c.alpha0 / s5).sqrt(),
        (strength_u * c.beta0 / s5).sqrt(),
        c.a0 * pair_distance,
        pair_distance,
    )
}

/// Minimize `E[G]` over `(ln α̃, ln β̃, ã)` from the expansion prediction
/// and two perturbed starts.
pub fn optimize_two_body(theta: f64, strength_u: f64, pair_distance: f64) -> Result<OptimizationResult> {
    check_problem(theta, strength_u)?;
    let start = expansion_start(theta, strength_u, pair_distance)?;
    let nodes = optimizer_nodes(&start, theta);
    let p = start.log_params();
    let shift = 0.1 * pair_distance;
    let starts = [p, [p[0] + 0.4, p[1] - 0.3, p[2] + shift], [p[0] - 0.3, p[1] + 0.4, p[2] - shift]];
    let mut runs = Vec::with_capacity(starts.len());
    for s in &starts {
        runs.push(polished_run(theta, strength_u, pair_distance, nodes, s)?);
    }
    finish(theta, strength_u, pair_distance, runs)
}

/// Single polished run from a given Gaussian.
pub fn optimize_two_body_from(theta: f64, strength_u: f64, start: &PairGaussian) -> Result<OptimizationResult> {
    check_problem(theta, strength_u)?;
    let nodes = optimizer_nodes(start, theta);
    let run = polished_run(theta, strength_u, start.pair_distance, nodes, &start.log_params())?;
    finish(theta, strength_u, start.pair_distance, vec![run])
}

/// `E[Ψ]` of a three-body Gaussian with the full pair potentials.
pub fn energy_of_chain_gaussian(state: &ChainGaussian, theta: f64, strength_u: f64) -> Result<f64> {
    let mut energy = state.kinetic_energy();
    if strength_u != 0.0 {
        for &pair in Bodies::Three.pairs() {
            energy += expect_potential(&state.pair_marginal(pair)?, theta, strength_u)?;
        }
    }
    Ok(energy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum OuterPairRule {
    /// Separate optimization at distance 2d.
    #[default]
    IndependentFit,
    /// Nearest-neighbour fit rescaled: couplings /32, shift ×2, constant /8.
    ScaledNearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum OscConstant {
    /// Per-pair constant `E[G*] − E_osc`.
    #[default]
    PairVariational,
    Dropped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OscOptions {
    pub outer: OuterPairRule,
    pub constant: OscConstant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscChain {
    pub model: HarmonicChainModel,
    pub solution: QuadraticSolution,
    pub near: OptimizationResult,
    pub outer: Option<OptimizationResult>,
}

impl OscChain {
    pub fn energy(&self) -> f64 {
        self.solution.energy
    }

    pub fn state(&self) -> &ChainGaussian {
        &self.solution.state
    }
}

fn osc_term(pair: Pair, fit: &OptimizationResult, constant: OscConstant) -> PairTerm {
    let g = fit.params;
    if !fit.bound {
        // limit of an ever wider Gaussian: no spring, no offset
        return PairTerm { pair, coupling_x: 0.0, coupling_y: 0.0, shift_x: g.a_tilde, constant: 0.0 };
    }
    PairTerm {
        pair,
        coupling_x: g.alpha_tilde * g.alpha_tilde,
        coupling_y: g.beta_tilde * g.beta_tilde,
        shift_x: g.a_tilde,
        constant: match constant {
            OscConstant::PairVariational => fit.energy - fit.oscillator_energy,
            OscConstant::Dropped => 0.0,
        },
    }
}

/// Three-body chain of optimized pair oscillators and its ground state.
pub fn build_osc_chain(theta: f64, strength_u: f64, options: OscOptions) -> Result<OscChain> {
    let near = optimize_two_body(theta, strength_u, 1.0)?;
    let t12 = osc_term(Pair::OneTwo, &near, options.constant);
    let t23 = PairTerm { pair: Pair::TwoThree, ..t12 };
    let (t13, outer) = match options.outer {
        OuterPairRule::IndependentFit => {
            let fit = optimize_two_body(theta, strength_u, 2.0)?;
            (osc_term(Pair::OneThree, &fit, options.constant), Some(fit))
        }
        OuterPairRule::ScaledNearest => (
            PairTerm {
                pair: Pair::OneThree,
                coupling_x: t12.coupling_x / 32.0,
                coupling_y: t12.coupling_y / 32.0,
                shift_x: 2.0 * t12.shift_x,
                constant: t12.constant / 8.0,
            },
            None,
        ),
    };
    let model = HarmonicChainModel { terms: vec![t12, t23, t13] };
    let solution = solve_quadratic_model(&model)?;
    Ok(OscChain { model, solution, near, outer })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Expansion,
    EPsi,
    Osc,
    EPsiOsc,
    Svm,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Expansion, Method::EPsi, Method::Osc, Method::EPsiOsc, Method::Svm];

    pub fn label(self) -> &'static str {
        match self {
            Method::Expansion => "expansion",
            Method::EPsi => "e_psi",
            Method::Osc => "osc",
            Method::EPsiOsc => "e_psi_osc",
            Method::Svm => "svm",
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        let mut out = Vec::new();
        for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let m: Method = item.parse()?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return Err(Error::invalid("method list is empty"));
        }
        Ok(out)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.label() == s).ok_or_else(|| {
            Error::invalid(format!("unknown method '{s}' (expected one of expansion, e_psi, osc, e_psi_osc, svm)"))
        })
    }
}

/// Settings for the SVM cells of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSvm {
    pub options: SvmOptions,
    /// Offer the harmonic-chain and oscillator-chain Gaussians as the first
    /// basis elements.
    pub seed_with_harmonic: bool,
}

impl Default for SweepSvm {
    fn default() -> Self {
        Self { options: SvmOptions::default(), seed_with_harmonic: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub strength_u: f64,
    pub method: Method,
    pub energy: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

/// All requested energies at one `(θ, U)`; failures are isolated per method.
pub fn sweep_point(
    theta: f64,
    strength_u: f64,
    methods: &[Method],
    osc: OscOptions,
    svm_cfg: &SweepSvm,
) -> Vec<SweepCell> {
    let needs_osc = methods.iter().any(|m| matches!(m, Method::Osc | Method::EPsiOsc))
        || (methods.contains(&Method::Svm) && svm_cfg.seed_with_harmonic);
    let osc_chain = needs_osc.then(|| build_osc_chain(theta, strength_u, osc));
    let coeffs = expansion_coefficients(theta);
    let cell = |method: Method, r: Result<(f64, bool)>| match r {
        Ok((energy, converged)) => SweepCell { strength_u, method, energy: Some(energy), converged, error: None },
        Err(e) => SweepCell { strength_u, method, energy: None, converged: false, error: Some(e.to_string()) },
    };
    let osc_ref = || -> Result<&OscChain> {
        match osc_chain.as_ref() {
            Some(Ok(c)) => Ok(c),
            Some(Err(e)) => Err(e.clone()),
            None => Err(Error::invalid("oscillator chain was not built")),
        }
    };
    methods
        .iter()
        .map(|&m| {
            let r = match m {
                Method::Expansion => coeffs.clone().map(|c| (closed_form_energy(&c, strength_u), true)),
                Method::EPsi => coeffs.clone().and_then(|c| {
                    energy_of_chain_gaussian(&chain_wavefunction(&c, strength_u), theta, strength_u).map(|e| (e, true))
                }),
                Method::Osc => osc_ref().map(|c| (c.energy(), osc_converged(c))),
                Method::EPsiOsc => osc_ref().and_then(|c| {
                    energy_of_chain_gaussian(c.state(), theta, strength_u).map(|e| (e, osc_converged(c)))
                }),
                Method::Svm => svm_cell(theta, strength_u, svm_cfg, coeffs.as_ref().ok(), osc_ref().ok()),
            };
            cell(m, r)
        })
        .collect()
}

fn osc_converged(c: &OscChain) -> bool {
    c.near.converged && c.outer.as_ref().map_or(true, |o| o.converged)
}

fn svm_cell(
    theta: f64,
    strength_u: f64,
    cfg: &SweepSvm,
    coeffs: Option<&crate::landscape::ExpansionCoefficients>,
    osc: Option<&OscChain>,
) -> Result<(f64, bool)> {
    let mut initial = Vec::new();
    if cfg.seed_with_harmonic {
        if let Some(c) = coeffs {
            initial.push(SvmBasisElement::from_chain_gaussian(&chain_wavefunction(c, strength_u))?);
        }
        if let Some(o) = osc {
            initial.push(SvmBasisElement::from_chain_gaussian(o.state())?);
        }
    }
    let (energy, state) = svm::run(theta, strength_u, Bodies::Three, &cfg.options, &initial)?;
    let converged = state.plateaued(cfg.options.plateau_tolerance) || state.len() >= cfg.options.target_basis;
    Ok((energy, converged))
}

/// Energies for every `U` and method, parallel over `U`.
pub fn energy_sweep(
    theta: f64,
    strengths: &[f64],
    methods: &[Method],
    osc: OscOptions,
    svm_cfg: &SweepSvm,
    strategy: Strategy,
) -> Vec<SweepCell> {
    strategy
        .map(strengths.len(), |i| sweep_point(theta, strengths[i], methods, osc, svm_cfg))
        .into_iter()
        .flatten()
        .collect()
}

fn fmt_energy(e: Option<f64>) -> String {
    e.map_or_else(|| "NaN".to_string(), fmt_sig)
}

/// Long form: `U,method,energy,converged`.
pub fn write_sweep_long_csv<W: Write>(mut out: W, cells: &[SweepCell]) -> io::Result<()> {
    writeln!(out, "U,method,energy,converged")?;
    for c in cells {
        writeln!(out, "{},{},{},{}", fmt_sig(c.strength_u), c.method, fmt_energy(c.energy), c.converged)?;
    }
    Ok(())
}

/// Wide form: `U,expansion,e_psi,osc,e_psi_osc,svm`; missing methods are
/// left empty.
pub fn write_sweep_wide_csv<W: Write>(mut out: W, cells: &[SweepCell]) -> io::Result<()> {
    writeln!(out, "U,expansion,e_psi,osc,e_psi_osc,svm")?;
    let mut us: Vec<f64> = Vec::new();
    for c in cells {
        if !us.iter().any(|u| u.to_bits() == c.strength_u.to_bits()) {
            us.push(c.strength_u);
        }
    }
    for u in us {
        let mut line = fmt_sig(u);
        for m in Method::ALL {
            line.push(',');
            if let Some(c) = cells.iter().find(|c| c.method == m && c.strength_u.to_bits() == u.to_bits()) {
                line.push_str(&fmt_energy(c.energy));
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::two_body_expansion_energy;
    use std::f64::consts::FRAC_PI_2;

    // −∫ψ ψ'' / ∫ψ² for one direction, five-point stencil, trapezoid sums.
    fn numeric_kinetic_1d(psi: impl Fn(f64) -> f64, center: f64) -> f64 {
        let h = 1e-3;
        let (mut num, mut den) = (0.0, 0.0);
        let n = 40_000;
        let dx = 20.0 / n as f64;
        for i in 0..=n {
            let x = center - 10.0 + i as f64 * dx;
            let d2 = (-psi(x + 2.0 * h) + 16.0 * psi(x + h) - 30.0 * psi(x) + 16.0 * psi(x - h) - psi(x - 2.0 * h))
                / (12.0 * h * h);
            num -= psi(x) * d2;
            den += psi(x) * psi(x);
        }
        num / den
    }

    #[test]
    fn free_gaussian_kinetic_matches_numeric_laplacian() {
        let g = PairGaussian::new(1.7, 0.6, 0.3, 1.0).unwrap();
        // relative motion with reduced mass m/2: T = −∇² in units ħ²/md²
        let tx = numeric_kinetic_1d(|x| (-0.5 * g.alpha_tilde * (x - g.a_tilde).powi(2)).exp(), g.a_tilde);
        let ty = numeric_kinetic_1d(|y| (-0.5 * g.beta_tilde * y * y).exp(), 0.0);
        let e0 = two_body_energy(&g, 1.0, 0.0).unwrap();
        assert!((e0 - (tx + ty)).abs() < 1e-8, "{e0} vs {}", tx + ty);
        assert!(e0 > 0.0);
    }

    #[test]
    fn harmonic_limit_at_large_u() {
        // V = −2 + 6r² − 45/4 r⁴ + …; the quartic term shifts E by −15/4
        // for every U, so only the relative gap closes.
        let gap = |u: f64| {
            let w = (6.0f64 * u).sqrt();
            let g = PairGaussian::new(w, w, 0.0, 1.0).unwrap();
            let harmonic = -2.0 * u + 2.0 * w;
            (two_body_energy(&g, FRAC_PI_2, u).unwrap() - harmonic, harmonic)
        };
        let (d50, _) = gap(50.0);
        let (d200, h200) = gap(200.0);
        let (d800, _) = gap(800.0);
        assert!((d200 / h200).abs() < 0.02);
        assert!((d800 + 3.75).abs() < (d200 + 3.75).abs() && (d200 + 3.75).abs() < (d50 + 3.75).abs());
        assert!((d800 + 3.75).abs() < 0.25, "{d800}");
    }

    #[test]
    fn shift_symmetry_at_perpendicular() {
        let a = PairGaussian::new(3.0, 4.0, 0.27, 1.0).unwrap();
        let b = PairGaussian { a_tilde: -0.27, ..a };
        let ea = two_body_energy(&a, FRAC_PI_2, 7.0).unwrap();
        let eb = two_body_energy(&b, FRAC_PI_2, 7.0).unwrap();
        assert!((ea - eb).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_widths_and_angles() {
        assert!(PairGaussian::new(0.0, 1.0, 0.0, 1.0).is_err());
        assert!(PairGaussian::new(1.0, f64::NAN, 0.0, 1.0).is_err());
        assert!(optimize_two_body(0.01, 5.0, 1.0).is_err());
        assert!(optimize_two_body(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn optimum_at_perpendicular_is_centered_and_below_expansion() {
        let r = optimize_two_body(FRAC_PI_2, 15.0, 1.0).unwrap();
        assert!(r.converged);
        assert!(r.params.a_tilde.abs() < 1e-6, "{}", r.params.a_tilde);
        assert!(r.energy <= two_body_expansion_energy(FRAC_PI_2, 15.0).unwrap());
        let spread = r.restart_energies.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
            - r.restart_energies.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        assert!(spread < 1e-8, "{:?}", r.restart_energies);
    }

    #[test]
    fn reoptimizing_from_optimum_is_idempotent() {
        let theta = crate::model::theta_c_star();
        let r = optimize_two_body(theta, 10.0, 1.0).unwrap();
        let again = optimize_two_body_from(theta, 10.0, &r.params).unwrap();
        assert!((again.energy - r.energy).abs() < 1e-10, "{} vs {}", again.energy, r.energy);
    }

    #[test]
    fn outer_pair_fit_obeys_the_scaling_law() {
        // H(2d, U) = H(d, U/2)/4 with lengths doubled
        let theta = 1.1;
        let far = optimize_two_body(theta, 12.0, 2.0).unwrap();
        let near = optimize_two_body(theta, 6.0, 1.0).unwrap();
        assert!((far.params.a_tilde - 2.0 * near.params.a_tilde).abs() < 1e-5);
        assert!((far.energy - 0.25 * near.energy).abs() < 1e-8);
    }

    #[test]
    fn chain_energy_at_zero_strength_is_kinetic() {
        let c = expansion_coefficients(1.0).unwrap();
        let psi = chain_wavefunction(&c, 4.0);
        assert_eq!(energy_of_chain_gaussian(&psi, 1.0, 0.0).unwrap(), psi.kinetic_energy());
    }

    #[test]
    fn osc_chain_limits() {
        let scaled =
            build_osc_chain(FRAC_PI_2, 20.0, OscOptions { outer: OuterPairRule::ScaledNearest, ..Default::default() })
                .unwrap();
        assert!(scaled.solution.frustration <= 1e-8);
        let coeffs = expansion_coefficients(FRAC_PI_2).unwrap();
        let rel_gap = |u: f64| {
            let e = build_osc_chain(FRAC_PI_2, u, OscOptions::default()).unwrap().energy();
            let closed = closed_form_energy(&coeffs, u);
            ((e - closed) / closed).abs()
        };
        // anharmonic shifts make the gap O(1/U)
        let (g20, g80) = (rel_gap(20.0), rel_gap(80.0));
        assert!(g80 < 0.05 && g80 < 0.3 * g20, "{g20} {g80}");
        let fit = build_osc_chain(FRAC_PI_2, 20.0, OscOptions::default()).unwrap();
        let dropped =
            build_osc_chain(FRAC_PI_2, 20.0, OscOptions { constant: OscConstant::Dropped, ..Default::default() })
                .unwrap();
        assert!(dropped.energy() > fit.energy());
    }

    #[test]
    fn osc_outer_shift_tracks_twice_the_near_shift() {
        let theta = crate::model::theta_c_star();
        let chain = build_osc_chain(theta, 10.0, OscOptions::default()).unwrap();
        let near = chain.model.term(Pair::OneTwo).unwrap().shift_x;
        let outer = chain.model.term(Pair::OneThree).unwrap().shift_x;
        let half_u = optimize_two_body(theta, 5.0, 1.0).unwrap();
        assert!((outer - 2.0 * half_u.params.a_tilde).abs() < 1e-5);
        assert!(near > 0.0 && outer > 0.0);
    }

    #[test]
    fn unbound_outer_pair_drops_out_of_the_chain() {
        // at U = 3 the 2d pair has no bound Gaussian (E[G] > 0 for all widths)
        let fit = optimize_two_body(FRAC_PI_2, 3.0, 2.0).unwrap();
        assert!(!fit.bound && fit.energy == 0.0);
        let near = optimize_two_body(FRAC_PI_2, 3.0, 1.0).unwrap();
        assert!(near.bound && near.energy < 0.0);
        let chain = build_osc_chain(FRAC_PI_2, 3.0, OscOptions::default()).unwrap();
        assert_eq!(chain.model.term(Pair::OneThree).unwrap().coupling_x, 0.0);
        assert!(chain.energy().is_finite());
    }

    #[test]
    fn method_lists_parse() {
        assert_eq!(Method::parse_list("svm, osc,svm").unwrap(), vec![Method::Svm, Method::Osc]);
        assert!(Method::parse_list("exact").is_err());
        assert!(Method::parse_list("").is_err());
    }

    #[test]
    fn sweep_isolates_failures_and_writes_both_forms() {
        let cells = energy_sweep(
            0.01,
            &[3.0],
            &[Method::Expansion, Method::EPsi],
            OscOptions::default(),
            &SweepSvm::default(),
            Strategy::Serial,
        );
        assert_eq!(cells.len(), 2);
        assert!(cells.iter().all(|c| c.energy.is_none() && c.error.is_some()));
        let good = energy_sweep(
            FRAC_PI_2,
            &[3.0, 5.0],
            &[Method::Expansion, Method::EPsi],
            OscOptions::default(),
            &SweepSvm::default(),
            Strategy::Parallel,
        );
        let mut long = Vec::new();
        write_sweep_long_csv(&mut long, &good).unwrap();
        let long = String::from_utf8(long).unwrap();
        assert_eq!(long.lines().count(), 5);
        let mut wide = Vec::new();
        write_sweep_wide_csv(&mut wide, &good).unwrap();
        let wide = String::from_utf8(wide).unwrap();
        let row: Vec<&str> = wide.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row.len(), 6);
        assert!(row[3].is_empty() && !row[2].is_empty());
    }
}
