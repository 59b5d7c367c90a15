//! Brute-force numerical oracles shared by the integration tests. None of
//! them uses the closed forms of the library.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use dipolar_chains::chain::ChainGaussian;
use dipolar_chains::potential::PairPotential;
use dipolar_chains::svm::SvmBasisElement;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Random symmetric positive-definite 2×2 form with eigenvalues
/// log-uniform in `[lo, hi]`.
pub fn random_form(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> DMatrix<f64> {
    let mut eig = || (lo.ln() + (hi.ln() - lo.ln()) * rng.gen::<f64>()).exp();
    let (l1, l2) = (eig(), eig());
    let phi = PI * rng.gen::<f64>();
    let (s, c) = phi.sin_cos();
    let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
    &r * DMatrix::from_diagonal(&DVector::from_vec(vec![l1, l2])) * r.transpose()
}

pub fn random_element(rng: &mut ChaCha8Rng) -> SvmBasisElement {
    let a = random_form(rng, 0.3, 3.0);
    let c = DVector::from_fn(2, |_, _| 2.0 * rng.gen::<f64>() - 1.0);
    let b = random_form(rng, 0.3, 3.0);
    SvmBasisElement::new(a, c, b).unwrap()
}

fn quad(form: &DMatrix<f64>, c: &[f64; 2], q: [f64; 2]) -> (f64, [f64; 2]) {
    let d = [q[0] - c[0], q[1] - c[1]];
    let ad = [form[(0, 0)] * d[0] + form[(0, 1)] * d[1], form[(1, 0)] * d[0] + form[(1, 1)] * d[1]];
    (d[0] * ad[0] + d[1] * ad[1], ad)
}

/// Trapezoid-rule `(∫ g_a g_b, ½ ∫ ∇g_a·∇g_b)` over one 2-mode sector with
/// `g = exp(−½ (q−c)ᵀ A (q−c))`.
pub fn sector_integrals(a: &DMatrix<f64>, ca: [f64; 2], b: &DMatrix<f64>, cb: [f64; 2]) -> (f64, f64) {
    let lam_min = a.clone().symmetric_eigenvalues().min().min(b.clone().symmetric_eigenvalues().min());
    let lam_max = a.clone().symmetric_eigenvalues().max() + b.clone().symmetric_eigenvalues().max();
    let reach = ca.iter().chain(cb.iter()).fold(0.0f64, |m, v| m.max(v.abs())) + 10.0 / lam_min.sqrt();
    let h = 0.25 / lam_max.sqrt();
    let n = (2.0 * reach / h).ceil() as usize + 1;
    let h = 2.0 * reach / (n - 1) as f64;
    let (mut s, mut t) = (0.0, 0.0);
    for i in 0..n {
        let q0 = -reach + h * i as f64;
        for j in 0..n {
            let q = [q0, -reach + h * j as f64];
            let (qa, ga) = quad(a, &ca, q);
            let (qb, gb) = quad(b, &cb, q);
            let w = (-0.5 * (qa + qb)).exp();
            s += w;
            t += 0.5 * w * (ga[0] * gb[0] + ga[1] * gb[1]);
        }
    }
    (s * h * h, t * h * h)
}

/// Numerical overlap and kinetic element of two three-body elements.
pub fn numeric_overlap_kinetic(a: &SvmBasisElement, b: &SvmBasisElement) -> (f64, f64) {
    let c = |e: &SvmBasisElement| [e.x_center[0], e.x_center[1]];
    let (sx, tx) = sector_integrals(&a.x_form, c(a), &b.x_form, c(b));
    let (sy, ty) = sector_integrals(&a.y_form, [0.0; 2], &b.y_form, [0.0; 2]);
    (sx * sy, tx * sy + sx * ty)
}

/// `∫ V dx dy` over the disc `r < cutoff` in polar coordinates, with
/// `r = R t²` and composite Simpson in `t`, trapezoid in angle.
pub fn disc_integral(theta: f64, strength_u: f64, cutoff: f64) -> f64 {
    let pot = PairPotential::new(theta, strength_u, 1.0);
    let (nt, nphi) = (20_000, 512);
    let cs: Vec<(f64, f64)> = (0..nphi).map(|k| (2.0 * PI * k as f64 / nphi as f64).sin_cos()).collect();
    let ring = |r: f64| cs.iter().map(|&(s, c)| pot.value(r * c, r * s)).sum::<f64>() * 2.0 * PI / nphi as f64;
    let f = |t: f64| {
        let r = cutoff * t * t;
        ring(r) * r * 2.0 * cutoff * t
    };
    let h = 1.0 / nt as f64;
    let mut sum = f(0.0) + f(1.0);
    for i in 1..nt {
        sum += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

/// `∫ |Ψ|² d⁴q` by a tensor trapezoid rule on the box `center ± 9σ` of each
/// Jacobi mode.
pub fn normalization_4d(state: &ChainGaussian, points: usize) -> f64 {
    let axes: Vec<Vec<f64>> = (0..4)
        .map(|k| {
            let (w, c) = if k < 2 {
                (state.x.width[(k, k)], state.x.center[k])
            } else {
                (state.y.width[(k - 2, k - 2)], state.y.center[k - 2])
            };
            let sigma = (0.5 / w).sqrt();
            (0..points).map(|i| c - 9.0 * sigma + 18.0 * sigma * i as f64 / (points - 1) as f64).collect()
        })
        .collect();
    let step: f64 = axes.iter().map(|a| a[1] - a[0]).product();
    let mut total = 0.0;
    for &a in &axes[0] {
        for &b in &axes[1] {
            for &c in &axes[2] {
                for &d in &axes[3] {
                    total += state.amplitude([a, b], [c, d]).powi(2);
                }
            }
        }
    }
    total * step
}

/// Lowest eigenvalue of a symmetric tridiagonal matrix by Sturm bisection.
fn tridiagonal_lowest(diag: &[f64], off: &[f64]) -> f64 {
    let count_below = |x: f64| {
        let mut count = 0;
        let mut d = 1.0;
        for i in 0..diag.len() {
            let o2 = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
            d = diag[i] - x - if i == 0 { 0.0 } else { o2 / d };
            if d == 0.0 {
                d = 1e-300;
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    let (mut lo, mut hi) =
        (diag.iter().cloned().fold(f64::MAX, f64::min) - 2.0 * off.iter().map(|v| v.abs()).fold(0.0, f64::max), 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count_below(mid) > 0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn radial_energy(strength_u: f64, radius: f64, cells: usize) -> f64 {
    // −(1/r)(r R')' + V R = E R on cell centres, symmetrized by √r
    let h = radius / cells as f64;
    let r = |i: usize| (i as f64 + 0.5) * h;
    let v = |r: f64| strength_u * (r * r - 2.0) / (r * r + 1.0).powf(2.5);
    let diag: Vec<f64> = (0..cells)
        .map(|i| {
            let inner = i as f64 * h;
            let outer = (i + 1) as f64 * h;
            (inner + outer) / (h * h * r(i)) + v(r(i))
        })
        .collect();
    let off: Vec<f64> = (0..cells - 1).map(|i| -((i + 1) as f64 * h) / (h * h * (r(i) * r(i + 1)).sqrt())).collect();
    tridiagonal_lowest(&diag, &off)
}

/// Exact two-body ground energy at θ = π/2 (radially symmetric pair
/// potential, relative kinetic operator `−∇²`), Richardson-extrapolated.
pub fn perpendicular_two_body_energy(strength_u: f64) -> f64 {
    let coarse = radial_energy(strength_u, 80.0, 20_000);
    let fine = radial_energy(strength_u, 80.0, 40_000);
    (4.0 * fine - coarse) / 3.0
}
