mod common;

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dipolar_chains::chain::{chain_wavefunction, solve_quadratic_model, ChainGaussian, HarmonicChainModel};
use dipolar_chains::jacobi::from_jacobi;
use dipolar_chains::landscape::expansion_coefficients;
use dipolar_chains::model::{theta_c, theta_c_star};

use common::normalization_4d;

#[test]
fn perpendicular_normalization_value() {
    let state = chain_wavefunction(&expansion_coefficients(FRAC_PI_2).unwrap(), 1.0);
    let n2 = state.normalization().powi(2);
    assert!((n2 - (51.0f64 / 4.0).sqrt() * 6.0 / (PI * PI)).abs() < 1e-12);
    assert!((n2 - 2.17073).abs() < 1e-5);
    assert!((normalization_4d(&state, 40) - 1.0).abs() < 1e-8);
}

#[test]
fn generic_solver_state_matches_closed_form_mode_by_mode() {
    for theta in [0.4, theta_c(), theta_c_star(), FRAC_PI_2] {
        let c = expansion_coefficients(theta).unwrap();
        for u in [0.7, 4.0, 25.0] {
            let closed = chain_wavefunction(&c, u);
            let generic = solve_quadratic_model(&HarmonicChainModel::from_expansion(&c, u)).unwrap().state;
            for (g, k) in [(&generic.x, &closed.x), (&generic.y, &closed.y)] {
                assert!((g.width - k.width).abs().max() < 1e-10 * k.width.abs().max());
                assert!((g.center - k.center).abs().max() < 1e-10);
            }
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Sample molecule positions from `|Ψ|²` with the center of mass at the
/// origin; only valid for diagonal widths.
fn sample_layers(state: &ChainGaussian, samples: usize, seed: u64) -> Vec<[[f64; 2]; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = |w: f64| (0.5 / w).sqrt();
    (0..samples)
        .map(|_| {
            let qx = [
                state.x.center[0] + sd(state.x.width[(0, 0)]) * normal(&mut rng),
                state.x.center[1] + sd(state.x.width[(1, 1)]) * normal(&mut rng),
            ];
            let qy = [sd(state.y.width[(0, 0)]) * normal(&mut rng), sd(state.y.width[(1, 1)]) * normal(&mut rng)];
            let x = from_jacobi(qx, 0.0);
            let y = from_jacobi(qy, 0.0);
            [[x[0], y[0]], [x[1], y[1]], [x[2], y[2]]]
        })
        .collect()
}

#[test]
fn layer_marginals_match_monte_carlo() {
    let state = chain_wavefunction(&expansion_coefficients(theta_c_star()).unwrap(), 5.0);
    let samples = sample_layers(&state, 1_000_000, 21);
    let n = samples.len() as f64;
    for layer in 1..=3 {
        let m = state.layer_marginal(layer).unwrap();
        let mean_x = samples.iter().map(|s| s[layer - 1][0]).sum::<f64>() / n;
        let mean_y = samples.iter().map(|s| s[layer - 1][1]).sum::<f64>() / n;
        let var_x = samples.iter().map(|s| (s[layer - 1][0] - mean_x).powi(2)).sum::<f64>() / n;
        let var_y = samples.iter().map(|s| (s[layer - 1][1] - mean_y).powi(2)).sum::<f64>() / n;
        // five standard errors
        assert!((mean_x - m.mean_x).abs() < 5.0 * (m.variance_x / n).sqrt(), "layer {layer}");
        assert!((mean_y - m.mean_y).abs() < 5.0 * (m.variance_y / n).sqrt(), "layer {layer}");
        assert!((var_x / m.variance_x - 1.0).abs() < 5.0 * (2.0 / n).sqrt(), "layer {layer}");
        assert!((var_y / m.variance_y - 1.0).abs() < 5.0 * (2.0 / n).sqrt(), "layer {layer}");
    }
}

#[test]
fn outer_layers_mirror_each_other() {
    let c = expansion_coefficients(theta_c_star()).unwrap();
    let state = chain_wavefunction(&c, 15.0);
    let one = state.layer_marginal(1).unwrap();
    let three = state.layer_marginal(3).unwrap();
    assert!((one.mean_x - c.a0).abs() < 1e-12);
    assert!((one.mean_x + three.mean_x).abs() < 1e-12);
    for (x, y) in [(0.1, 0.2), (-0.4, 0.05), (0.33, -0.7)] {
        assert!((one.density(x, y) - three.density(-x, y)).abs() < 1e-14 * one.density(x, y).max(1.0));
    }
}
