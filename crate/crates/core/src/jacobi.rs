//! Mass-normalized Jacobi coordinates for chains of equal-mass molecules,
//! one per layer. Layers are numbered 1 (top) to 3; per in-plane direction
//!
//! ```text
//! q₁ = (x₁ − x₃)/√2,   q₂ = (x₁ + x₃ − 2x₂)/√6,   Q = (x₁ + x₂ + x₃)/√3
//! ```
//!
//! and for two bodies `q = (x₁ − x₂)/√2`. The map is orthogonal, so the
//! kinetic energy is `−½∇²` in every mode (units ħ²/md²).

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Bodies {
    Two,
    Three,
}

impl Bodies {
    pub fn modes(self) -> usize {
        match self {
            Bodies::Two => 1,
            Bodies::Three => 2,
        }
    }

    pub fn count(self) -> usize {
        self.modes() + 1
    }

    pub fn pairs(self) -> &'static [Pair] {
        match self {
            Bodies::Two => &[Pair::OneTwo],
            Bodies::Three => &[Pair::OneTwo, Pair::TwoThree, Pair::OneThree],
        }
    }

    pub fn from_count(n: usize) -> Option<Self> {
        match n {
            2 => Some(Bodies::Two),
            3 => Some(Bodies::Three),
            _ => None,
        }
    }
}

/// An interlayer pair; the relative coordinate is `x_i − x_j` for pair `(i, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pair {
    OneTwo,
    TwoThree,
    OneThree,
}

impl Pair {
    /// Interlayer distance in units of the layer spacing.
    pub fn distance(self) -> f64 {
        match self {
            Pair::OneTwo | Pair::TwoThree => 1.0,
            Pair::OneThree => 2.0,
        }
    }

    /// Coefficients `c` with `x_i − x_j = c · q`.
    pub fn coefficients(self, bodies: Bodies) -> Vec<f64> {
        let r32 = 1.5f64.sqrt();
        match (bodies, self) {
            (Bodies::Two, Pair::OneTwo) => vec![SQRT_2],
            (Bodies::Two, p) => panic!("pair {p:?} does not exist for two bodies"),
            (Bodies::Three, Pair::OneTwo) => vec![FRAC_1_SQRT_2, r32],
            (Bodies::Three, Pair::TwoThree) => vec![FRAC_1_SQRT_2, -r32],
            (Bodies::Three, Pair::OneThree) => vec![SQRT_2, 0.0],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Pair::OneTwo => "12",
            Pair::TwoThree => "23",
            Pair::OneThree => "13",
        }
    }
}

/// Coefficients `r` with particle coordinate `x_k = r · q` when the center
/// of mass is at the origin.
pub fn particle_coefficients(bodies: Bodies, particle: usize) -> Vec<f64> {
    let r6 = 6f64.sqrt();
    match (bodies, particle) {
        (Bodies::Two, 1) => vec![FRAC_1_SQRT_2],
        (Bodies::Two, 2) => vec![-FRAC_1_SQRT_2],
        (Bodies::Three, 1) => vec![FRAC_1_SQRT_2, 1.0 / r6],
        (Bodies::Three, 2) => vec![0.0, -(2.0f64 / 3.0).sqrt()],
        (Bodies::Three, 3) => vec![-FRAC_1_SQRT_2, 1.0 / r6],
        _ => panic!("particle {particle} does not exist for {bodies:?}"),
    }
}

/// Three-body particle coordinates to `([q₁, q₂], Q)`.
pub fn to_jacobi(x: [f64; 3]) -> ([f64; 2], f64) {
    let q1 = (x[0] - x[2]) / SQRT_2;
    let q2 = (x[0] + x[2] - 2.0 * x[1]) / 6f64.sqrt();
    let com = (x[0] + x[1] + x[2]) / 3f64.sqrt();
    ([q1, q2], com)
}

/// Inverse of [`to_jacobi`].
pub fn from_jacobi(q: [f64; 2], com: f64) -> [f64; 3] {
    let c = com / 3f64.sqrt();
    let mut x = [c; 3];
    for (k, xk) in x.iter_mut().enumerate() {
        let r = particle_coefficients(Bodies::Three, k + 1);
        *xk += r[0] * q[0] + r[1] * q[1];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn textbook_point() {
        let (q, com) = to_jacobi([1.0, 0.0, -1.0]);
        assert!((q[0] - SQRT_2).abs() < 1e-15);
        assert!(q[1].abs() < 1e-15 && com.abs() < 1e-15);
    }

    #[test]
    fn pair_coefficients_consistent_with_particles() {
        for pair in Bodies::Three.pairs() {
            let (i, j) = match pair {
                Pair::OneTwo => (1, 2),
                Pair::TwoThree => (2, 3),
                Pair::OneThree => (1, 3),
            };
            let ri = particle_coefficients(Bodies::Three, i);
            let rj = particle_coefficients(Bodies::Three, j);
            let c = pair.coefficients(Bodies::Three);
            for m in 0..2 {
                assert!((ri[m] - rj[m] - c[m]).abs() < 1e-15);
            }
        }
        let c = Pair::OneTwo.coefficients(Bodies::Two);
        let (r1, r2) = (particle_coefficients(Bodies::Two, 1), particle_coefficients(Bodies::Two, 2));
        assert!((r1[0] - r2[0] - c[0]).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn round_trip(x1 in -5.0f64..5.0, x2 in -5.0f64..5.0, x3 in -5.0f64..5.0) {
            let (q, com) = to_jacobi([x1, x2, x3]);
            let back = from_jacobi(q, com);
            for (a, b) in back.iter().zip([x1, x2, x3]) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            // orthogonality: the norm is preserved
            let n2 = q[0] * q[0] + q[1] * q[1] + com * com;
            prop_assert!((n2 - (x1 * x1 + x2 * x2 + x3 * x3)).abs() < 1e-10);
        }
    }
}
