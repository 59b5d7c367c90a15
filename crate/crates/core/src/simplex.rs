//! Derivative-free Nelder–Mead minimization.

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    /// Converged when every vertex is within this distance (max-norm) of
    /// the best vertex...
    pub x_tolerance: f64,
    /// ...and the spread of function values is below this.
    pub f_tolerance: f64,
    pub max_evaluations: usize,
    /// Initial step along each coordinate.
    pub initial_step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self { x_tolerance: 1e-8, f_tolerance: 1e-10, max_evaluations: 4000, initial_step: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimize `f` starting from `start`. Objective errors abort the run.
pub fn minimize<F>(mut f: F, start: &[f64], options: &SimplexOptions) -> Result<SimplexResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = start.len();
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64], count: &mut usize| -> Result<f64> {
        *count += 1;
        f(x)
    };

    let mut vertices: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    vertices.push((start.to_vec(), eval(start, &mut evaluations)?));
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += options.initial_step;
        let v = eval(&p, &mut evaluations)?;
        vertices.push((p, v));
    }

    let mut iterations = 0;
    let mut converged = false;
    while evaluations < options.max_evaluations {
        vertices.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &vertices[0];
        let diameter = vertices[1..]
            .iter()
            .flat_map(|(p, _)| p.iter().zip(&best.0).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        let spread = vertices[n].1 - vertices[0].1;
        if diameter < options.x_tolerance && spread < options.f_tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> =
            (0..n).map(|k| vertices[..n].iter().map(|(p, _)| p[k]).sum::<f64>() / n as f64).collect();
        let along =
            |t: f64| -> Vec<f64> { centroid.iter().zip(&vertices[n].0).map(|(c, w)| c + t * (w - c)).collect() };

        let reflected = along(-1.0);
        let f_r = eval(&reflected, &mut evaluations)?;
        if f_r < vertices[0].1 {
            let expanded = along(-2.0);
            let f_e = eval(&expanded, &mut evaluations)?;
            vertices[n] = if f_e < f_r { (expanded, f_e) } else { (reflected, f_r) };
        } else if f_r < vertices[n - 1].1 {
            vertices[n] = (reflected, f_r);
        } else {
            let (contracted, f_c) = if f_r < vertices[n].1 {
                let p = along(-0.5);
                let v = eval(&p, &mut evaluations)?;
                (p, v)
            } else {
                let p = along(0.5);
                let v = eval(&p, &mut evaluations)?;
                (p, v)
            };
            if f_c < vertices[n].1.min(f_r) {
                vertices[n] = (contracted, f_c);
            } else {
                let best = vertices[0].0.clone();
                for vertex in vertices.iter_mut().skip(1) {
                    let p: Vec<f64> = vertex.0.iter().zip(&best).map(|(x, b)| b + 0.5 * (x - b)).collect();
                    let v = eval(&p, &mut evaluations)?;
                    *vertex = (p, v);
                }
            }
        }
    }
    vertices.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (point, value) = vertices.swap_remove(0);
    Ok(SimplexResult { point, value, evaluations, iterations, converged })
}
