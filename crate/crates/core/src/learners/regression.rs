use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{dot, input_dim, Sample, SolverOptions};

/// Linear predictor `x -> w.x` with `||w||_2 <= c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub w: Vec<f64>,
    pub c: f64,
    /// Mean absolute training residual at `w`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LinearModel {
    pub fn norm(&self) -> f64 {
        dot(&self.w, &self.w).sqrt()
    }
}

fn mean_abs_residual(samples: &[Sample], w: &[f64]) -> f64 {
    samples
        .iter()
        .map(|s| (s.y - dot(w, &s.x)).abs())
        .sum::<f64>()
        / samples.len() as f64
}

fn project_l2(w: &mut [f64], radius: f64) {
    let norm = dot(w, w).sqrt();
    if norm > radius {
        let f = radius / norm;
        w.iter_mut().for_each(|v| *v *= f);
    }
}

/// Minimizes the mean absolute residual over the Euclidean ball of radius `c`
/// by projected subgradient descent, returning the best iterate seen.
pub fn train_norm_constrained_regression(
    samples: &[Sample],
    c: f64,
    opts: SolverOptions,
) -> Result<LinearModel> {
    let m = input_dim(samples)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::param(format!(
            "norm budget c must be positive, got {c}"
        )));
    }
    let n = samples.len() as f64;
    let grad_scale = samples
        .iter()
        .map(|s| dot(&s.x, &s.x).sqrt())
        .fold(0.0, f64::max);

    let mut w = vec![0.0; m];
    let mut best = w.clone();
    let mut best_obj = mean_abs_residual(samples, &w);
    let mut window_start = best_obj;
    let mut iterations = 0;
    let mut converged = grad_scale == 0.0;

    const WINDOW: usize = 1000;
    let mut g = vec![0.0; m];
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        g.iter_mut().for_each(|v| *v = 0.0);
        for s in samples {
            let r = s.y - dot(&w, &s.x);
            if r != 0.0 {
                let sign = r.signum();
                g.iter_mut()
                    .zip(&s.x)
                    .for_each(|(gj, xj)| *gj -= sign * xj / n);
            }
        }
        if dot(&g, &g) == 0.0 {
            converged = true;
            break;
        }
        let step = c / (grad_scale * (iterations as f64).sqrt());
        w.iter_mut().zip(&g).for_each(|(wj, gj)| *wj -= step * gj);
        project_l2(&mut w, c);

        let obj = mean_abs_residual(samples, &w);
        if obj < best_obj {
            best_obj = obj;
            best.copy_from_slice(&w);
        }
        if iterations % WINDOW == 0 {
            if window_start - best_obj < opts.tol {
                converged = true;
            }
            window_start = best_obj;
        }
    }

    Ok(LinearModel {
        w: best,
        c,
        objective: best_obj,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn line(slope: f64) -> Vec<Sample> {
        (0..41)
            .map(|i| {
                let x = -1.0 + i as f64 * 0.05;
                Sample::new(vec![x], slope * x)
            })
            .collect()
    }

    #[test]
    fn recovers_exact_line() {
        let samples = line(0.5);
        let m = train_norm_constrained_regression(&samples, 1.0, SolverOptions::default()).unwrap();
        // grid-search oracle over w in [-1, 1]
        let (w_star, obj_star) = (0..=20_000)
            .map(|i| -1.0 + i as f64 * 1e-4)
            .map(|w| (w, mean_abs_residual(&samples, &[w])))
            .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        assert!((w_star - 0.5).abs() < 1e-9);
        assert!(obj_star < 1e-12);
        assert!((m.w[0] - 0.5).abs() < 1e-3, "w = {:?}", m.w);
        assert!(m.objective < 1e-3);
    }

    #[test]
    fn tiny_budget_gives_zero_model() {
        let samples = line(0.5);
        let m =
            train_norm_constrained_regression(&samples, 1e-9, SolverOptions::default()).unwrap();
        assert!(m.w[0].abs() <= 1e-9);
        let mean_abs_y = samples.iter().map(|s| s.y.abs()).sum::<f64>() / samples.len() as f64;
        assert!((m.objective - mean_abs_y).abs() < 1e-8);
    }

    #[test]
    fn output_always_feasible() {
        let mut r = rng::stream(4, 0);
        for trial in 0..10 {
            let samples: Vec<Sample> = (0..60)
                .map(|_| {
                    let x: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
                    let y = 3.0 * x[0] - 2.0 * x[1] + r.random_range(-0.2..0.2);
                    Sample::new(x, y)
                })
                .collect();
            let c = 0.2 + trial as f64 * 0.3;
            let m = train_norm_constrained_regression(
                &samples,
                c,
                SolverOptions {
                    tol: 1e-8,
                    max_iter: 5000,
                },
            )
            .unwrap();
            assert!(dot(&m.w, &m.w).sqrt() <= c + 1e-9);
            assert!(m.objective <= mean_abs_residual(&samples, &[0.0; 3]) + 1e-15);
        }
        assert!(train_norm_constrained_regression(&[], 1.0, SolverOptions::default()).is_err());
    }
}
