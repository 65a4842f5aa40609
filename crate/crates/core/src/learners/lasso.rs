use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{input_dim, Sample, SolverOptions};

/// Solution of `min_w (1/n) sum (y_i - w.x_i)^2 + c ||w||_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub w: Vec<f64>,
    pub c: f64,
    pub objective: f64,
    /// `Y(s) = (1/n) sum y_i^2`, the objective at `w = 0`.
    pub y_mean_sq: f64,
    pub iterations: usize,
}

impl LassoModel {
    /// A fixed model, for tests and hand-built hypotheses.
    pub fn from_weights(w: Vec<f64>, c: f64) -> Self {
        LassoModel {
            w,
            c,
            objective: f64::NAN,
            y_mean_sq: f64::NAN,
            iterations: 0,
        }
    }

    pub fn l1_norm(&self) -> f64 {
        self.w.iter().map(|v| v.abs()).sum()
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub(crate) fn lasso_objective(samples: &[Sample], w: &[f64], c: f64) -> f64 {
    let n = samples.len() as f64;
    let fit = samples
        .iter()
        .map(|s| (s.y - super::dot(w, &s.x)).powi(2))
        .sum::<f64>()
        / n;
    fit + c * w.iter().map(|v| v.abs()).sum::<f64>()
}

/// Cyclic coordinate descent from `w = 0` with soft-thresholding, until the
/// largest coordinate move in a sweep drops below `opts.tol`.
pub fn train_lasso(samples: &[Sample], c: f64, opts: SolverOptions) -> Result<LassoModel> {
    let m = input_dim(samples)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::param(format!(
            "regularization c must be positive, got {c}"
        )));
    }
    let n = samples.len() as f64;
    let cols: Vec<Vec<f64>> = (0..m)
        .map(|j| samples.iter().map(|s| s.x[j]).collect())
        .collect();
    let col_sq: Vec<f64> = cols
        .iter()
        .map(|col| col.iter().map(|v| v * v).sum::<f64>() / n)
        .collect();
    let mut resid: Vec<f64> = samples.iter().map(|s| s.y).collect();
    let y_mean_sq = resid.iter().map(|v| v * v).sum::<f64>() / n;

    let mut w = vec![0.0; m];
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut max_change = 0.0f64;
        for j in 0..m {
            if col_sq[j] == 0.0 {
                continue;
            }
            let rho =
                cols[j].iter().zip(&resid).map(|(x, r)| x * r).sum::<f64>() / n + col_sq[j] * w[j];
            let updated = soft_threshold(rho, c / 2.0) / col_sq[j];
            let delta = updated - w[j];
            if delta != 0.0 {
                resid
                    .iter_mut()
                    .zip(&cols[j])
                    .for_each(|(r, x)| *r -= delta * x);
                w[j] = updated;
            }
            max_change = max_change.max(delta.abs());
        }
        if max_change < opts.tol {
            break;
        }
    }

    let mut objective = lasso_objective(samples, &w, c);
    // descent from zero never ends above the zero objective; guard rounding anyway
    if objective > y_mean_sq {
        w.iter_mut().for_each(|v| *v = 0.0);
        objective = y_mean_sq;
    }
    Ok(LassoModel {
        w,
        c,
        objective,
        y_mean_sq,
        iterations,
    })
}
