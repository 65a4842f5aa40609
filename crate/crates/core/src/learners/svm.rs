use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, streams};

use super::{dot, input_dim, require_binary, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Kernel {
    Linear,
    Gaussian { sigma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(a, b),
            Kernel::Gaussian { sigma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
        }
    }

    /// `f_H(gamma) = max_{||a - b||_2 <= gamma} k(a,a) + k(b,b) - 2k(a,b)`.
    pub fn spread(&self, gamma: f64) -> f64 {
        match *self {
            Kernel::Linear => gamma * gamma,
            Kernel::Gaussian { sigma } => {
                2.0 - 2.0 * (-gamma * gamma / (2.0 * sigma * sigma)).exp()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => Err(Error::param(
                format!("gaussian kernel width must be positive, got {sigma}"),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmOptions {
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmOptions {
    fn default() -> Self {
        SvmOptions {
            epochs: 50,
            seed: 0,
        }
    }
}

/// Soft-margin SVM `c ||w||_H^2 + (1/n) sum hinge`, stored as a kernel
/// expansion; linear models also keep the explicit weight vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub support: Vec<Vec<f64>>,
    pub coef: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub objective: f64,
    pub norm_sq: f64,
    pub weights: Option<Vec<f64>>,
}

impl SvmModel {
    /// A fixed linear classifier `x -> w.x + bias`.
    pub fn linear(w: Vec<f64>, bias: f64, c: f64) -> Self {
        SvmModel {
            kernel: Kernel::Linear,
            support: Vec::new(),
            coef: Vec::new(),
            bias,
            c,
            objective: f64::NAN,
            norm_sq: dot(&w, &w),
            weights: Some(w),
        }
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        match &self.weights {
            Some(w) => dot(w, x) + self.bias,
            None => {
                self.support
                    .iter()
                    .zip(&self.coef)
                    .map(|(s, a)| a * self.kernel.eval(s, x))
                    .sum::<f64>()
                    + self.bias
            }
        }
    }

    /// `+1` on the non-negative side of the decision function.
    pub fn predict(&self, x: &[f64]) -> f64 {
        if self.decision(x) >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    /// `||w||_H`.
    pub fn norm_h(&self) -> f64 {
        self.norm_sq.max(0.0).sqrt()
    }
}

/// Bias minimizing `(1/n) sum max(0, 1 - y_i (f_i + d))`, and that minimum.
fn best_bias(f: &[f64], y: &[f64]) -> (f64, f64) {
    // positives are active for d < 1 - f_i, negatives for d > -1 - f_i
    let mut pos: Vec<f64> = Vec::new();
    let mut neg: Vec<f64> = Vec::new();
    for (fi, yi) in f.iter().zip(y) {
        if *yi > 0.0 {
            pos.push(1.0 - fi);
        } else {
            neg.push(-1.0 - fi);
        }
    }
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let mut pos_suffix = vec![0.0; pos.len() + 1];
    for i in (0..pos.len()).rev() {
        pos_suffix[i] = pos_suffix[i + 1] + pos[i];
    }
    let mut neg_prefix = vec![0.0; neg.len() + 1];
    for i in 0..neg.len() {
        neg_prefix[i + 1] = neg_prefix[i] + neg[i];
    }
    let total = |d: f64| {
        let p = pos.partition_point(|a| *a <= d);
        let q = neg.partition_point(|t| *t < d);
        (pos_suffix[p] - (pos.len() - p) as f64 * d) + (q as f64 * d - neg_prefix[q])
    };
    let n = f.len() as f64;
    let mut best = (0.0f64, total(0.0));
    for &d in pos.iter().chain(&neg) {
        let v = total(d);
        if v < best.1 || (v == best.1 && d.abs() < best.0.abs()) {
            best = (d, v);
        }
    }
    (best.0, best.1.max(0.0) / n)
}

/// Pegasos-style projected stochastic subgradient on the kernelized primal
/// with `lambda = 2c`. The bias is re-optimized exactly once per epoch and
/// the best checkpoint (starting from `w = 0`) is returned, so the reported
/// objective never exceeds 1.
pub fn train_svm(samples: &[Sample], c: f64, kernel: Kernel, opts: SvmOptions) -> Result<SvmModel> {
    input_dim(samples)?;
    require_binary(samples)?;
    kernel.validate()?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::param(format!(
            "SVM regularization c must be positive, got {c}"
        )));
    }
    let n = samples.len();
    let y: Vec<f64> = samples.iter().map(|s| s.y).collect();
    let gram: Vec<Vec<f64>> = samples
        .iter()
        .map(|a| samples.iter().map(|b| kernel.eval(&a.x, &b.x)).collect())
        .collect();

    let lambda = 2.0 * c;
    let radius_sq = 1.0 / lambda;
    let mut beta = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut norm_sq = 0.0;
    let mut bias = 0.0;

    let mut best_beta = beta.clone();
    let mut best_bias_val = 0.0;
    let mut best_norm = 0.0;
    let mut best_obj = 1.0;

    let mut rng = rng::stream(opts.seed, streams::LEARNER);
    let mut t = 0usize;
    for _ in 0..opts.epochs {
        for _ in 0..n {
            t += 1;
            let i = rng.random_range(0..n);
            let eta = 1.0 / (lambda * t as f64);
            let margin = y[i] * (f[i] + bias);
            let shrink = 1.0 - eta * lambda;
            beta.iter_mut().for_each(|b| *b *= shrink);
            f.iter_mut().for_each(|v| *v *= shrink);
            norm_sq *= shrink * shrink;
            if margin < 1.0 {
                let step = eta * y[i];
                norm_sq += 2.0 * step * f[i] + step * step * gram[i][i];
                beta[i] += step;
                f.iter_mut().zip(&gram[i]).for_each(|(v, k)| *v += step * k);
            }
            if norm_sq > radius_sq {
                let s = (radius_sq / norm_sq).sqrt();
                beta.iter_mut().for_each(|b| *b *= s);
                f.iter_mut().for_each(|v| *v *= s);
                norm_sq = radius_sq;
            }
        }
        let (d, hinge) = best_bias(&f, &y);
        bias = d;
        // recompute the norm from scratch to shed accumulated drift
        norm_sq = dot(&beta, &f).max(0.0);
        let obj = c * norm_sq + hinge;
        if obj < best_obj {
            best_obj = obj;
            best_beta.copy_from_slice(&beta);
            best_bias_val = d;
            best_norm = norm_sq;
        }
    }

    let (support, coef): (Vec<Vec<f64>>, Vec<f64>) = samples
        .iter()
        .zip(&best_beta)
        .filter(|(_, b)| **b != 0.0)
        .map(|(s, b)| (s.x.clone(), *b))
        .unzip();
    let weights = matches!(kernel, Kernel::Linear).then(|| {
        let mut w = vec![0.0; samples[0].x.len()];
        for (s, b) in support.iter().zip(&coef) {
            w.iter_mut().zip(s).for_each(|(wj, xj)| *wj += b * xj);
        }
        w
    });
    Ok(SvmModel {
        kernel,
        support,
        coef,
        bias: best_bias_val,
        c,
        objective: best_obj,
        norm_sq: best_norm,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hinge_mean(model: &SvmModel, samples: &[Sample]) -> f64 {
        samples
            .iter()
            .map(|s| (1.0 - s.y * model.decision(&s.x)).max(0.0))
            .sum::<f64>()
            / samples.len() as f64
    }

    fn blobs(seed: u64, n: usize) -> Vec<Sample> {
        let mut r = rng::stream(seed, 0);
        (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..2).map(|_| r.random_range(-1.0..1.0)).collect();
                let y = if x[0] + 0.5 * x[1] + r.random_range(-0.3..0.3) >= 0.0 {
                    1.0
                } else {
                    -1.0
                };
                Sample::new(x, y)
            })
            .collect()
    }

    #[test]
    fn bias_sweep_matches_brute_force() {
        let mut r = rng::stream(3, 0);
        for _ in 0..50 {
            let f: Vec<f64> = (0..15).map(|_| r.random_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..15)
                .map(|_| if r.random_bool(0.5) { 1.0 } else { -1.0 })
                .collect();
            let (d, v) = best_bias(&f, &y);
            let eval = |d: f64| {
                f.iter()
                    .zip(&y)
                    .map(|(fi, yi)| (1.0 - yi * (fi + d)).max(0.0))
                    .sum::<f64>()
                    / 15.0
            };
            assert!((eval(d) - v).abs() < 1e-12);
            let grid_min = (-4000..=4000)
                .map(|k| eval(k as f64 * 1e-3))
                .fold(f64::INFINITY, f64::min);
            assert!(v <= grid_min + 1e-12);
        }
    }

    #[test]
    fn separable_pair_reaches_zero_hinge() {
        let samples = vec![
            Sample::new(vec![1.0, 0.0], 1.0),
            Sample::new(vec![-1.0, 0.0], -1.0),
        ];
        let c = 0.01;
        let model = train_svm(
            &samples,
            c,
            Kernel::Linear,
            SvmOptions {
                epochs: 500,
                seed: 1,
            },
        )
        .unwrap();
        // grid search over (w1, w2, d) in the primal
        let mut oracle = f64::INFINITY;
        for a in -30..=30 {
            for b in -10..=10 {
                for d in -10..=10 {
                    let m =
                        SvmModel::linear(vec![a as f64 * 0.1, b as f64 * 0.1], d as f64 * 0.1, c);
                    oracle = oracle.min(c * m.norm_sq + hinge_mean(&m, &samples));
                }
            }
        }
        assert!((oracle - 0.01).abs() < 1e-12);
        assert!(
            model.objective <= oracle + 0.01,
            "objective {}",
            model.objective
        );
        assert!(hinge_mean(&model, &samples) < 0.05);
    }

    #[test]
    fn objective_never_exceeds_one() {
        for seed in 0..10 {
            let samples = blobs(seed, 60);
            for kernel in [Kernel::Linear, Kernel::Gaussian { sigma: 0.5 }] {
                for c in [0.01, 0.1, 1.0, 10.0] {
                    let m =
                        train_svm(&samples, c, kernel, SvmOptions { epochs: 20, seed }).unwrap();
                    let direct = c * m.norm_sq + hinge_mean(&m, &samples);
                    assert!((direct - m.objective).abs() < 1e-9);
                    assert!(m.objective <= 1.0);
                    assert!(m.norm_h() <= (1.0 / c).sqrt() + 1e-9);
                }
            }
        }
    }

    #[test]
    fn linear_weights_match_expansion() {
        let samples = blobs(5, 40);
        let m = train_svm(&samples, 0.05, Kernel::Linear, SvmOptions::default()).unwrap();
        let w = m.weights.clone().unwrap();
        assert!((dot(&w, &w) - m.norm_sq).abs() < 1e-9);
        let expansion = SvmModel {
            weights: None,
            ..m.clone()
        };
        for s in &samples {
            assert!((expansion.decision(&s.x) - m.decision(&s.x)).abs() < 1e-9);
        }
    }

    #[test]
    fn gaussian_is_deterministic() {
        let samples = blobs(8, 30);
        let k = Kernel::Gaussian { sigma: 0.7 };
        let a = train_svm(
            &samples,
            0.1,
            k,
            SvmOptions {
                epochs: 10,
                seed: 4,
            },
        )
        .unwrap();
        let b = train_svm(
            &samples,
            0.1,
            k,
            SvmOptions {
                epochs: 10,
                seed: 4,
            },
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.decision(&samples[0].x), a.decision(&samples[0].x.clone()));
        assert!(train_svm(
            &samples,
            0.1,
            Kernel::Gaussian { sigma: -1.0 },
            SvmOptions::default()
        )
        .is_err());
    }

    #[test]
    fn spread_closed_forms() {
        assert_eq!(Kernel::Linear.spread(0.3), 0.09);
        let g = Kernel::Gaussian { sigma: 1.0 };
        assert_eq!(g.spread(0.0), 0.0);
        let a = [0.0, 0.0];
        let b = [0.6, 0.8];
        let direct = g.eval(&a, &a) + g.eval(&b, &b) - 2.0 * g.eval(&a, &b);
        assert!((g.spread(1.0) - direct).abs() < 1e-12);
        assert!(g.spread(0.5) < g.spread(1.0));
    }
}
