use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, streams};

use super::{dot, input_dim, Sample, SolverOptions};

/// Top-`d` principal directions of the uncentered second moment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub directions: Vec<Vec<f64>>,
    /// Rayleigh quotients `w_k' S w_k` with `S = (1/n) sum x x'`.
    pub eigenvalues: Vec<f64>,
    /// `sum_i sum_k (w_k' x_i)^2`.
    pub objective: f64,
}

impl PcaModel {
    /// `sum_k (w_k' x)^2`.
    pub fn captured(&self, x: &[f64]) -> f64 {
        self.directions.iter().map(|w| dot(w, x).powi(2)).sum()
    }

    pub fn dim(&self) -> usize {
        self.directions.len()
    }
}

fn mat_vec(a: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    a.iter().map(|row| dot(row, v)).collect()
}

/// Removes the components along `basis` (applied twice) and normalizes.
fn orthonormalize(v: &mut [f64], basis: &[Vec<f64>]) -> f64 {
    for _ in 0..2 {
        for b in basis {
            let p = dot(v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
    }
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Power iteration with deflation by orthogonalization against the directions
/// already found. Rank-deficient data is completed with any orthonormal basis
/// vectors of the null space.
pub fn train_pca(samples: &[Sample], d: usize, opts: SolverOptions) -> Result<PcaModel> {
    let m = input_dim(samples)?;
    if d == 0 || d > m {
        return Err(Error::param(format!(
            "PCA needs 1 <= d <= {m}, got d = {d}"
        )));
    }
    let n = samples.len() as f64;
    let mut s = vec![vec![0.0; m]; m];
    for x in samples.iter().map(|s| &s.x) {
        for i in 0..m {
            for j in 0..m {
                s[i][j] += x[i] * x[j] / n;
            }
        }
    }
    let scale = s
        .iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);

    let mut rng = rng::stream(0, streams::LEARNER);
    let mut directions: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut eigenvalues = Vec::with_capacity(d);
    for _ in 0..d {
        let mut v: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        if orthonormalize(&mut v, &directions) == 0.0 {
            v = complete_basis(&directions, m);
        }
        for _ in 0..opts.max_iter {
            let mut next = mat_vec(&s, &v);
            if orthonormalize(&mut next, &directions) <= scale * 1e-14 {
                // v spans (numerically) null directions: any unit vector there is optimal
                break;
            }
            let change = next
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            v = next;
            if change < opts.tol {
                break;
            }
        }
        orthonormalize(&mut v, &directions);
        let sv = mat_vec(&s, &v);
        eigenvalues.push(dot(&v, &sv));
        directions.push(v);
    }
    let objective = n * eigenvalues.iter().sum::<f64>();
    Ok(PcaModel {
        directions,
        eigenvalues,
        objective,
    })
}

fn complete_basis(existing: &[Vec<f64>], m: usize) -> Vec<f64> {
    (0..m)
        .find_map(|j| {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            (orthonormalize(&mut e, existing) > 1e-6).then_some(e)
        })
        .expect("fewer than m directions leave a free axis")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};

    fn random_samples(seed: u64, n: usize, scales: &[f64]) -> Vec<Sample> {
        let mut r = rng::stream(seed, 0);
        (0..n)
            .map(|_| {
                Sample::new(
                    scales
                        .iter()
                        .map(|s| s * r.random_range(-1.0..1.0))
                        .collect(),
                    0.0,
                )
            })
            .collect()
    }

    fn check_orthonormal(p: &PcaModel) {
        for (i, a) in p.directions.iter().enumerate() {
            assert!((dot(a, a) - 1.0).abs() <= 1e-9);
            for b in &p.directions[i + 1..] {
                assert!(dot(a, b).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn single_axis_data() {
        let samples: Vec<Sample> = (1..20)
            .map(|i| Sample::new(vec![0.0, i as f64 * 0.1, 0.0], 0.0))
            .collect();
        let p = train_pca(&samples, 1, SolverOptions::default()).unwrap();
        assert!((p.directions[0][1].abs() - 1.0).abs() < 1e-9);
        let p3 = train_pca(&samples, 3, SolverOptions::default()).unwrap();
        check_orthonormal(&p3);
    }

    #[test]
    fn diagonal_second_moment() {
        // second moment diag(4, 1)
        let samples = vec![
            Sample::new(vec![2.0, 1.0], 0.0),
            Sample::new(vec![-2.0, 1.0], 0.0),
            Sample::new(vec![2.0, -1.0], 0.0),
            Sample::new(vec![-2.0, -1.0], 0.0),
        ];
        let p = train_pca(&samples, 1, SolverOptions::default()).unwrap();
        assert!((p.directions[0][0].abs() - 1.0).abs() < 1e-9);
        assert!((p.objective - 4.0 * 4.0).abs() < 1e-9);
    }

    #[test]
    fn matches_eigendecomposition_oracle() {
        for seed in 0..10 {
            let samples = random_samples(seed, 100, &[1.0, 0.8, 0.5, 0.3, 0.1]);
            let m = 5;
            let n = samples.len() as f64;
            let s = DMatrix::from_fn(m, m, |i, j| {
                samples.iter().map(|z| z.x[i] * z.x[j]).sum::<f64>() / n
            });
            let mut oracle: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
            oracle.sort_by(|a, b| b.total_cmp(a));
            for d in 1..=m {
                let p = train_pca(
                    &samples,
                    d,
                    SolverOptions {
                        tol: 1e-13,
                        max_iter: 200_000,
                    },
                )
                .unwrap();
                check_orthonormal(&p);
                let expected: f64 = oracle[..d].iter().sum();
                let got: f64 = p.eigenvalues.iter().sum();
                assert!(
                    (got - expected).abs() < 1e-7 * expected.max(1.0),
                    "d={d} {got} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn full_basis_captures_everything() {
        let samples = random_samples(21, 30, &[1.0, 1.0, 1.0]);
        let p = train_pca(&samples, 3, SolverOptions::default()).unwrap();
        for z in &samples {
            assert!((p.captured(&z.x) - dot(&z.x, &z.x)).abs() < 1e-9);
        }
        assert!(matches!(
            train_pca(&samples, 4, SolverOptions::default()),
            Err(Error::Parameter(_))
        ));
    }
}
