//! Order statistics of empirical loss samples and the multinomial deviation
//! radius used by every bound.
//!
//! For an empirical distribution on `x_(1) <= ... <= x_(n)`:
//!
//! * the beta-quantile is `x_(k)` with `k = ceil(beta * n)`;
//! * the beta-truncated mean is the mass-`beta` left tail,
//!   `(1/n) * sum_{i <= j} x_(i) + (beta - j/n) * x_(j+1)` with `j = floor(beta * n)`.
//!
//! The partial-atom term is weighted by the leftover probability
//! `beta - P[X < Q]` itself, which is what the linear program
//! `min { sum a_i x_i : 0 <= a_i <= 1/n, sum a_i = beta }` gives.

use crate::error::{Error, Result};

fn sorted(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyInput("loss sample"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::param("loss sample contains NaN"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Smallest `k` with `k / n >= beta`.
fn ceil_rank(beta: f64, n: usize) -> usize {
    let nf = n as f64;
    let mut k = (beta * nf).ceil().clamp(0.0, nf) as usize;
    while k > 0 && (k - 1) as f64 / nf >= beta {
        k -= 1;
    }
    while k < n && (k as f64) / nf < beta {
        k += 1;
    }
    k
}

/// Largest `j` with `j / n <= beta`.
fn floor_rank(beta: f64, n: usize) -> usize {
    let nf = n as f64;
    let mut j = (beta * nf).floor().clamp(0.0, nf) as usize;
    while j < n && ((j + 1) as f64) / nf <= beta {
        j += 1;
    }
    while j > 0 && (j as f64) / nf > beta {
        j -= 1;
    }
    j
}

/// `inf { c : P(X <= c) >= beta }` of the empirical distribution.
pub fn beta_quantile(values: &[f64], beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::param(format!(
            "quantile level must lie in (0, 1], got {beta}"
        )));
    }
    let v = sorted(values)?;
    let k = ceil_rank(beta, v.len()).max(1);
    Ok(v[k - 1])
}

/// Contribution of the leftmost `beta` probability mass to the mean.
pub fn beta_truncated_mean(values: &[f64], beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::param(format!(
            "truncation level must lie in [0, 1], got {beta}"
        )));
    }
    let v = sorted(values)?;
    let n = v.len();
    let j = floor_rank(beta, n);
    let head: f64 = v[..j].iter().sum::<f64>() / n as f64;
    if j == n {
        return Ok(head);
    }
    let leftover = (beta - j as f64 / n as f64).max(0.0);
    Ok(head + leftover * v[j])
}

/// Deviation radius `sqrt((2K ln 2 + 2 ln(1/delta)) / n)` of the cell
/// frequencies of an `n`-sample multinomial over `K` cells.
///
/// `delta = 1` is accepted and gives the `sqrt(2K ln 2 / n)` limit.
pub fn bhc_lambda(cells: usize, n: usize, delta: f64) -> Result<f64> {
    if cells == 0 {
        return Err(Error::param("cell count must be at least 1"));
    }
    if n == 0 {
        return Err(Error::param("sample count must be at least 1"));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::param(format!(
            "delta must lie in (0, 1], got {delta}"
        )));
    }
    let k = cells as f64;
    Ok(((2.0 * k * std::f64::consts::LN_2 + 2.0 * (1.0 / delta).ln()) / n as f64).sqrt())
}

/// `sum_i | N_i / n - p_i |`.
pub fn multinomial_deviation(counts: &[u64], probs: &[f64]) -> Result<f64> {
    if counts.len() != probs.len() {
        return Err(Error::param(format!(
            "{} counts but {} probabilities",
            counts.len(),
            probs.len()
        )));
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::EmptyInput("multinomial counts"));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 || probs.iter().any(|p| *p < 0.0) {
        return Err(Error::param(format!(
            "probabilities must be non-negative and sum to 1, sum is {total}"
        )));
    }
    let nf = n as f64;
    Ok(counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| (c as f64 / nf - p).abs())
        .sum())
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean and standard error of the mean.
pub fn mean_and_std_err(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = mean(values);
    if values.len() < 2 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Smallest `k` with `P(Binomial(trials, p) <= k) >= confidence`.
pub fn binomial_upper_quantile(trials: usize, p: f64, confidence: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&p) || !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::param(format!(
            "binomial quantile needs p in [0, 1] and confidence in (0, 1), got {p} and {confidence}"
        )));
    }
    if p == 0.0 {
        return Ok(0);
    }
    if p == 1.0 {
        return Ok(trials);
    }
    let r = trials as f64;
    let mut log_pmf = r * (1.0 - p).ln();
    let mut cdf = 0.0;
    for k in 0..=trials {
        if k > 0 {
            let kf = k as f64;
            log_pmf += ((r - kf + 1.0) / kf).ln() + (p / (1.0 - p)).ln();
        }
        cdf += log_pmf.exp();
        if cdf >= confidence {
            return Ok(k);
        }
    }
    Ok(trials)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    /// Brute-force LP oracle: the optimum of
    /// `min sum a_i x_i s.t. 0 <= a_i <= 1/n, sum a_i = beta`
    /// sits at a vertex where all but at most one `a_i` are at a bound.
    fn lp_oracle(x: &[f64], beta: f64) -> f64 {
        let n = x.len();
        let cap = 1.0 / n as f64;
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << n) {
            let full: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let base = full.len() as f64 * cap;
            let rest = beta - base;
            if rest < -1e-15 {
                continue;
            }
            let head: f64 = full.iter().map(|&i| cap * x[i]).sum();
            if rest.abs() <= 1e-15 {
                best = best.min(head);
                continue;
            }
            if rest > cap + 1e-15 {
                continue;
            }
            for f in (0..n).filter(|i| mask & (1 << i) == 0) {
                best = best.min(head + rest * x[f]);
            }
        }
        best
    }

    fn ten_atoms() -> Vec<f64> {
        // c_1 < ... < c_10, deliberately not evenly spaced and given unsorted
        vec![0.9, 0.05, 3.5, 1.25, 0.3, 2.0, 7.75, 0.6, 5.0, 4.4]
    }

    #[test]
    fn ten_atom_worked_example() {
        let mut c = ten_atoms();
        let q = beta_quantile(&c, 0.63).unwrap();
        let t = beta_truncated_mean(&c, 0.63).unwrap();
        c.sort_by(f64::total_cmp);
        assert_eq!(q, c[6]);
        let expected = 0.1 * c[..6].iter().sum::<f64>() + 0.03 * c[6];
        assert!((t - expected).abs() < 1e-12);
        assert!((t - 0.1 * (c[..6].iter().sum::<f64>() + 0.3 * c[6])).abs() < 1e-12);
    }

    #[test]
    fn quantile_small_cases() {
        assert_eq!(beta_quantile(&[1.0, 2.0, 3.0, 4.0], 0.5).unwrap(), 2.0);
        assert_eq!(beta_quantile(&[4.0, 2.0, 3.0, 1.0], 1.0).unwrap(), 4.0);
        // k/n exactly equal to beta after rounding noise
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(beta_quantile(&v, 0.7).unwrap(), 7.0);
        assert_eq!(beta_quantile(&v, 0.3).unwrap(), 3.0);
        assert!(beta_quantile(&[], 0.5).is_err());
        assert!(beta_quantile(&v, 0.0).is_err());
    }

    #[test]
    fn truncated_mean_small_cases() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(beta_truncated_mean(&v, 0.0).unwrap(), 0.0);
        assert!((beta_truncated_mean(&v, 0.625).unwrap() - 1.125).abs() < 1e-15);
        assert!((lp_oracle(&v, 0.625) - 1.125).abs() < 1e-15);
        assert!((beta_truncated_mean(&v, 1.0).unwrap() - 2.5).abs() < 1e-15);
        assert!(beta_truncated_mean(&[], 0.3).is_err());
        assert!(beta_truncated_mean(&v, 1.5).is_err());
    }

    #[test]
    fn lambda_values() {
        // sqrt((16 ln 2 + 2 ln 20) / 400) evaluated independently
        let expected = ((16.0 * 2f64.ln() + 2.0 * 20f64.ln()) / 400.0).sqrt();
        let l = bhc_lambda(8, 400, 0.05).unwrap();
        assert!((l - expected).abs() < 1e-15);
        assert!((l - 0.206_657).abs() < 1e-5);
        let one = bhc_lambda(5, 100, 1.0).unwrap();
        assert!((one - (10.0 * 2f64.ln() / 100.0).sqrt()).abs() < 1e-15);
        let quarter = bhc_lambda(8, 1600, 0.05).unwrap();
        assert!((quarter - l / 2.0).abs() < 1e-15);
        assert!(bhc_lambda(8, 400, 0.0).is_err());
        assert!(bhc_lambda(8, 400, 1.5).is_err());
    }

    #[test]
    fn multinomial_cases() {
        assert_eq!(multinomial_deviation(&[2, 2], &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(multinomial_deviation(&[7, 0], &[0.5, 0.5]).unwrap(), 1.0);
        assert!((multinomial_deviation(&[3, 1], &[0.5, 0.5]).unwrap() - 0.5).abs() < 1e-15);
        assert!(multinomial_deviation(&[3, 1], &[1.0]).is_err());
    }

    #[test]
    fn full_truncation_is_the_mean() {
        let mut r = rng::stream(1, 0);
        for _ in 0..100 {
            let v: Vec<f64> = (0..r.random_range(1..50))
                .map(|_| r.random::<f64>() * 3.0)
                .collect();
            assert!((beta_truncated_mean(&v, 1.0).unwrap() - mean(&v)).abs() < 1e-12);
        }
    }

    #[test]
    fn lp_equivalence_on_random_small_samples() {
        let mut r = rng::stream(2, 0);
        for _ in 0..500 {
            let n = r.random_range(1..=8);
            let v: Vec<f64> = (0..n).map(|_| r.random::<f64>() * 5.0).collect();
            let beta: f64 = r.random();
            let got = beta_truncated_mean(&v, beta).unwrap();
            assert!((got - lp_oracle(&v, beta)).abs() <= 1e-12, "{v:?} {beta}");
        }
    }

    proptest! {
        #[test]
        fn monotone_in_beta(
            v in prop::collection::vec(0.0f64..10.0, 1..40),
            a in 0.001f64..=1.0,
            b in 0.001f64..=1.0,
        ) {
            let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
            prop_assert!(beta_quantile(&v, hi).unwrap() >= beta_quantile(&v, lo).unwrap());
            prop_assert!(beta_truncated_mean(&v, hi).unwrap() >= beta_truncated_mean(&v, lo).unwrap() - 1e-12);
        }

        #[test]
        fn stochastic_dominance(
            v in prop::collection::vec(0.0f64..10.0, 1..40),
            bumps in prop::collection::vec(0.0f64..2.0, 40),
            beta in 0.001f64..=1.0,
        ) {
            let mut x = v.clone();
            x.sort_by(f64::total_cmp);
            // y_(i) >= x_(i) for every order statistic
            let y: Vec<f64> = x.iter().zip(&bumps).scan(0.0f64, |acc, (xi, b)| {
                *acc += b;
                Some(xi + *acc)
            }).collect();
            prop_assert!(beta_quantile(&y, beta).unwrap() >= beta_quantile(&x, beta).unwrap());
            prop_assert!(beta_truncated_mean(&y, beta).unwrap() >= beta_truncated_mean(&x, beta).unwrap() - 1e-12);
        }
    }

    #[test]
    fn binomial_quantile_matches_direct_sum() {
        // direct pmf via exact binomial coefficients
        let (r, p) = (200usize, 0.1f64);
        let mut cdf = 0.0;
        let mut expected = None;
        for k in 0..=r {
            let mut c = 1.0f64;
            for i in 0..k {
                c *= (r - i) as f64 / (i + 1) as f64;
            }
            cdf += c * p.powi(k as i32) * (1.0 - p).powi((r - k) as i32);
            if cdf >= 0.99 {
                expected = Some(k);
                break;
            }
        }
        assert_eq!(
            binomial_upper_quantile(r, p, 0.99).unwrap(),
            expected.unwrap()
        );
        assert_eq!(binomial_upper_quantile(r, 0.0, 0.99).unwrap(), 0);
        assert_eq!(binomial_upper_quantile(1, 0.1, 0.5).unwrap(), 0);
    }
}
