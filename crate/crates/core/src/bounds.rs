//! Generalization bounds computed from robustness certificates.

use serde::Serialize;

use crate::certificates::RobustnessCertificate;
use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// `eps + M lambda_0`.
    Iid,
    /// Infimum over `K` with confidence `delta / (K (K + 1))` per entry.
    Adaptive,
    /// Infimum over `K` for sample-independent `eps`, no union penalty.
    SharpAdaptive,
    /// `(n_hat/n) eps + M ((n - n_hat)/n + lambda_0)`.
    Pseudo,
    /// Pseudo bound minimized over `K` with the adaptive union penalty.
    AdaptivePseudo,
    /// Doeblin-chain bound.
    Markov,
    /// Quantile and truncated-mean sandwich.
    QuantileSandwich,
}

/// Every input a bound was computed from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundInputs {
    pub n: usize,
    pub delta: f64,
    pub m: f64,
    pub k: usize,
    pub epsilon: f64,
    pub n_hat: usize,
    pub gamma: f64,
    pub lambda0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sandwich {
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub quantile_lower: f64,
    pub quantile_upper: f64,
    pub truncated_lower: f64,
    pub truncated_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub theorem: BoundKind,
    /// Raw bound on the generalization gap.
    pub value: f64,
    /// `min(value, M)`.
    pub clipped: f64,
    pub inputs: BoundInputs,
    pub valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sandwich: Option<Sandwich>,
    /// Second printed form of the bound, where one exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alt_value: Option<f64>,
    /// Index into the certificate list of the minimizing entry.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub argmin: Option<usize>,
}

fn check_common(n: usize, delta: f64, m: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::param("sample count n must be at least 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if !(m >= 0.0 && m.is_finite()) {
        return Err(Error::param(format!(
            "loss bound M must be finite and >= 0, got {m}"
        )));
    }
    Ok(())
}

fn report(theorem: BoundKind, value: f64, inputs: BoundInputs) -> BoundReport {
    BoundReport {
        theorem,
        value,
        clipped: value.min(inputs.m),
        valid: true,
        inputs,
        sandwich: None,
        alt_value: None,
        argmin: None,
    }
}

fn inputs(cert: &RobustnessCertificate, n: usize, delta: f64, m: f64, lambda0: f64) -> BoundInputs {
    BoundInputs {
        n,
        delta,
        m,
        k: cert.k,
        epsilon: cert.epsilon,
        n_hat: cert.n_hat_or(n),
        gamma: cert.gamma,
        lambda0,
        alpha: None,
        t: None,
        beta: None,
    }
}

fn full_only(cert: &RobustnessCertificate, n: usize) -> Result<()> {
    let n_hat = cert.n_hat_or(n);
    if n_hat > n {
        return Err(Error::param(format!("n_hat = {n_hat} exceeds n = {n}")));
    }
    if n_hat < n {
        return Err(Error::WrongTheorem(format!(
            "certificate is pseudo-robust (n_hat = {n_hat} < n = {n}); use the pseudo bound"
        )));
    }
    Ok(())
}

/// `eps + M sqrt((2K ln 2 + 2 ln(1/delta)) / n)`.
pub fn iid_gap_bound(
    cert: &RobustnessCertificate,
    n: usize,
    delta: f64,
    m: f64,
) -> Result<BoundReport> {
    check_common(n, delta, m)?;
    full_only(cert, n)?;
    let lambda0 = stats::bhc_lambda(cert.k, n, delta)?;
    Ok(report(
        BoundKind::Iid,
        cert.epsilon + m * lambda0,
        inputs(cert, n, delta, m, lambda0),
    ))
}

fn check_distinct_k(certs: &[RobustnessCertificate]) -> Result<()> {
    let mut ks: Vec<usize> = certs.iter().map(|c| c.k).collect();
    ks.sort_unstable();
    if ks.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::param(
            "certificate list repeats a cell count K; keep one partition per K",
        ));
    }
    Ok(())
}

fn minimize(
    certs: &[RobustnessCertificate],
    theorem: BoundKind,
    mut eval: impl FnMut(&RobustnessCertificate) -> Result<(f64, f64)>,
    n: usize,
    delta: f64,
    m: f64,
) -> Result<BoundReport> {
    if certs.is_empty() {
        return Err(Error::EmptyInput("certificate list"));
    }
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, c) in certs.iter().enumerate() {
        let (value, lambda) = eval(c)?;
        if best.is_none_or(|b| value < b.1) {
            best = Some((i, value, lambda));
        }
    }
    let (i, value, lambda) = best.expect("non-empty");
    let mut r = report(theorem, value, inputs(&certs[i], n, delta, m, lambda));
    r.argmin = Some(i);
    Ok(r)
}

/// `min_K eps_K + M sqrt((2K ln 2 + 2 ln(K(K+1)/delta)) / n)` over the supplied
/// certificates, one per distinct `K`.
pub fn adaptive_gap_bound(
    certs: &[RobustnessCertificate],
    n: usize,
    delta: f64,
    m: f64,
) -> Result<BoundReport> {
    check_common(n, delta, m)?;
    check_distinct_k(certs)?;
    minimize(
        certs,
        BoundKind::Adaptive,
        |c| {
            full_only(c, n)?;
            let kk = c.k as f64;
            let lambda = stats::bhc_lambda(c.k, n, delta / (kk * (kk + 1.0)))?;
            Ok((c.epsilon + m * lambda, lambda))
        },
        n,
        delta,
        m,
    )
}

/// `min_K eps_K + M lambda_0(K)`; requires every `eps_K` to be sample-independent.
pub fn sharp_adaptive_gap_bound(
    certs: &[RobustnessCertificate],
    n: usize,
    delta: f64,
    m: f64,
) -> Result<BoundReport> {
    check_common(n, delta, m)?;
    if let Some(c) = certs.iter().find(|c| !c.sample_independent) {
        return Err(Error::WrongTheorem(format!(
            "{:?} certificate has a sample-dependent epsilon; use the adaptive bound",
            c.provenance
        )));
    }
    minimize(
        certs,
        BoundKind::SharpAdaptive,
        |c| {
            full_only(c, n)?;
            let lambda = stats::bhc_lambda(c.k, n, delta)?;
            Ok((c.epsilon + m * lambda, lambda))
        },
        n,
        delta,
        m,
    )
}

fn pseudo_value(cert: &RobustnessCertificate, n: usize, delta: f64, m: f64) -> Result<(f64, f64)> {
    let n_hat = cert.n_hat_or(n);
    if n_hat > n {
        return Err(Error::param(format!("n_hat = {n_hat} exceeds n = {n}")));
    }
    let lambda = stats::bhc_lambda(cert.k, n, delta)?;
    let nf = n as f64;
    let value = (n_hat as f64 / nf) * cert.epsilon + m * ((n - n_hat) as f64 / nf + lambda);
    Ok((value, lambda))
}

/// `(n_hat/n) eps + M ((n - n_hat)/n + lambda_0)`.
pub fn pseudo_gap_bound(
    cert: &RobustnessCertificate,
    n: usize,
    delta: f64,
    m: f64,
) -> Result<BoundReport> {
    check_common(n, delta, m)?;
    let (value, lambda) = pseudo_value(cert, n, delta, m)?;
    Ok(report(
        BoundKind::Pseudo,
        value,
        inputs(cert, n, delta, m, lambda),
    ))
}

/// Pseudo bound minimized over the supplied certificates, each evaluated at
/// confidence `delta / (K (K + 1))`.
pub fn adaptive_pseudo_gap_bound(
    certs: &[RobustnessCertificate],
    n: usize,
    delta: f64,
    m: f64,
) -> Result<BoundReport> {
    check_common(n, delta, m)?;
    check_distinct_k(certs)?;
    minimize(
        certs,
        BoundKind::AdaptivePseudo,
        |c| {
            let kk = c.k as f64;
            pseudo_value(c, n, delta / (kk * (kk + 1.0)), m)
        },
        n,
        delta,
        m,
    )
}

/// Doeblin-chain bound. `value` is the form
/// `eps + M sqrt(T/(alpha n)) sqrt(sqrt(2n(K ln 2 + ln(1/delta))) + 2)`;
/// `alt_value` is the fourth-root form
/// `eps + M (8 T^2 (K ln 2 + ln(1/delta)) / (alpha^2 n))^(1/4)`.
pub fn markov_gap_bound(
    cert: &RobustnessCertificate,
    n: usize,
    delta: f64,
    m: f64,
    alpha: f64,
    t: usize,
) -> Result<BoundReport> {
    check_common(n, delta, m)?;
    full_only(cert, n)?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::param(format!(
            "minorization alpha must lie in (0, 1], got {alpha}"
        )));
    }
    if t == 0 {
        return Err(Error::param("mixing time T must be at least 1"));
    }
    let (nf, tf) = (n as f64, t as f64);
    if nf <= 2.0 * tf / alpha {
        return Err(Error::PreconditionViolated(format!(
            "n = {n} must exceed 2T/alpha = {}",
            2.0 * tf / alpha
        )));
    }
    let l = cert.k as f64 * std::f64::consts::LN_2 + (1.0 / delta).ln();
    let lambda = (tf / (alpha * nf)).sqrt() * ((2.0 * nf * l).sqrt() + 2.0).sqrt();
    let fourth = (8.0 * tf * tf * l / (alpha * alpha * nf)).powf(0.25);
    let mut r = report(
        BoundKind::Markov,
        cert.epsilon + m * lambda,
        inputs(cert, n, delta, m, lambda),
    );
    r.inputs.alpha = Some(alpha);
    r.inputs.t = Some(t);
    r.alt_value = Some(cert.epsilon + m * fourth);
    Ok(r)
}

/// Quantile and truncated-mean sandwich for the population `beta`-statistics
/// of the loss, from the training losses. The window is
/// `beta -/+ (lambda_0 + (n - n_hat)/n)` and must stay inside `[0, 1]`.
pub fn quantile_sandwich(
    cert: &RobustnessCertificate,
    training_losses: &[f64],
    beta: f64,
    delta: f64,
) -> Result<BoundReport> {
    let n = training_losses.len();
    if n == 0 {
        return Err(Error::EmptyInput("training losses"));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::param(format!("beta must lie in [0, 1], got {beta}")));
    }
    let max_loss = training_losses.iter().fold(0.0, |a: f64, b| a.max(*b));
    check_common(n, delta, max_loss)?;
    let n_hat = cert.n_hat_or(n);
    if n_hat > n {
        return Err(Error::param(format!("n_hat = {n_hat} exceeds n = {n}")));
    }
    let lambda0 = stats::bhc_lambda(cert.k, n, delta)?;
    let slack = lambda0 + (n - n_hat) as f64 / n as f64;
    let (beta_lo, beta_hi) = (beta - slack, beta + slack);
    if beta_lo < 0.0 || beta_hi > 1.0 {
        return Err(Error::PreconditionViolated(if slack <= 0.5 {
            format!("beta window [{beta_lo}, {beta_hi}] leaves [0, 1]; feasible beta range is [{slack}, {}]", 1.0 - slack)
        } else {
            format!("window half-width {slack} exceeds 1/2; no beta is feasible")
        }));
    }
    // losses are non-negative, so the 0-quantile of the loss is 0
    let q_lo = if beta_lo > 0.0 {
        stats::beta_quantile(training_losses, beta_lo)?
    } else {
        0.0
    };
    let q_hi = stats::beta_quantile(training_losses, beta_hi.max(f64::MIN_POSITIVE))?;
    let t_lo = stats::beta_truncated_mean(training_losses, beta_lo)?;
    let t_hi = stats::beta_truncated_mean(training_losses, beta_hi)?;
    let eps = cert.epsilon;
    let sandwich = Sandwich {
        beta_lo,
        beta_hi,
        quantile_lower: q_lo - eps,
        quantile_upper: q_hi + eps,
        truncated_lower: t_lo - eps,
        truncated_upper: t_hi + eps,
    };
    let mut r = report(
        BoundKind::QuantileSandwich,
        sandwich.quantile_upper - sandwich.quantile_lower,
        inputs(cert, n, delta, max_loss, lambda0),
    );
    r.clipped = r.value;
    r.inputs.beta = Some(beta);
    r.sandwich = Some(sandwich);
    Ok(r)
}
