//! Learning algorithms with known robustness structure, and their losses.
//!
//! Every trainer enforces the feasibility facts the certificates rely on
//! (norm balls, "objective no worse than at zero", row-wise weight budgets,
//! orthonormal directions) as a post-condition, not only at the optimum.

mod lasso;
mod mv;
mod network;
mod pca;
mod regression;
mod svm;

pub use lasso::{train_lasso, LassoModel};
pub use mv::{train_majority_vote, MajorityVote};
pub use network::{
    l1_ball_projection, nn_forward, train_network, Activation, Network, NetworkOptions,
};
pub use pca::{train_pca, PcaModel};
pub use regression::{train_norm_constrained_regression, LinearModel};
pub use svm::{train_svm, Kernel, SvmModel, SvmOptions};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observation `z = (x, y)`. Unsupervised learners ignore `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Sample { x, y }
    }

    /// `(x_1, ..., x_m, y)`.
    pub fn joint(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.x.len() + 1);
        z.extend_from_slice(&self.x);
        z.push(self.y);
        z
    }
}

/// Stopping rule shared by the iterative solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 100_000,
        }
    }
}

pub(crate) fn input_dim(samples: &[Sample]) -> Result<usize> {
    let first = samples
        .first()
        .ok_or(Error::EmptyInput("training samples"))?;
    let m = first.x.len();
    if m == 0 {
        return Err(Error::param("samples have no input coordinates"));
    }
    if let Some(bad) = samples.iter().position(|s| s.x.len() != m) {
        return Err(Error::param(format!(
            "sample {bad} has {} input coordinates, expected {m}",
            samples[bad].x.len()
        )));
    }
    if samples
        .iter()
        .any(|s| !s.y.is_finite() || s.x.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::param("samples contain non-finite values"));
    }
    Ok(m)
}

pub(crate) fn require_binary(samples: &[Sample]) -> Result<()> {
    match samples.iter().position(|s| s.y != 1.0 && s.y != -1.0) {
        Some(i) => Err(Error::param(format!(
            "sample {i} has label {}, expected -1 or +1",
            samples[i].y
        ))),
        None => Ok(()),
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A trained predictor.
#[derive(Debug, Clone, PartialEq)]
pub enum Hypothesis {
    MajorityVote(MajorityVote),
    NormConstrained(LinearModel),
    Lasso(LassoModel),
    Svm(SvmModel),
    Network(Network),
    Pca(PcaModel),
}

impl Hypothesis {
    pub fn family(&self) -> &'static str {
        match self {
            Hypothesis::MajorityVote(_) => "majority_vote",
            Hypothesis::NormConstrained(_) => "norm_constrained_regression",
            Hypothesis::Lasso(_) => "lasso",
            Hypothesis::Svm(_) => "svm",
            Hypothesis::Network(_) => "network",
            Hypothesis::Pca(_) => "pca",
        }
    }

    /// Real-valued prediction for regression learners.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        match self {
            Hypothesis::NormConstrained(m) => Ok(dot(&m.w, x)),
            Hypothesis::Lasso(m) => Ok(dot(&m.w, x)),
            Hypothesis::Network(n) => nn_forward(n, x),
            Hypothesis::MajorityVote(m) => m.predict(x),
            Hypothesis::Svm(m) => Ok(m.predict(x)),
            Hypothesis::Pca(_) => Err(Error::param("PCA has no prediction")),
        }
    }

    /// Label in `{-1, +1}` for classifiers.
    pub fn predict_label(&self, x: &[f64]) -> Result<f64> {
        match self {
            Hypothesis::MajorityVote(m) => m.predict(x),
            Hypothesis::Svm(m) => Ok(m.predict(x)),
            other => Err(Error::param(format!(
                "{} is not a classifier",
                other.family()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    ZeroOne,
    Hinge,
    Absolute,
    PcaQuadratic,
}

/// Loss kind plus the uniform bound `M` every loss value is clipped to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub bound: f64,
}

impl LossSpec {
    pub fn new(kind: LossKind, bound: f64) -> Result<Self> {
        if !(bound >= 0.0 && bound.is_finite()) {
            return Err(Error::param(format!(
                "loss bound M must be finite and >= 0, got {bound}"
            )));
        }
        Ok(LossSpec { kind, bound })
    }
}

/// Unclipped loss of `h` at `z`.
pub fn raw_loss(h: &Hypothesis, z: &Sample, kind: LossKind) -> Result<f64> {
    match (kind, h) {
        (LossKind::ZeroOne, Hypothesis::MajorityVote(_) | Hypothesis::Svm(_)) => {
            Ok(if h.predict_label(&z.x)? == z.y {
                0.0
            } else {
                1.0
            })
        }
        (LossKind::Hinge, Hypothesis::Svm(m)) => Ok((1.0 - z.y * m.decision(&z.x)).max(0.0)),
        (
            LossKind::Absolute,
            Hypothesis::NormConstrained(_) | Hypothesis::Lasso(_) | Hypothesis::Network(_),
        ) => Ok((z.y - h.predict(&z.x)?).abs()),
        (LossKind::PcaQuadratic, Hypothesis::Pca(p)) => Ok(p.captured(&z.x)),
        (kind, h) => Err(Error::param(format!(
            "loss {kind:?} does not apply to a {} hypothesis",
            h.family()
        ))),
    }
}

/// Loss of `h` at `z`, clipped to `[0, M]`.
pub fn loss(h: &Hypothesis, z: &Sample, spec: &LossSpec) -> Result<f64> {
    Ok(raw_loss(h, z, spec.kind)?.clamp(0.0, spec.bound))
}

/// Losses of `h` on every sample.
pub fn losses(h: &Hypothesis, samples: &[Sample], spec: &LossSpec) -> Result<Vec<f64>> {
    samples.iter().map(|z| loss(h, z, spec)).collect()
}
