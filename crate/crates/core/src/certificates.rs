//! Robustness certificates `(K, eps, n_hat)` for the supported learners, and a
//! probe estimator that checks them from the inside of each cell.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::cover::{self, BoxSpace, Metric, MetricSpace, OutputSpace, Partition, Space};
use crate::error::{Error, Result};
use crate::learners::{
    self, Hypothesis, LassoModel, LinearModel, LossSpec, MajorityVote, Sample, SvmModel,
};
use crate::rng::{self, streams};

/// Which certificate formula produced a certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    MajorityVote,
    Lipschitz,
    Svm,
    Lasso,
    NormConstrainedRegression,
    Network,
    Pca,
    Margin,
}

/// How a sample maps to a point of the partitioned space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleLayout {
    /// The partition covers inputs only.
    Input,
    /// The partition covers `(x, y)`.
    InputLabel,
}

impl SampleLayout {
    pub fn point(self, s: &Sample) -> Vec<f64> {
        match self {
            SampleLayout::Input => s.x.clone(),
            SampleLayout::InputLabel => s.joint(),
        }
    }

    pub fn sample(self, mut z: Vec<f64>) -> Sample {
        match self {
            SampleLayout::Input => Sample::new(z, 0.0),
            SampleLayout::InputLabel => {
                let y = z.pop().expect("joint points carry a label");
                Sample::new(z, y)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RobustnessCertificate {
    pub k: usize,
    pub epsilon: f64,
    /// `None` for full robustness, i.e. `n_hat = n`.
    pub n_hat: Option<usize>,
    pub gamma: f64,
    pub partition_kind: &'static str,
    #[serde(skip)]
    pub partition: Arc<Partition>,
    pub layout: SampleLayout,
    pub provenance: Provenance,
    /// `eps` depends on nothing but hyperparameters and the space.
    pub sample_independent: bool,
    pub constants: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    /// Training samples the pseudo-certificate covers.
    #[serde(skip)]
    pub robust_indices: Option<Vec<usize>>,
}

impl RobustnessCertificate {
    fn new(
        partition: Partition,
        epsilon: f64,
        layout: SampleLayout,
        provenance: Provenance,
        sample_independent: bool,
    ) -> Self {
        RobustnessCertificate {
            k: partition.len(),
            epsilon,
            n_hat: None,
            gamma: partition.gamma(),
            partition_kind: partition.kind(),
            partition: Arc::new(partition),
            layout,
            provenance,
            sample_independent,
            constants: BTreeMap::new(),
            notes: Vec::new(),
            robust_indices: None,
        }
    }

    fn with(mut self, name: &str, value: f64) -> Self {
        self.constants.insert(name.to_string(), value);
        self
    }

    /// `n_hat`, reading full robustness as `n`.
    pub fn n_hat_or(&self, n: usize) -> usize {
        self.n_hat.unwrap_or(n)
    }

    pub fn is_pseudo(&self, n: usize) -> bool {
        self.n_hat_or(n) < n
    }

    /// Same partition and bookkeeping with a different `eps`; used by self-tests.
    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        RobustnessCertificate {
            epsilon,
            ..self.clone()
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!(
            "gamma must be positive and finite, got {gamma}"
        )))
    }
}

fn joint_box(input: &BoxSpace, output: OutputSpace) -> Result<BoxSpace> {
    match output {
        OutputSpace::Interval { lo, hi } => Ok(input.product(&BoxSpace::new(vec![lo], vec![hi])?)),
        OutputSpace::Binary => Err(Error::CertificateInapplicable(
            "a real-valued output interval is required".into(),
        )),
    }
}

/// `(2 K_X, 0)` on the product of the vote partition with the labels.
pub fn certify_majority_vote(
    model: &MajorityVote,
    input_partition: &Partition,
) -> Result<RobustnessCertificate> {
    if model.partition() != input_partition {
        return Err(Error::CertificateInapplicable(
            "majority vote was trained on a different partition".into(),
        ));
    }
    let product = cover::product_partition(input_partition.clone(), OutputSpace::Binary, None)?;
    Ok(RobustnessCertificate::new(
        product,
        0.0,
        SampleLayout::InputLabel,
        Provenance::MajorityVote,
        true,
    )
    .with("k_input", input_partition.len() as f64))
}

/// `(N(gamma/2, Z), c * gamma)` for a loss that is `c`-Lipschitz on `Z`.
pub fn certify_lipschitz(
    constant: f64,
    gamma: f64,
    space: &MetricSpace,
    layout: SampleLayout,
) -> Result<RobustnessCertificate> {
    if !(constant >= 0.0 && constant.is_finite()) {
        return Err(Error::param(format!(
            "Lipschitz constant must be finite and >= 0, got {constant}"
        )));
    }
    check_gamma(gamma)?;
    let partition = match &space.space {
        Space::Box(_) => cover::grid_cover(space, gamma)?,
        Space::Points(points) => {
            let centers = cover::greedy_cover(points, gamma / 2.0, space.metric)?;
            cover::partition_from_cover(centers, gamma, space)?
        }
    };
    Ok(RobustnessCertificate::new(
        partition,
        constant * gamma,
        layout,
        Provenance::Lipschitz,
        true,
    )
    .with("lipschitz", constant))
}

/// `f_H(gamma)` of a kernel.
pub fn kernel_spread(kernel: &learners::Kernel, gamma: f64) -> f64 {
    kernel.spread(gamma)
}

/// `(2 N(gamma/2, X, l2), sqrt(f_H(gamma) / c))` for a trained SVM.
pub fn certify_svm(
    model: &SvmModel,
    gamma: f64,
    input: &BoxSpace,
) -> Result<RobustnessCertificate> {
    check_gamma(gamma)?;
    if !(model.objective <= 1.0 + 1e-9) {
        return Err(Error::CertificateInapplicable(format!(
            "SVM objective {} exceeds the value 1 at w = 0",
            model.objective
        )));
    }
    let grid = cover::grid_cover(&MetricSpace::boxed(input.clone(), Metric::Euclidean), gamma)?;
    let k_input = grid.len();
    let partition = cover::product_partition(grid, OutputSpace::Binary, None)?;
    let spread = model.kernel.spread(gamma);
    Ok(RobustnessCertificate::new(
        partition,
        (spread / model.c).sqrt(),
        SampleLayout::InputLabel,
        Provenance::Svm,
        true,
    )
    .with("c", model.c)
    .with("f_h", spread)
    .with("k_input", k_input as f64))
}

/// `(N(gamma/2, Z, l_inf), (Y(s)/c + 1) gamma)` with `Y(s) = (1/n) sum y_i^2`.
pub fn certify_lasso(
    samples: &[Sample],
    c: f64,
    gamma: f64,
    input: &BoxSpace,
    output: OutputSpace,
) -> Result<RobustnessCertificate> {
    check_gamma(gamma)?;
    if samples.is_empty() {
        return Err(Error::EmptyInput("training samples"));
    }
    if !(c > 0.0) {
        return Err(Error::param(format!(
            "regularization c must be positive, got {c}"
        )));
    }
    let y_mean_sq = samples.iter().map(|s| s.y * s.y).sum::<f64>() / samples.len() as f64;
    let z = joint_box(input, output)?;
    let partition = cover::grid_cover(&MetricSpace::boxed(z, Metric::Sup), gamma)?;
    Ok(RobustnessCertificate::new(
        partition,
        (y_mean_sq / c + 1.0) * gamma,
        SampleLayout::InputLabel,
        Provenance::Lasso,
        false,
    )
    .with("c", c)
    .with("y_mean_sq", y_mean_sq))
}

/// Certificate for a trained Lasso model; reads `c` and `Y(s)` off the model.
pub fn certify_lasso_model(
    model: &LassoModel,
    samples: &[Sample],
    gamma: f64,
    input: &BoxSpace,
    output: OutputSpace,
) -> Result<RobustnessCertificate> {
    let cert = certify_lasso(samples, model.c, gamma, input, output)?;
    let l1 = model.l1_norm();
    if l1 > cert.constants["y_mean_sq"] / model.c + 1e-9 {
        return Err(Error::CertificateInapplicable(format!(
            "Lasso weights have l1 norm {l1}, above Y(s)/c"
        )));
    }
    Ok(cert)
}

/// `(N(gamma/2, X, l2) * N(gamma/2, Y), (c + 1) gamma)` for `||w||_2 <= c`.
pub fn certify_norm_constrained(
    model: &LinearModel,
    gamma: f64,
    input: &BoxSpace,
    output: OutputSpace,
) -> Result<RobustnessCertificate> {
    check_gamma(gamma)?;
    let norm = model.norm();
    if norm > model.c + 1e-9 {
        return Err(Error::CertificateInapplicable(format!(
            "||w||_2 = {norm} exceeds c = {}",
            model.c
        )));
    }
    if matches!(output, OutputSpace::Binary) {
        return Err(Error::CertificateInapplicable(
            "a real-valued output interval is required".into(),
        ));
    }
    let grid = cover::grid_cover(&MetricSpace::boxed(input.clone(), Metric::Euclidean), gamma)?;
    let partition = cover::product_partition(grid, output, Some(gamma))?;
    Ok(RobustnessCertificate::new(
        partition,
        (model.c + 1.0) * gamma,
        SampleLayout::InputLabel,
        Provenance::NormConstrainedRegression,
        true,
    )
    .with("c", model.c))
}

/// `(N(gamma/2, Z, l_inf), (1 + alpha^d beta^d) gamma)` for a `d`-layer network.
pub fn certify_network(
    alpha: f64,
    beta: f64,
    depth: usize,
    gamma: f64,
    input: &BoxSpace,
    output: OutputSpace,
) -> Result<RobustnessCertificate> {
    check_gamma(gamma)?;
    if !(alpha >= 0.0 && beta >= 0.0 && depth >= 1) {
        return Err(Error::param(
            "network certificate needs alpha, beta >= 0 and depth >= 1",
        ));
    }
    let z = joint_box(input, output)?;
    let partition = cover::grid_cover(&MetricSpace::boxed(z, Metric::Sup), gamma)?;
    let lip = (alpha * beta).powi(depth as i32);
    let mut cert = RobustnessCertificate::new(
        partition,
        (1.0 + lip) * gamma,
        SampleLayout::InputLabel,
        Provenance::Network,
        true,
    )
    .with("alpha", alpha)
    .with("beta", beta)
    .with("depth", depth as f64);
    cert.notes.push(
        "epsilon uses the loss Lipschitz constant 1 + (alpha beta)^d; the smaller (alpha beta)^d gamma omits the label term"
            .into(),
    );
    Ok(cert)
}

/// `(N(gamma/2, Z, l2), 2 d gamma B)` for PCA with `d` directions on `||z||_2 <= B`.
pub fn certify_pca(
    radius: f64,
    dim: usize,
    gamma: f64,
    input: &BoxSpace,
) -> Result<RobustnessCertificate> {
    check_gamma(gamma)?;
    if !radius.is_finite() {
        return Err(Error::CertificateInapplicable("space is unbounded".into()));
    }
    let needed = input.max_norm(Metric::Euclidean);
    if radius < needed - 1e-12 {
        return Err(Error::CertificateInapplicable(format!(
            "radius B = {radius} does not bound the space, which reaches norm {needed}"
        )));
    }
    let partition =
        cover::grid_cover(&MetricSpace::boxed(input.clone(), Metric::Euclidean), gamma)?;
    Ok(RobustnessCertificate::new(
        partition,
        2.0 * dim as f64 * gamma * radius,
        SampleLayout::Input,
        Provenance::Pca,
        true,
    )
    .with("b", radius)
    .with("d", dim as f64))
}

/// Lower estimate of the distance from `x` to the decision boundary: exact
/// for linear SVMs, otherwise the closest of `probes` uniform draws from the
/// `gamma`-ball that flips the prediction (infinite when none flips).
pub fn margin_distance<R: Rng + ?Sized>(
    h: &Hypothesis,
    x: &[f64],
    gamma: f64,
    input: &MetricSpace,
    probes: usize,
    rng: &mut R,
) -> Result<f64> {
    if let Hypothesis::Svm(SvmModel {
        weights: Some(w),
        bias,
        ..
    }) = h
    {
        let dual = input.metric.dual_norm(w);
        if dual == 0.0 {
            return Err(Error::DegenerateClassifier("weight vector is zero".into()));
        }
        return Ok((learners::dot(w, x) + bias).abs() / dual);
    }
    let label = h.predict_label(x)?;
    let clamp: Box<dyn Fn(Vec<f64>) -> Vec<f64>> = match &input.space {
        Space::Box(b) => {
            let b = b.clone();
            Box::new(move |z: Vec<f64>| {
                z.iter()
                    .enumerate()
                    .map(|(j, v)| v.clamp(b.lo()[j], b.hi()[j]))
                    .collect()
            })
        }
        Space::Points(_) => Box::new(|z| z),
    };
    let mut closest = f64::INFINITY;
    for _ in 0..probes {
        let z = clamp(ball_point(x, gamma, input.metric, rng));
        if h.predict_label(&z)? != label {
            closest = closest.min(input.metric.distance(x, &z));
        }
    }
    Ok(closest)
}

fn ball_point<R: Rng + ?Sized>(center: &[f64], r: f64, metric: Metric, rng: &mut R) -> Vec<f64> {
    match metric {
        Metric::Sup => center
            .iter()
            .map(|c| c + rng.random_range(-r..=r))
            .collect(),
        Metric::Euclidean => {
            let dir: Vec<f64> = center.iter().map(|_| StandardNormal.sample(rng)).collect();
            let norm = Metric::Euclidean.norm(&dir).max(f64::MIN_POSITIVE);
            let u: f64 = rng.random();
            let scale = r * u.powf(1.0 / center.len() as f64) / norm;
            center
                .iter()
                .zip(&dir)
                .map(|(c, d)| c + d * scale)
                .collect()
        }
    }
}

/// Pseudo-certificate `(2 N(gamma/2, X, rho), 0, n_hat)` where `n_hat` counts
/// training inputs farther than `gamma` from the decision boundary.
pub fn certify_margin(
    h: &Hypothesis,
    samples: &[Sample],
    gamma: f64,
    input: &MetricSpace,
    probes: usize,
    seed: u64,
) -> Result<RobustnessCertificate> {
    check_gamma(gamma)?;
    if samples.is_empty() {
        return Err(Error::EmptyInput("training samples"));
    }
    let grid = match &input.space {
        Space::Box(_) => cover::grid_cover(input, gamma)?,
        Space::Points(points) => {
            let centers = cover::greedy_cover(points, gamma / 2.0, input.metric)?;
            cover::partition_from_cover(centers, gamma, input)?
        }
    };
    let mut robust = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let mut rng = rng::substream(seed, streams::PROBE, i as u64);
        if margin_distance(h, &s.x, gamma, input, probes, &mut rng)? > gamma {
            robust.push(i);
        }
    }
    let k_input = grid.len();
    let partition = cover::product_partition(grid, OutputSpace::Binary, None)?;
    let mut cert = RobustnessCertificate::new(
        partition,
        0.0,
        SampleLayout::InputLabel,
        Provenance::Margin,
        false,
    )
    .with("k_input", k_input as f64);
    cert.n_hat = Some(robust.len());
    cert.robust_indices = Some(robust);
    Ok(cert)
}

/// Largest observed `|l(h, s_j) - l(h, z)|` over training samples `s_j` and
/// probes `z` drawn uniformly inside the cell of `s_j`. A lower bound on the
/// true `eps`. Pseudo-certificates are probed at their robust samples only.
pub fn empirical_epsilon(
    h: &Hypothesis,
    cert: &RobustnessCertificate,
    samples: &[Sample],
    probes_per_cell: usize,
    loss: &LossSpec,
    seed: u64,
) -> Result<f64> {
    if probes_per_cell == 0 {
        return Err(Error::param("probes_per_cell must be at least 1"));
    }
    let indices: Vec<usize> = match &cert.robust_indices {
        Some(idx) => idx.clone(),
        None => (0..samples.len()).collect(),
    };
    if indices.is_empty() {
        return Ok(0.0);
    }
    // per occupied cell: (min, max) training loss
    let mut cells: HashMap<usize, (f64, f64)> = HashMap::new();
    for &i in &indices {
        let s = &samples[i];
        let cell = cert.partition.cell_index(&cert.layout.point(s))?;
        let l = learners::loss(h, s, loss)?;
        let e = cells.entry(cell).or_insert((l, l));
        e.0 = e.0.min(l);
        e.1 = e.1.max(l);
    }
    let mut occupied: Vec<(usize, (f64, f64))> = cells.into_iter().collect();
    occupied.sort_by_key(|(c, _)| *c);

    let per_cell: Vec<Result<(f64, usize)>> = occupied
        .par_iter()
        .map(|&(cell, (lo, hi))| {
            let mut rng = rng::substream(seed, streams::PROBE, cell as u64);
            let mut worst: f64 = 0.0;
            let mut drawn = 0;
            for _ in 0..probes_per_cell {
                let Some(z) = cert.partition.sample_cell(cell, &mut rng)? else {
                    continue;
                };
                drawn += 1;
                let lz = learners::loss(h, &cert.layout.sample(z), loss)?;
                worst = worst.max((hi - lz).abs()).max((lz - lo).abs());
            }
            Ok((worst, drawn))
        })
        .collect();
    let mut eps: f64 = 0.0;
    let mut drawn = 0;
    for r in per_cell {
        let (w, d) = r?;
        eps = eps.max(w);
        drawn += d;
    }
    if drawn == 0 {
        return Err(Error::EstimatorUnavailable(format!(
            "no probe could be drawn inside any {} cell",
            cert.partition_kind
        )));
    }
    Ok(eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{
        train_lasso, train_majority_vote, train_norm_constrained_regression, train_pca, train_svm,
        Kernel, LossKind, SolverOptions, SvmOptions,
    };

    fn unit(dim: usize) -> BoxSpace {
        BoxSpace::cube(dim, 0.0, 1.0).unwrap()
    }

    fn sym(dim: usize) -> BoxSpace {
        BoxSpace::cube(dim, -1.0, 1.0).unwrap()
    }

    fn regression_data(seed: u64, n: usize) -> Vec<Sample> {
        let mut r = rng::stream(seed, 0);
        (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..2).map(|_| r.random_range(-1.0..1.0)).collect();
                let y = (0.6 * x[0] - 0.3 * x[1] + r.random_range(-0.1..0.1)).clamp(-1.0, 1.0);
                Sample::new(x, y)
            })
            .collect()
    }

    #[test]
    fn majority_vote_certificate() {
        let grid = cover::grid_cover(&MetricSpace::boxed(unit(2), Metric::Sup), 0.5).unwrap();
        let mut r = rng::stream(1, 0);
        let samples: Vec<Sample> = (0..40)
            .map(|_| {
                let x: Vec<f64> = (0..2).map(|_| r.random_range(0.0..1.0)).collect();
                let y = if x[0] + r.random_range(-0.3..0.3) > 0.5 {
                    1.0
                } else {
                    -1.0
                };
                Sample::new(x, y)
            })
            .collect();
        let mv = train_majority_vote(&samples, grid.clone()).unwrap();
        let cert = certify_majority_vote(&mv, &grid).unwrap();
        assert_eq!((cert.k, cert.epsilon), (8, 0.0));
        let h = Hypothesis::MajorityVote(mv.clone());
        let eps = empirical_epsilon(
            &h,
            &cert,
            &samples,
            50,
            &LossSpec::new(LossKind::ZeroOne, 1.0).unwrap(),
            3,
        )
        .unwrap();
        assert_eq!(eps, 0.0);

        let other = cover::grid_cover(&MetricSpace::boxed(unit(2), Metric::Sup), 0.25).unwrap();
        assert!(matches!(
            certify_majority_vote(&mv, &other),
            Err(Error::CertificateInapplicable(_))
        ));

        let one = cover::grid_cover(&MetricSpace::boxed(unit(1), Metric::Sup), 2.0).unwrap();
        let mv1 = train_majority_vote(&[Sample::new(vec![0.2], 1.0)], one.clone()).unwrap();
        assert_eq!(certify_majority_vote(&mv1, &one).unwrap().k, 2);
    }

    #[test]
    fn lipschitz_certificate_values() {
        let space = MetricSpace::boxed(unit(1), Metric::Sup);
        let c = certify_lipschitz(2.0, 0.1, &space, SampleLayout::Input).unwrap();
        assert!((c.epsilon - 0.2).abs() < 1e-15);
        let c = certify_lipschitz(3.0, 0.5, &space, SampleLayout::Input).unwrap();
        assert_eq!((c.k, c.epsilon), (2, 1.5));
        assert_eq!(
            certify_lipschitz(0.0, 0.3, &space, SampleLayout::Input)
                .unwrap()
                .epsilon,
            0.0
        );
        let pts =
            MetricSpace::points(vec![vec![0.0], vec![0.1], vec![0.9]], Metric::Euclidean).unwrap();
        assert_eq!(
            certify_lipschitz(1.0, 0.5, &pts, SampleLayout::Input)
                .unwrap()
                .k,
            2
        );
    }

    #[test]
    fn svm_certificate_values() {
        let m = SvmModel {
            objective: 0.5,
            ..SvmModel::linear(vec![1.0, 0.0], 0.0, 0.25)
        };
        let c = certify_svm(&m, 0.1, &unit(2)).unwrap();
        assert!((c.epsilon - 0.1 / 0.5).abs() < 1e-15);
        assert_eq!(c.k, 2 * 15 * 15);
        let g = SvmModel {
            kernel: Kernel::Gaussian { sigma: 0.5 },
            ..m.clone()
        };
        let c = certify_svm(&g, 0.3, &unit(2)).unwrap();
        let f = 2.0 - 2.0 * (-0.09f64 / 0.5).exp();
        assert!((c.epsilon - (f / 0.25).sqrt()).abs() < 1e-12);
        let bad = SvmModel {
            objective: 1.5,
            ..m
        };
        assert!(certify_svm(&bad, 0.1, &unit(2)).is_err());
    }

    #[test]
    fn lasso_certificate_values() {
        let ys = [1.0, 0.0];
        let samples: Vec<Sample> = ys.iter().map(|y| Sample::new(vec![0.0], *y)).collect();
        let out = OutputSpace::Interval { lo: -1.0, hi: 1.0 };
        // Y(s) = 0.5, c = 0.25
        let c = certify_lasso(&samples, 0.25, 0.1, &sym(1), out).unwrap();
        assert!((c.epsilon - 0.3).abs() < 1e-12);
        let zeros = vec![Sample::new(vec![0.0], 0.0)];
        assert!(
            (certify_lasso(&zeros, 0.25, 0.1, &sym(1), out)
                .unwrap()
                .epsilon
                - 0.1)
                .abs()
                < 1e-15
        );
        assert!(certify_lasso(&samples, 0.25, 0.1, &sym(1), OutputSpace::Binary).is_err());
    }

    #[test]
    fn network_and_pca_values() {
        let out = OutputSpace::Interval { lo: -1.0, hi: 1.0 };
        let c = certify_network(1.0, 1.0, 2, 0.1, &sym(1), out).unwrap();
        assert!((c.epsilon - 0.2).abs() < 1e-15);
        let c = certify_network(0.0, 1.0, 2, 0.1, &sym(1), out).unwrap();
        assert!((c.epsilon - 0.1).abs() < 1e-15);
        let c = certify_pca(1.0, 1, 0.1, &BoxSpace::cube(2, -0.5, 0.5).unwrap()).unwrap();
        assert!((c.epsilon - 0.2).abs() < 1e-15);
        let c2 = certify_pca(1.0, 2, 0.1, &BoxSpace::cube(2, -0.5, 0.5).unwrap()).unwrap();
        assert!((c2.epsilon - 2.0 * c.epsilon).abs() < 1e-15);
        assert!(matches!(
            certify_pca(0.5, 1, 0.1, &sym(2)),
            Err(Error::CertificateInapplicable(_))
        ));
    }

    #[test]
    fn margin_counts() {
        let h = Hypothesis::Svm(SvmModel::linear(vec![1.0, 0.0], 0.0, 1.0));
        let space = MetricSpace::boxed(sym(2), Metric::Euclidean);
        let mut r = rng::stream(0, 0);
        assert!(
            (margin_distance(&h, &[0.5, 0.3], 0.4, &space, 0, &mut r).unwrap() - 0.5).abs() < 1e-15
        );
        let samples = vec![
            Sample::new(vec![0.5, 0.3], 1.0),
            Sample::new(vec![0.1, 0.0], 1.0),
        ];
        let c = certify_margin(&h, &samples, 0.4, &space, 0, 1).unwrap();
        assert_eq!((c.n_hat, c.epsilon), (Some(1), 0.0));
        let on_boundary = vec![
            Sample::new(vec![0.0, 0.3], 1.0),
            Sample::new(vec![0.0, -0.2], -1.0),
        ];
        assert_eq!(
            certify_margin(&h, &on_boundary, 0.1, &space, 0, 1)
                .unwrap()
                .n_hat,
            Some(0)
        );
        assert_eq!(
            certify_margin(&h, &samples, 0.01, &space, 0, 1)
                .unwrap()
                .n_hat,
            Some(2)
        );
        let zero = Hypothesis::Svm(SvmModel::linear(vec![0.0, 0.0], 0.1, 1.0));
        assert!(matches!(
            certify_margin(&zero, &samples, 0.1, &space, 0, 1),
            Err(Error::DegenerateClassifier(_))
        ));
        // monotone in gamma
        let mut prev = usize::MAX;
        for g in [0.05, 0.1, 0.2, 0.4, 0.8] {
            let nh = certify_margin(&h, &regression_like_binary(), g, &space, 0, 1)
                .unwrap()
                .n_hat
                .unwrap();
            assert!(nh <= prev);
            prev = nh;
        }
    }

    fn regression_like_binary() -> Vec<Sample> {
        regression_data(4, 60)
            .into_iter()
            .map(|s| Sample::new(s.x.clone(), if s.y >= 0.0 { 1.0 } else { -1.0 }))
            .collect()
    }

    #[test]
    fn probe_estimates_stay_below_closed_forms() {
        let out = OutputSpace::Interval { lo: -1.0, hi: 1.0 };
        for seed in 0..5 {
            let samples = regression_data(seed, 40);
            let lasso = train_lasso(&samples, 0.1, SolverOptions::default()).unwrap();
            let cert = certify_lasso_model(&lasso, &samples, 0.25, &sym(2), out).unwrap();
            let h = Hypothesis::Lasso(lasso);
            let eps = empirical_epsilon(
                &h,
                &cert,
                &samples,
                200,
                &LossSpec::new(LossKind::Absolute, 10.0).unwrap(),
                seed,
            )
            .unwrap();
            assert!(
                eps > 0.0 && eps <= cert.epsilon + 1e-9,
                "{eps} vs {}",
                cert.epsilon
            );

            let reg = train_norm_constrained_regression(
                &samples,
                0.5,
                SolverOptions {
                    tol: 1e-8,
                    max_iter: 3000,
                },
            )
            .unwrap();
            let cert = certify_norm_constrained(&reg, 0.25, &sym(2), out).unwrap();
            let h = Hypothesis::NormConstrained(reg);
            let eps = empirical_epsilon(
                &h,
                &cert,
                &samples,
                100,
                &LossSpec::new(LossKind::Absolute, 10.0).unwrap(),
                seed,
            )
            .unwrap();
            assert!(eps <= cert.epsilon + 1e-9);

            let pca = train_pca(&samples, 1, SolverOptions::default()).unwrap();
            let cert = certify_pca(2f64.sqrt(), 1, 0.25, &sym(2)).unwrap();
            let h = Hypothesis::Pca(pca);
            let eps = empirical_epsilon(
                &h,
                &cert,
                &samples,
                100,
                &LossSpec::new(LossKind::PcaQuadratic, 10.0).unwrap(),
                seed,
            )
            .unwrap();
            assert!(eps <= cert.epsilon + 1e-9);

            let binary = regression_like_binary();
            let svm = train_svm(
                &binary,
                0.1,
                Kernel::Gaussian { sigma: 0.5 },
                SvmOptions { epochs: 10, seed },
            )
            .unwrap();
            let cert = certify_svm(&svm, 0.2, &sym(2)).unwrap();
            let h = Hypothesis::Svm(svm);
            let eps = empirical_epsilon(
                &h,
                &cert,
                &binary,
                100,
                &LossSpec::new(LossKind::Hinge, 10.0).unwrap(),
                seed,
            )
            .unwrap();
            assert!(eps <= cert.epsilon + 1e-9);
        }
    }

    #[test]
    fn epsilon_monotone_and_k_non_increasing_in_gamma() {
        let out = OutputSpace::Interval { lo: -1.0, hi: 1.0 };
        let samples = regression_data(9, 20);
        let mut prev: Option<RobustnessCertificate> = None;
        for g in [0.05, 0.1, 0.2, 0.3, 0.5, 1.0] {
            let cert = certify_lasso(&samples, 0.2, g, &sym(2), out).unwrap();
            if let Some(p) = &prev {
                assert!(cert.epsilon >= p.epsilon && cert.k <= p.k);
            }
            prev = Some(cert);
        }
    }
}
