//! Monte-Carlo validation of the bounds: repeated train / certify / bound /
//! estimate trials, run in parallel with per-trial seeds `base + trial`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{self, BoundKind, BoundReport, Sandwich};
use crate::certificates::{self, Provenance, RobustnessCertificate};
use crate::cover::{self, BoxSpace, Metric, MetricSpace, OutputSpace, Partition};
use crate::error::{Error, Result};
use crate::learners::{
    self, Activation, Hypothesis, Kernel, LossKind, LossSpec, NetworkOptions, Sample,
    SolverOptions, SvmOptions,
};
use crate::rng::{self, streams};
use crate::sampling::{self, DistributionSpec, DoeblinParams, Emission, MarkovChain, RiskSource};
use crate::stats;

/// Confidence of the one-sided binomial tolerance used in validation mode.
pub const VALIDATION_CONFIDENCE: f64 = 0.99;

/// Slack on every exact inequality the harness checks.
pub const SOUNDNESS_SLACK: f64 = 1e-9;

fn default_metric() -> Metric {
    Metric::Sup
}
fn default_epochs() -> usize {
    50
}
fn default_iterations() -> usize {
    300
}
fn default_learning_rate() -> f64 {
    0.5
}
fn default_trials() -> usize {
    1
}
fn default_probes() -> usize {
    100
}
fn default_n_mc() -> usize {
    sampling::MIN_MONTE_CARLO
}
fn default_pairs() -> usize {
    10_000
}
fn default_t_max() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearnerSpec {
    /// Majority vote over a grid of the input box at `gamma`.
    MajorityVote {
        gamma: f64,
        #[serde(default = "default_metric")]
        metric: Metric,
    },
    NormConstrainedRegression {
        c: f64,
        #[serde(default)]
        max_iter: Option<usize>,
    },
    Lasso {
        c: f64,
    },
    /// Hinge-loss certificate, or with `margin = true` the zero-one
    /// pseudo-certificate from the distance to the decision boundary.
    Svm {
        c: f64,
        kernel: Kernel,
        #[serde(default = "default_epochs")]
        epochs: usize,
        #[serde(default)]
        margin: bool,
    },
    Network {
        #[serde(default)]
        hidden: Vec<usize>,
        alpha: f64,
        beta: f64,
        activation: Activation,
        #[serde(default = "default_iterations")]
        iterations: usize,
        #[serde(default = "default_learning_rate")]
        learning_rate: f64,
    },
    Pca {
        d: usize,
        /// Bound `B` on `||z||_2`; defaults to the largest norm in the box.
        #[serde(default)]
        radius: Option<f64>,
    },
}

impl LearnerSpec {
    pub fn family(&self) -> &'static str {
        match self {
            LearnerSpec::MajorityVote { .. } => "majority_vote",
            LearnerSpec::NormConstrainedRegression { .. } => "norm_constrained_regression",
            LearnerSpec::Lasso { .. } => "lasso",
            LearnerSpec::Svm { margin: true, .. } => "svm_margin",
            LearnerSpec::Svm { .. } => "svm",
            LearnerSpec::Network { .. } => "network",
            LearnerSpec::Pca { .. } => "pca",
        }
    }

    pub fn loss_kind(&self) -> LossKind {
        match self {
            LearnerSpec::MajorityVote { .. } | LearnerSpec::Svm { margin: true, .. } => {
                LossKind::ZeroOne
            }
            LearnerSpec::Svm { .. } => LossKind::Hinge,
            LearnerSpec::NormConstrainedRegression { .. }
            | LearnerSpec::Lasso { .. }
            | LearnerSpec::Network { .. } => LossKind::Absolute,
            LearnerSpec::Pca { .. } => LossKind::PcaQuadratic,
        }
    }

    fn needs_output(&self) -> Option<&'static str> {
        match self {
            LearnerSpec::MajorityVote { .. } | LearnerSpec::Svm { .. } => Some("binary"),
            LearnerSpec::NormConstrainedRegression { .. }
            | LearnerSpec::Lasso { .. }
            | LearnerSpec::Network { .. } => Some("interval"),
            LearnerSpec::Pca { .. } => None,
        }
    }

    fn network_options(&self, seed: u64) -> Option<NetworkOptions> {
        match self {
            LearnerSpec::Network {
                hidden,
                alpha,
                beta,
                activation,
                iterations,
                learning_rate,
            } => Some(NetworkOptions {
                hidden: hidden.clone(),
                alpha: *alpha,
                beta: *beta,
                activation: *activation,
                iterations: *iterations,
                learning_rate: *learning_rate,
                seed,
            }),
            _ => None,
        }
    }
}

/// A finite chain plus the spaces its emissions live in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub transition: Vec<Vec<f64>>,
    pub emissions: Vec<Emission>,
    pub input: BoxSpace,
    pub output: OutputSpace,
    #[serde(default)]
    pub initial_state: usize,
    #[serde(default = "default_t_max")]
    pub t_max: usize,
}

impl ChainSpec {
    pub fn chain(&self) -> Result<MarkovChain> {
        MarkovChain::new(self.transition.clone(), self.emissions.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub learner: LearnerSpec,
    #[serde(default)]
    pub distribution: Option<DistributionSpec>,
    #[serde(default)]
    pub chain: Option<ChainSpec>,
    pub n: usize,
    pub delta: f64,
    /// Loss bound `M`; losses are clipped to `[0, M]`.
    pub loss_bound: f64,
    #[serde(default)]
    pub gamma_grid: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_probes")]
    pub probes_per_cell: usize,
    #[serde(default = "default_n_mc")]
    pub n_mc: usize,
    #[serde(default)]
    pub seed: u64,
    /// Level of the quantile experiment.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "default_pairs")]
    pub lipschitz_pairs: usize,
}

/// Everything fixed before the first trial.
struct Plan {
    input: BoxSpace,
    output: Option<OutputSpace>,
    loss: LossSpec,
    /// `(gamma, K)`, one entry per distinct `K`, ascending in `gamma`.
    gammas: Vec<(f64, usize)>,
    mv_partition: Option<Partition>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.plan().map(|_| ())
    }

    /// Input box and output space of the data source.
    pub fn spaces(&self) -> Result<(BoxSpace, Option<OutputSpace>)> {
        match (&self.distribution, &self.chain) {
            (Some(d), None) => {
                d.validate()?;
                Ok((d.input.clone(), d.output()))
            }
            (None, Some(c)) => {
                c.chain()?;
                Ok((c.input.clone(), Some(c.output)))
            }
            _ => Err(Error::param(
                "configure exactly one of `distribution` and `chain`",
            )),
        }
    }

    fn plan(&self) -> Result<Plan> {
        if self.trials == 0 {
            return Err(Error::param("trials must be at least 1"));
        }
        if self.n == 0 {
            return Err(Error::param("n must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::param(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        let loss = LossSpec::new(self.learner.loss_kind(), self.loss_bound)?;
        let (input, output) = self.spaces()?;
        match (self.learner.needs_output(), output) {
            (Some("binary"), Some(OutputSpace::Binary))
            | (Some("interval"), Some(OutputSpace::Interval { .. }))
            | (None, _) => {}
            (Some(kind), _) => {
                return Err(Error::param(format!(
                    "{} needs {kind} labels from the data source",
                    self.learner.family()
                )))
            }
        }
        let mv_partition = match &self.learner {
            LearnerSpec::MajorityVote { gamma, metric } => Some(cover::grid_cover(
                &MetricSpace::boxed(input.clone(), *metric),
                *gamma,
            )?),
            _ => None,
        };
        let candidates: Vec<f64> = match &self.learner {
            LearnerSpec::MajorityVote { gamma, .. } => vec![*gamma],
            _ => {
                if self.gamma_grid.is_empty() {
                    return Err(Error::param("gamma_grid must list at least one gamma"));
                }
                if let Some(g) = self
                    .gamma_grid
                    .iter()
                    .find(|g| !(**g > 0.0 && g.is_finite()))
                {
                    return Err(Error::param(format!(
                        "gamma_grid entries must be positive, got {g}"
                    )));
                }
                let mut g = self.gamma_grid.clone();
                g.sort_by(f64::total_cmp);
                g.dedup();
                g
            }
        };
        let mut gammas: Vec<(f64, usize)> = Vec::new();
        for g in candidates {
            match cell_count(&self.learner, g, &input, output) {
                Ok(k) if gammas.iter().all(|(_, kk)| *kk != k) => gammas.push((g, k)),
                Ok(_) | Err(Error::PartitionTooLarge { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        if gammas.is_empty() {
            return Err(Error::param(
                "every gamma in the grid gives a partition above the cell limit",
            ));
        }
        if let LearnerSpec::Pca {
            radius: Some(b), ..
        } = &self.learner
        {
            if *b < input.max_norm(Metric::Euclidean) - 1e-12 {
                return Err(Error::param(format!(
                    "PCA radius {b} does not bound the input box"
                )));
            }
        }
        Ok(Plan {
            input,
            output,
            loss,
            gammas,
            mv_partition,
        })
    }
}

/// Number of cells of the partition the learner's certificate uses at `gamma`.
pub fn cell_count(
    learner: &LearnerSpec,
    gamma: f64,
    input: &BoxSpace,
    output: Option<OutputSpace>,
) -> Result<usize> {
    let grid = |space: BoxSpace, metric| {
        cover::grid_cover(&MetricSpace::boxed(space, metric), gamma).map(|p| p.len())
    };
    let joint = || match output {
        Some(OutputSpace::Interval { lo, hi }) => {
            Ok(input.product(&BoxSpace::new(vec![lo], vec![hi])?))
        }
        _ => Err(Error::param("an output interval is required")),
    };
    let limit = cover::DEFAULT_MAX_CELLS as f64;
    let checked = |k: f64| {
        if k > limit {
            Err(Error::PartitionTooLarge {
                cells: k,
                limit: cover::DEFAULT_MAX_CELLS,
            })
        } else {
            Ok(k as usize)
        }
    };
    match learner {
        LearnerSpec::MajorityVote { metric, .. } => {
            checked(2.0 * grid(input.clone(), *metric)? as f64)
        }
        LearnerSpec::Svm { .. } => checked(2.0 * grid(input.clone(), Metric::Euclidean)? as f64),
        LearnerSpec::Lasso { .. } | LearnerSpec::Network { .. } => grid(joint()?, Metric::Sup),
        LearnerSpec::NormConstrainedRegression { .. } => {
            let Some(OutputSpace::Interval { lo, hi }) = output else {
                return Err(Error::param("an output interval is required"));
            };
            let ky = grid(BoxSpace::new(vec![lo], vec![hi])?, Metric::Sup)?;
            checked(grid(input.clone(), Metric::Euclidean)? as f64 * ky as f64)
        }
        LearnerSpec::Pca { .. } => grid(input.clone(), Metric::Euclidean),
    }
}

/// Trains the configured learner on `samples`.
pub fn train(config: &ExperimentConfig, samples: &[Sample], seed: u64) -> Result<Hypothesis> {
    let plan = config.plan()?;
    train_with(&config.learner, &plan, samples, seed)
}

fn train_with(
    learner: &LearnerSpec,
    plan: &Plan,
    samples: &[Sample],
    seed: u64,
) -> Result<Hypothesis> {
    Ok(match learner {
        LearnerSpec::MajorityVote { .. } => Hypothesis::MajorityVote(
            learners::train_majority_vote(samples, plan.mv_partition.clone().expect("planned"))?,
        ),
        LearnerSpec::NormConstrainedRegression { c, max_iter } => {
            let defaults = SolverOptions::default();
            let opts = SolverOptions {
                max_iter: max_iter.unwrap_or(defaults.max_iter),
                ..defaults
            };
            Hypothesis::NormConstrained(learners::train_norm_constrained_regression(
                samples, *c, opts,
            )?)
        }
        LearnerSpec::Lasso { c } => Hypothesis::Lasso(learners::train_lasso(
            samples,
            *c,
            SolverOptions::default(),
        )?),
        LearnerSpec::Svm {
            c, kernel, epochs, ..
        } => Hypothesis::Svm(learners::train_svm(
            samples,
            *c,
            *kernel,
            SvmOptions {
                epochs: *epochs,
                seed,
            },
        )?),
        LearnerSpec::Network { .. } => Hypothesis::Network(learners::train_network(
            samples,
            &learner.network_options(seed).expect("network"),
        )?),
        LearnerSpec::Pca { d, .. } => {
            Hypothesis::Pca(learners::train_pca(samples, *d, SolverOptions::default())?)
        }
    })
}

fn certify_with(
    learner: &LearnerSpec,
    plan: &Plan,
    h: &Hypothesis,
    samples: &[Sample],
    gamma: f64,
    probes: usize,
    seed: u64,
) -> Result<RobustnessCertificate> {
    let output = plan.output.unwrap_or(OutputSpace::Binary);
    match (learner, h) {
        (LearnerSpec::MajorityVote { .. }, Hypothesis::MajorityVote(m)) => {
            certificates::certify_majority_vote(m, plan.mv_partition.as_ref().expect("planned"))
        }
        (LearnerSpec::NormConstrainedRegression { .. }, Hypothesis::NormConstrained(m)) => {
            certificates::certify_norm_constrained(m, gamma, &plan.input, output)
        }
        (LearnerSpec::Lasso { .. }, Hypothesis::Lasso(m)) => {
            certificates::certify_lasso_model(m, samples, gamma, &plan.input, output)
        }
        (LearnerSpec::Svm { margin: true, .. }, Hypothesis::Svm(_)) => {
            certificates::certify_margin(
                h,
                samples,
                gamma,
                &MetricSpace::boxed(plan.input.clone(), Metric::Euclidean),
                probes,
                seed,
            )
        }
        (LearnerSpec::Svm { .. }, Hypothesis::Svm(m)) => {
            certificates::certify_svm(m, gamma, &plan.input)
        }
        (LearnerSpec::Network { alpha, beta, .. }, Hypothesis::Network(net)) => {
            certificates::certify_network(*alpha, *beta, net.depth(), gamma, &plan.input, output)
        }
        (LearnerSpec::Pca { d, radius }, Hypothesis::Pca(_)) => {
            let b = radius.unwrap_or_else(|| plan.input.max_norm(Metric::Euclidean));
            certificates::certify_pca(b, *d, gamma, &plan.input)
        }
        _ => Err(Error::param("hypothesis does not match the learner spec")),
    }
}

/// `n` training samples from the configured distribution or chain.
pub fn generate_samples(config: &ExperimentConfig, seed: u64) -> Result<Vec<Sample>> {
    match (&config.distribution, &config.chain) {
        (Some(d), None) => sampling::sample_iid(d, config.n, seed),
        (None, Some(c)) => sampling::sample_chain(&c.chain()?, config.n, c.initial_state, seed),
        _ => Err(Error::param(
            "configure exactly one of `distribution` and `chain`",
        )),
    }
}

/// Trains on `samples` and certifies the result at every planned `gamma`.
pub fn certify_grid(
    config: &ExperimentConfig,
    samples: &[Sample],
    seed: u64,
) -> Result<(Hypothesis, Vec<RobustnessCertificate>)> {
    let plan = config.plan()?;
    check_samples(&plan, samples)?;
    let h = train_with(&config.learner, &plan, samples, seed)?;
    let certs = plan
        .gammas
        .iter()
        .map(|(g, _)| {
            certify_with(
                &config.learner,
                &plan,
                &h,
                samples,
                *g,
                config.probes_per_cell,
                seed,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((h, certs))
}

fn check_samples(plan: &Plan, samples: &[Sample]) -> Result<()> {
    for s in samples {
        if !plan.input.contains(&s.x) {
            return Err(Error::OutOfSpace(s.x.clone()));
        }
        if let Some(out) = plan.output {
            if !out.contains(s.y) {
                return Err(Error::OutOfSpace(s.joint()));
            }
        }
    }
    Ok(())
}

/// The IID bound the harness applies to a certificate list. A single
/// certificate gets the one-certificate bound, or its pseudo form for margin
/// certificates. A longer list gets the sharp infimum when every `eps` is
/// sample-independent and the union-penalized infimum otherwise.
pub fn iid_bound(
    certs: &[RobustnessCertificate],
    n: usize,
    delta: f64,
    m: f64,
) -> Result<BoundReport> {
    let pseudo = certs
        .iter()
        .any(|c| c.provenance == Provenance::Margin || c.n_hat.is_some());
    match certs {
        [] => Err(Error::EmptyInput("certificate list")),
        [c] if pseudo => bounds::pseudo_gap_bound(c, n, delta, m),
        [c] => bounds::iid_gap_bound(c, n, delta, m),
        _ if pseudo => bounds::adaptive_pseudo_gap_bound(certs, n, delta, m),
        _ if certs.iter().all(|c| c.sample_independent) => {
            bounds::sharp_adaptive_gap_bound(certs, n, delta, m)
        }
        _ => bounds::adaptive_gap_bound(certs, n, delta, m),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub empirical_risk: f64,
    pub true_risk: f64,
    pub true_risk_se: f64,
    pub k: usize,
    pub epsilon: f64,
    pub n_hat: usize,
    pub gamma: f64,
    pub theorem: BoundKind,
    pub bound: f64,
    pub bound_clipped: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alt_bound: Option<f64>,
    pub gap: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord<T> {
    pub trial: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl<T> TrialRecord<T> {
    fn from_result(trial: usize, seed: u64, r: Result<T>) -> Self {
        match r {
            Ok(o) => TrialRecord {
                trial,
                seed,
                outcome: Some(o),
                error: None,
            },
            Err(e) => TrialRecord {
                trial,
                seed,
                outcome: None,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainDiagnostics {
    pub alpha: f64,
    pub t: usize,
    pub stationary: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub learner: &'static str,
    pub mode: &'static str,
    pub n: usize,
    pub delta: f64,
    pub trials: Vec<TrialRecord<TrialOutcome>>,
    pub completed: usize,
    pub errors: usize,
    pub violations: usize,
    pub violation_rate: f64,
    /// Largest violation count consistent with rate `delta` at 99% confidence.
    pub allowed_violations: usize,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainDiagnostics>,
}

fn trial_seed(base: u64, trial: usize) -> u64 {
    base.wrapping_add(trial as u64)
}

fn run_trials<T: Send>(
    config: &ExperimentConfig,
    f: impl Fn(u64) -> Result<T> + Sync,
) -> Vec<TrialRecord<T>> {
    (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(config.seed, t);
            TrialRecord::from_result(t, seed, f(seed))
        })
        .collect()
}

fn gap_outcome(
    h: &Hypothesis,
    train: &[Sample],
    report: &BoundReport,
    source: RiskSource<'_>,
    config: &ExperimentConfig,
    loss: &LossSpec,
    seed: u64,
) -> Result<TrialOutcome> {
    let empirical = stats::mean(&learners::losses(h, train, loss)?);
    let risk = sampling::true_risk(h, source, loss, config.n_mc, seed)?;
    let gap = (risk.mean - empirical).abs();
    Ok(TrialOutcome {
        empirical_risk: empirical,
        true_risk: risk.mean,
        true_risk_se: risk.std_err,
        k: report.inputs.k,
        epsilon: report.inputs.epsilon,
        n_hat: report.inputs.n_hat,
        gamma: report.inputs.gamma,
        theorem: report.theorem,
        bound: report.value,
        bound_clipped: report.clipped,
        alt_bound: report.alt_value,
        gap,
        violated: gap > report.clipped + 3.0 * risk.std_err,
    })
}

fn summarize(
    config: &ExperimentConfig,
    mode: &'static str,
    trials: Vec<TrialRecord<TrialOutcome>>,
    chain: Option<ChainDiagnostics>,
) -> Result<ExperimentReport> {
    let completed = trials.iter().filter(|t| t.outcome.is_some()).count();
    let errors = trials.len() - completed;
    let violations = trials
        .iter()
        .filter(|t| t.outcome.as_ref().is_some_and(|o| o.violated))
        .count();
    let violation_rate = if completed > 0 {
        violations as f64 / completed as f64
    } else {
        0.0
    };
    let allowed_violations =
        stats::binomial_upper_quantile(completed, config.delta, VALIDATION_CONFIDENCE)?;
    Ok(ExperimentReport {
        name: config.name.clone(),
        learner: config.learner.family(),
        mode,
        n: config.n,
        delta: config.delta,
        passed: errors == 0 && violations <= allowed_violations,
        trials,
        completed,
        errors,
        violations,
        violation_rate,
        allowed_violations,
        chain,
    })
}

/// IID protocol: sample, train, certify over the gamma grid, bound, and
/// compare the gap against a Monte-Carlo true risk.
pub fn run_iid_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let plan = config.plan()?;
    let dist = config
        .distribution
        .as_ref()
        .ok_or_else(|| Error::param("an IID experiment needs a `distribution`"))?;
    let trials = run_trials(config, |seed| {
        let train = sampling::sample_iid(dist, config.n, seed)?;
        let h = train_with(&config.learner, &plan, &train, seed)?;
        let certs = plan
            .gammas
            .iter()
            .map(|(g, _)| {
                certify_with(
                    &config.learner,
                    &plan,
                    &h,
                    &train,
                    *g,
                    config.probes_per_cell,
                    seed,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let report = iid_bound(&certs, config.n, config.delta, config.loss_bound)?;
        gap_outcome(
            &h,
            &train,
            &report,
            RiskSource::Iid(dist),
            config,
            &plan.loss,
            seed,
        )
    });
    summarize(config, "iid", trials, None)
}

/// Minorization constants and stationary law of the configured chain, after
/// checking `n > 2T/alpha`.
pub fn chain_diagnostics(
    config: &ExperimentConfig,
) -> Result<(MarkovChain, DoeblinParams, Vec<f64>)> {
    let spec = config
        .chain
        .as_ref()
        .ok_or_else(|| Error::param("a Markov experiment needs a `chain`"))?;
    let chain = spec.chain()?;
    let params = sampling::doeblin_params(chain.transition(), spec.t_max)?;
    if config.n as f64 <= 2.0 * params.t as f64 / params.alpha {
        return Err(Error::PreconditionViolated(format!(
            "n = {} must exceed 2T/alpha = {}",
            config.n,
            2.0 * params.t as f64 / params.alpha
        )));
    }
    let pi = sampling::stationary_distribution(chain.transition(), 1e-13)?;
    Ok((chain, params, pi))
}

/// Doeblin-chain protocol: training data is a trajectory, the true risk is
/// taken under the stationary law.
pub fn run_markov_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let plan = config.plan()?;
    let (chain, params, pi) = chain_diagnostics(config)?;
    if plan.gammas.len() != 1 {
        return Err(Error::param("a Markov experiment takes exactly one gamma"));
    }
    let spec = config.chain.as_ref().expect("checked");
    let source = RiskSource::Stationary {
        chain: &chain,
        stationary: &pi,
    };
    let trials = run_trials(config, |seed| {
        let train = sampling::sample_chain(&chain, config.n, spec.initial_state, seed)?;
        let h = train_with(&config.learner, &plan, &train, seed)?;
        let cert = certify_with(
            &config.learner,
            &plan,
            &h,
            &train,
            plan.gammas[0].0,
            config.probes_per_cell,
            seed,
        )?;
        let report = bounds::markov_gap_bound(
            &cert,
            config.n,
            config.delta,
            config.loss_bound,
            params.alpha,
            params.t,
        )?;
        gap_outcome(&h, &train, &report, source, config, &plan.loss, seed)
    });
    summarize(
        config,
        "markov",
        trials,
        Some(ChainDiagnostics {
            alpha: params.alpha,
            t: params.t,
            stationary: pi,
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileOutcome {
    pub k: usize,
    pub epsilon: f64,
    pub n_hat: usize,
    pub sandwich: Sandwich,
    pub population_quantile: f64,
    pub population_truncated: f64,
    pub covered_quantile: bool,
    pub covered_truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileReport {
    pub name: String,
    pub learner: &'static str,
    pub beta: f64,
    pub delta: f64,
    pub gamma: f64,
    pub k: usize,
    pub trials: Vec<TrialRecord<QuantileOutcome>>,
    pub completed: usize,
    pub errors: usize,
    pub coverage_quantile: f64,
    pub coverage_truncated: f64,
    /// Fraction of trials where both statistics are inside their sandwich.
    pub coverage: f64,
    pub misses: usize,
    pub allowed_misses: usize,
    pub passed: bool,
}

/// Sandwich coverage of the population quantile and truncated mean. Uses the
/// smallest gamma of the grid whose window `beta -/+ lambda_0(K)` fits in
/// `[0, 1]`; the choice depends on `K` only.
pub fn run_quantile_experiment(config: &ExperimentConfig, beta: f64) -> Result<QuantileReport> {
    let plan = config.plan()?;
    let dist = config
        .distribution
        .as_ref()
        .ok_or_else(|| Error::param("a quantile experiment needs a `distribution`"))?;
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::param(format!("beta must lie in (0, 1], got {beta}")));
    }
    let room = beta.min(1.0 - beta);
    let mut chosen = None;
    for &(g, k) in &plan.gammas {
        if stats::bhc_lambda(k, config.n, config.delta)? <= room {
            chosen = Some((g, k));
            break;
        }
    }
    let (gamma, k) = chosen.ok_or_else(|| {
        Error::PreconditionViolated(format!(
            "no gamma in the grid keeps the window around beta = {beta} inside [0, 1] at n = {}",
            config.n
        ))
    })?;
    let trials = run_trials(config, |seed| {
        let train = sampling::sample_iid(dist, config.n, seed)?;
        let h = train_with(&config.learner, &plan, &train, seed)?;
        let cert = certify_with(
            &config.learner,
            &plan,
            &h,
            &train,
            gamma,
            config.probes_per_cell,
            seed,
        )?;
        let losses = learners::losses(&h, &train, &plan.loss)?;
        let report = bounds::quantile_sandwich(&cert, &losses, beta, config.delta)?;
        let sandwich = report.sandwich.expect("sandwich report");
        let population =
            sampling::population_losses(&h, RiskSource::Iid(dist), &plan.loss, config.n_mc, seed)?;
        let q = stats::beta_quantile(&population, beta)?;
        let t = stats::beta_truncated_mean(&population, beta)?;
        Ok(QuantileOutcome {
            k: cert.k,
            epsilon: cert.epsilon,
            n_hat: report.inputs.n_hat,
            covered_quantile: sandwich.quantile_lower <= q && q <= sandwich.quantile_upper,
            covered_truncated: sandwich.truncated_lower <= t && t <= sandwich.truncated_upper,
            sandwich,
            population_quantile: q,
            population_truncated: t,
        })
    });
    let done: Vec<&QuantileOutcome> = trials.iter().filter_map(|t| t.outcome.as_ref()).collect();
    let completed = done.len();
    let frac = |f: &dyn Fn(&QuantileOutcome) -> bool| {
        if completed == 0 {
            0.0
        } else {
            done.iter().filter(|o| f(o)).count() as f64 / completed as f64
        }
    };
    let misses = done
        .iter()
        .filter(|o| !(o.covered_quantile && o.covered_truncated))
        .count();
    let allowed_misses =
        stats::binomial_upper_quantile(completed, config.delta, VALIDATION_CONFIDENCE)?;
    let errors = trials.len() - completed;
    Ok(QuantileReport {
        name: config.name.clone(),
        learner: config.learner.family(),
        beta,
        delta: config.delta,
        gamma,
        k,
        coverage_quantile: frac(&|o| o.covered_quantile),
        coverage_truncated: frac(&|o| o.covered_truncated),
        coverage: frac(&|o| o.covered_quantile && o.covered_truncated),
        misses,
        allowed_misses,
        passed: errors == 0 && misses <= allowed_misses,
        trials,
        completed,
        errors,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SoundnessRow {
    pub gamma: f64,
    pub k: usize,
    pub closed_form: f64,
    pub empirical: f64,
    pub passed: bool,
}

/// Outcome of checking a loss Lipschitz inequality on random same-cell pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCheck {
    pub inequality: &'static str,
    pub pairs: usize,
    /// Largest `|l(z1) - l(z2)| - bound(z1, z2)` observed.
    pub max_excess: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyOutcome {
    pub rows: Vec<SoundnessRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs: Option<PairCheck>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub name: String,
    pub learner: &'static str,
    /// Certificates were deliberately weakened to `eps / 2`.
    pub self_test: bool,
    pub trials: Vec<TrialRecord<VerifyOutcome>>,
    pub errors: usize,
    pub failures: usize,
    pub max_empirical_ratio: f64,
    pub passed: bool,
}

/// Probe-checks every closed-form certificate over the gamma grid on
/// `trials` datasets, plus the learner's loss Lipschitz inequality on random
/// same-cell pairs. With `self_test`, each `eps` is halved first, which a
/// working estimator should flag.
pub fn verify_certificates(config: &ExperimentConfig, self_test: bool) -> Result<VerifyReport> {
    let plan = config.plan()?;
    let trials = run_trials(config, |seed| {
        let train = generate_samples(config, seed)?;
        let h = train_with(&config.learner, &plan, &train, seed)?;
        let mut rows = Vec::with_capacity(plan.gammas.len());
        let mut smallest: Option<RobustnessCertificate> = None;
        for &(g, _) in &plan.gammas {
            let cert = certify_with(
                &config.learner,
                &plan,
                &h,
                &train,
                g,
                config.probes_per_cell,
                seed,
            )?;
            let checked = if self_test {
                cert.with_epsilon(cert.epsilon / 2.0)
            } else {
                cert.clone()
            };
            let empirical = certificates::empirical_epsilon(
                &h,
                &checked,
                &train,
                config.probes_per_cell,
                &plan.loss,
                seed,
            )?;
            rows.push(SoundnessRow {
                gamma: g,
                k: cert.k,
                closed_form: checked.epsilon,
                empirical,
                passed: empirical <= checked.epsilon + SOUNDNESS_SLACK,
            });
            smallest.get_or_insert(cert);
        }
        let pairs = match smallest {
            Some(cert) if config.lipschitz_pairs > 0 => pair_check(
                &config.learner,
                &h,
                &train,
                &cert,
                config.lipschitz_pairs,
                seed,
            )?,
            _ => None,
        };
        let passed = rows.iter().all(|r| r.passed) && pairs.as_ref().is_none_or(|p| p.passed);
        Ok(VerifyOutcome {
            rows,
            pairs,
            passed,
        })
    });
    let errors = trials.iter().filter(|t| t.error.is_some()).count();
    let failures = trials
        .iter()
        .filter(|t| t.outcome.as_ref().is_some_and(|o| !o.passed))
        .count();
    let max_empirical_ratio = trials
        .iter()
        .filter_map(|t| t.outcome.as_ref())
        .flat_map(|o| &o.rows)
        .filter(|r| r.closed_form > 0.0)
        .map(|r| r.empirical / r.closed_form)
        .fold(0.0, f64::max);
    Ok(VerifyReport {
        name: config.name.clone(),
        learner: config.learner.family(),
        self_test,
        passed: errors == 0 && failures == 0,
        trials,
        errors,
        failures,
        max_empirical_ratio,
    })
}

/// Draws `pairs` same-cell pairs of `cert`'s partition and checks the
/// learner's loss inequality on each. `None` for learners without one.
pub fn pair_check(
    learner: &LearnerSpec,
    h: &Hypothesis,
    train: &[Sample],
    cert: &RobustnessCertificate,
    pairs: usize,
    seed: u64,
) -> Result<Option<PairCheck>> {
    let sup = |a: &[f64], b: &[f64]| Metric::Sup.distance(a, b);
    let l2 = |a: &[f64], b: &[f64]| Metric::Euclidean.distance(a, b);
    type Bound<'a> = Box<dyn Fn(&Sample, &Sample) -> f64 + 'a>;
    let (inequality, bound): (&'static str, Bound) = match (learner, h) {
        (LearnerSpec::Lasso { c }, Hypothesis::Lasso(_)) => {
            let y_mean_sq = train.iter().map(|s| s.y * s.y).sum::<f64>() / train.len() as f64;
            let lip = y_mean_sq / c + 1.0;
            (
                "(Y(s)/c + 1) ||z1 - z2||_inf",
                Box::new(move |a, b| lip * sup(&a.joint(), &b.joint())),
            )
        }
        (LearnerSpec::Network { alpha, beta, .. }, Hypothesis::Network(net)) => {
            let lip = 1.0 + (alpha * beta).powi(net.depth() as i32);
            (
                "(1 + alpha^d beta^d) ||z1 - z2||_inf",
                Box::new(move |a, b| lip * sup(&a.joint(), &b.joint())),
            )
        }
        (LearnerSpec::Svm { margin: false, .. }, Hypothesis::Svm(m)) => {
            let (kernel, c) = (m.kernel, m.c);
            (
                "sqrt(f_H(||x1 - x2||_2) / c)",
                Box::new(move |a, b| (kernel.spread(l2(&a.x, &b.x)) / c).sqrt()),
            )
        }
        (LearnerSpec::Pca { d, .. }, Hypothesis::Pca(_)) => {
            let b = cert
                .constants
                .get("b")
                .copied()
                .ok_or_else(|| Error::param("PCA certificate lacks B"))?;
            let lip = 2.0 * *d as f64 * b;
            (
                "2 d B ||z1 - z2||_2",
                Box::new(move |a, b| lip * l2(&a.x, &b.x)),
            )
        }
        (LearnerSpec::NormConstrainedRegression { c, .. }, Hypothesis::NormConstrained(_)) => {
            let c = *c;
            (
                "|y1 - y2| + c ||x1 - x2||_2",
                Box::new(move |a, b| (a.y - b.y).abs() + c * l2(&a.x, &b.x)),
            )
        }
        (LearnerSpec::MajorityVote { .. }, Hypothesis::MajorityVote(_)) => {
            ("0 within a cell", Box::new(|_, _| 0.0))
        }
        _ => return Ok(None),
    };
    let kind = learner.loss_kind();
    let mut rng = rng::stream(seed, streams::PAIRS);
    let k = cert.partition.len();
    let mut drawn = 0;
    let mut max_excess = f64::NEG_INFINITY;
    let mut attempts = 0;
    while drawn < pairs && attempts < pairs * 20 {
        attempts += 1;
        let cell = rng.random_range(0..k);
        let (Some(a), Some(b)) = (
            cert.partition.sample_cell(cell, &mut rng)?,
            cert.partition.sample_cell(cell, &mut rng)?,
        ) else {
            continue;
        };
        let (a, b) = (cert.layout.sample(a), cert.layout.sample(b));
        let diff = (learners::raw_loss(h, &a, kind)? - learners::raw_loss(h, &b, kind)?).abs();
        max_excess = max_excess.max(diff - bound(&a, &b));
        drawn += 1;
    }
    if drawn == 0 {
        return Err(Error::EstimatorUnavailable(
            "no same-cell pair could be drawn".into(),
        ));
    }
    Ok(Some(PairCheck {
        inequality,
        pairs: drawn,
        max_excess,
        passed: max_excess <= SOUNDNESS_SLACK,
    }))
}
