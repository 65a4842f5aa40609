//! IID data generators, finite Doeblin chains, and Monte-Carlo risk estimates.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cover::{BoxSpace, OutputSpace};
use crate::error::{Error, Result};
use crate::learners::{self, dot, Hypothesis, LossSpec, Network, Sample};
use crate::rng::{self, streams};
use crate::stats;

/// Per-coordinate input law on the box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Marginal {
    #[default]
    Uniform,
    /// Gaussian centered on the box midpoint with standard deviation
    /// `std * (hi - lo)`, truncated to the box by rejection.
    TruncatedGaussian { std: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LabelModel {
    /// No label; `y = 0`.
    None,
    /// `y = clip(w.x + bias + U(-noise, noise), range)`.
    Linear {
        weights: Vec<f64>,
        #[serde(default)]
        bias: f64,
        #[serde(default)]
        noise: f64,
        range: [f64; 2],
    },
    /// `y = sign(w.x + bias)` (`+1` at zero), flipped with probability `flip`.
    Threshold {
        weights: Vec<f64>,
        #[serde(default)]
        bias: f64,
        #[serde(default)]
        flip: f64,
    },
    /// `y = clip(network(x) + U(-noise, noise), range)`.
    Network {
        network: Network,
        #[serde(default)]
        noise: f64,
        range: [f64; 2],
    },
}

/// An input law on a box plus a label model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSpec {
    pub input: BoxSpace,
    #[serde(default)]
    pub marginal: Marginal,
    pub labels: LabelModel,
}

impl DistributionSpec {
    pub fn new(input: BoxSpace, marginal: Marginal, labels: LabelModel) -> Result<Self> {
        let spec = DistributionSpec {
            input,
            marginal,
            labels,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.input.dim();
        if let Marginal::TruncatedGaussian { std } = self.marginal {
            if !(std > 0.0 && std.is_finite()) {
                return Err(Error::param(format!(
                    "truncated gaussian std must be positive, got {std}"
                )));
            }
        }
        let check_range = |r: &[f64; 2]| {
            if r[0] < r[1] && r[0].is_finite() && r[1].is_finite() {
                Ok(())
            } else {
                Err(Error::param(format!(
                    "label range [{}, {}] is not a bounded interval",
                    r[0], r[1]
                )))
            }
        };
        let check_noise = |noise: f64| {
            if noise >= 0.0 && noise.is_finite() {
                Ok(())
            } else {
                Err(Error::param(format!(
                    "label noise must be finite and >= 0, got {noise}"
                )))
            }
        };
        match &self.labels {
            LabelModel::None => {}
            LabelModel::Linear {
                weights,
                noise,
                range,
                ..
            } => {
                if weights.len() != m {
                    return Err(Error::param(format!(
                        "linear labels need {m} weights, got {}",
                        weights.len()
                    )));
                }
                check_noise(*noise)?;
                check_range(range)?;
            }
            LabelModel::Threshold { weights, flip, .. } => {
                if weights.len() != m {
                    return Err(Error::param(format!(
                        "threshold labels need {m} weights, got {}",
                        weights.len()
                    )));
                }
                if !(0.0..=1.0).contains(flip) {
                    return Err(Error::param(format!(
                        "flip probability must lie in [0, 1], got {flip}"
                    )));
                }
            }
            LabelModel::Network {
                network,
                noise,
                range,
            } => {
                learners::nn_forward(network, &vec![0.0; m])?;
                check_noise(*noise)?;
                check_range(range)?;
            }
        }
        Ok(())
    }

    /// Output space the labels live in; `None` for unlabeled data.
    pub fn output(&self) -> Option<OutputSpace> {
        match &self.labels {
            LabelModel::None => None,
            LabelModel::Threshold { .. } => Some(OutputSpace::Binary),
            LabelModel::Linear { range, .. } | LabelModel::Network { range, .. } => {
                Some(OutputSpace::Interval {
                    lo: range[0],
                    hi: range[1],
                })
            }
        }
    }

    fn draw_input<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self.marginal {
            Marginal::Uniform => self.input.sample(rng),
            Marginal::TruncatedGaussian { std } => self
                .input
                .lo()
                .iter()
                .zip(self.input.hi())
                .map(|(&lo, &hi)| {
                    let normal =
                        Normal::new(0.5 * (lo + hi), std * (hi - lo)).expect("validated std");
                    loop {
                        let v: f64 = normal.sample(rng);
                        if (lo..=hi).contains(&v) {
                            break v;
                        }
                    }
                })
                .collect(),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Sample {
        let x = self.draw_input(rng);
        let jitter = |noise: f64, rng: &mut R| {
            if noise > 0.0 {
                rng.random_range(-noise..=noise)
            } else {
                0.0
            }
        };
        let y = match &self.labels {
            LabelModel::None => 0.0,
            LabelModel::Linear {
                weights,
                bias,
                noise,
                range,
            } => (dot(weights, &x) + bias + jitter(*noise, rng)).clamp(range[0], range[1]),
            LabelModel::Threshold {
                weights,
                bias,
                flip,
            } => {
                let y = if dot(weights, &x) + bias >= 0.0 {
                    1.0
                } else {
                    -1.0
                };
                if *flip > 0.0 && rng.random_bool(*flip) {
                    -y
                } else {
                    y
                }
            }
            LabelModel::Network {
                network,
                noise,
                range,
            } => {
                let out = learners::nn_forward(network, &x).expect("validated network");
                (out + jitter(*noise, rng)).clamp(range[0], range[1])
            }
        };
        Sample::new(x, y)
    }
}

/// `n` independent draws from the training stream of `seed`.
pub fn sample_iid(dist: &DistributionSpec, n: usize, seed: u64) -> Result<Vec<Sample>> {
    let mut rng = rng::stream(seed, streams::TRAIN);
    sample_iid_with(dist, n, &mut rng)
}

pub fn sample_iid_with<R: Rng + ?Sized>(
    dist: &DistributionSpec,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Sample>> {
    if n == 0 {
        return Err(Error::param("sample count n must be at least 1"));
    }
    Ok((0..n).map(|_| dist.draw(rng)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmissionLabel {
    Fixed {
        y: f64,
    },
    /// `+1` with probability `p`, else `-1`.
    Bernoulli {
        p: f64,
    },
}

/// What a chain state emits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Emission {
    Point {
        x: Vec<f64>,
        y: f64,
    },
    Uniform {
        region: BoxSpace,
        label: EmissionLabel,
    },
}

impl Emission {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Sample {
        match self {
            Emission::Point { x, y } => Sample::new(x.clone(), *y),
            Emission::Uniform { region, label } => {
                let x = region.sample(rng);
                let y = match *label {
                    EmissionLabel::Fixed { y } => y,
                    EmissionLabel::Bernoulli { p } => {
                        if rng.random_bool(p) {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                };
                Sample::new(x, y)
            }
        }
    }

    fn dim(&self) -> usize {
        match self {
            Emission::Point { x, .. } => x.len(),
            Emission::Uniform { region, .. } => region.dim(),
        }
    }
}

/// Finite-state Markov chain with per-state emissions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChain")]
pub struct MarkovChain {
    transition: Vec<Vec<f64>>,
    emissions: Vec<Emission>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChain {
    transition: Vec<Vec<f64>>,
    emissions: Vec<Emission>,
}

impl TryFrom<RawChain> for MarkovChain {
    type Error = Error;
    fn try_from(raw: RawChain) -> Result<Self> {
        MarkovChain::new(raw.transition, raw.emissions)
    }
}

/// Checks that `p` is square and row-stochastic to `1e-12`.
pub fn validate_transition(p: &[Vec<f64>]) -> Result<()> {
    let m = p.len();
    if m == 0 {
        return Err(Error::EmptyInput("transition matrix"));
    }
    for (i, row) in p.iter().enumerate() {
        if row.len() != m {
            return Err(Error::param(format!(
                "transition row {i} has {} entries, expected {m}",
                row.len()
            )));
        }
        if row.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::param(format!(
                "transition row {i} has a negative or non-finite entry"
            )));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::param(format!(
                "transition row {i} sums to {sum}, not 1"
            )));
        }
    }
    Ok(())
}

impl MarkovChain {
    pub fn new(transition: Vec<Vec<f64>>, emissions: Vec<Emission>) -> Result<Self> {
        validate_transition(&transition)?;
        if emissions.len() != transition.len() {
            return Err(Error::param(format!(
                "{} emissions for {} states",
                emissions.len(),
                transition.len()
            )));
        }
        if emissions.iter().any(|e| e.dim() != emissions[0].dim()) {
            return Err(Error::param("emissions differ in input dimension"));
        }
        for e in &emissions {
            if let Emission::Uniform {
                label: EmissionLabel::Bernoulli { p },
                ..
            } = e
            {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::param(format!(
                        "emission probability {p} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(MarkovChain {
            transition,
            emissions,
        })
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn emissions(&self) -> &[Emission] {
        &self.emissions
    }

    pub fn states(&self) -> usize {
        self.transition.len()
    }

    fn step<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        categorical(&self.transition[state], rng)
    }
}

fn categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the total: take the last state with mass
    probs
        .iter()
        .rposition(|p| *p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// Minorization constants with respect to the uniform measure on states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoeblinParams {
    pub alpha: f64,
    pub t: usize,
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = b[0].len();
    a.iter()
        .map(|row| {
            (0..m)
                .map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum())
                .collect()
        })
        .collect()
}

/// Smallest `T <= t_max` with every entry of `P^T` positive, and
/// `alpha = m * min_ij (P^T)_ij`.
pub fn doeblin_params(p: &[Vec<f64>], t_max: usize) -> Result<DoeblinParams> {
    validate_transition(p)?;
    let m = p.len() as f64;
    let mut power = p.to_vec();
    for t in 1..=t_max {
        if t > 1 {
            power = mat_mul(&power, p);
        }
        let min = power.iter().flatten().fold(f64::INFINITY, |a, b| a.min(*b));
        if min > 0.0 {
            return Ok(DoeblinParams {
                alpha: (m * min).min(1.0),
                t,
            });
        }
    }
    Err(Error::NotDoeblin { t_max })
}

/// States `x_1, ..., x_n` of the chain started from `x_1 = initial_state`.
pub fn sample_states<R: Rng + ?Sized>(
    chain: &MarkovChain,
    n: usize,
    initial_state: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::param("trajectory length n must be at least 1"));
    }
    if initial_state >= chain.states() {
        return Err(Error::param(format!(
            "initial state {initial_state} out of range for {} states",
            chain.states()
        )));
    }
    let mut states = Vec::with_capacity(n);
    let mut s = initial_state;
    states.push(s);
    for _ in 1..n {
        s = chain.step(s, rng);
        states.push(s);
    }
    Ok(states)
}

/// First `n` emissions of the chain, reproducible from `seed`.
pub fn sample_chain(
    chain: &MarkovChain,
    n: usize,
    initial_state: usize,
    seed: u64,
) -> Result<Vec<Sample>> {
    let mut rng = rng::stream(seed, streams::TRAIN);
    let states = sample_states(chain, n, initial_state, &mut rng)?;
    Ok(states
        .into_iter()
        .map(|s| chain.emissions[s].draw(&mut rng))
        .collect())
}

/// Invariant distribution by power iteration from the uniform vector, until
/// `||pi P - pi||_1 <= tol`.
pub fn stationary_distribution(p: &[Vec<f64>], tol: f64) -> Result<Vec<f64>> {
    validate_transition(p)?;
    if !(tol > 0.0) {
        return Err(Error::param(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    const MAX_ITER: usize = 1_000_000;
    let m = p.len();
    let mut pi = vec![1.0 / m as f64; m];
    for _ in 0..MAX_ITER {
        let mut next = vec![0.0; m];
        for (i, row) in p.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                next[j] += pi[i] * v;
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if diff <= tol {
            return Ok(pi);
        }
    }
    Err(Error::Numerical(format!(
        "power iteration did not reach tolerance {tol} in {MAX_ITER} steps"
    )))
}

/// Where test points come from when estimating the true risk.
#[derive(Debug, Clone, Copy)]
pub enum RiskSource<'a> {
    Iid(&'a DistributionSpec),
    /// Chain states drawn from `stationary`, then emitted.
    Stationary {
        chain: &'a MarkovChain,
        stationary: &'a [f64],
    },
}

impl RiskSource<'_> {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Sample {
        match self {
            RiskSource::Iid(d) => d.draw(rng),
            RiskSource::Stationary { chain, stationary } => {
                let s = categorical(stationary, rng);
                chain.emissions[s].draw(rng)
            }
        }
    }
}

pub const MIN_MONTE_CARLO: usize = 10_000;

/// Losses of `h` on `n_mc` fresh draws from the test stream of `seed`.
pub fn population_losses(
    h: &Hypothesis,
    source: RiskSource<'_>,
    loss: &LossSpec,
    n_mc: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_mc < MIN_MONTE_CARLO {
        return Err(Error::param(format!(
            "n_mc must be at least {MIN_MONTE_CARLO}, got {n_mc}"
        )));
    }
    let mut rng = rng::stream(seed, streams::TEST);
    (0..n_mc)
        .map(|_| learners::loss(h, &source.draw(&mut rng), loss))
        .collect()
}

/// Monte-Carlo estimate of an expected loss and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskEstimate {
    pub mean: f64,
    pub std_err: f64,
}

pub fn true_risk(
    h: &Hypothesis,
    source: RiskSource<'_>,
    loss: &LossSpec,
    n_mc: usize,
    seed: u64,
) -> Result<RiskEstimate> {
    let losses = population_losses(h, source, loss, n_mc, seed)?;
    let (mean, std_err) = stats::mean_and_std_err(&losses);
    Ok(RiskEstimate { mean, std_err })
}

/// Tail bound for the average of a `[0, c]`-valued function along a Doeblin
/// chain: `exp(-alpha^2 (n eps - 2cT/alpha)^2 / (2 n c^2 T^2))`, valid for
/// `n > 2cT/(eps alpha)`.
pub fn doeblin_tail(params: DoeblinParams, n: usize, eps: f64, c: f64) -> Result<f64> {
    let (alpha, t, nf) = (params.alpha, params.t as f64, n as f64);
    if !(eps > 0.0 && c > 0.0) {
        return Err(Error::param(
            "deviation eps and function bound c must be positive",
        ));
    }
    let threshold = 2.0 * c * t / (eps * alpha);
    if nf <= threshold {
        return Err(Error::PreconditionViolated(format!(
            "n = {n} must exceed 2cT/(eps alpha) = {threshold}"
        )));
    }
    let gap = nf * eps - 2.0 * c * t / alpha;
    Ok((-(alpha * alpha * gap * gap) / (2.0 * nf * c * c * t * t)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{LassoModel, LossKind};
    use nalgebra::{DMatrix, DVector};

    fn two_state() -> Vec<Vec<f64>> {
        vec![vec![0.9, 0.1], vec![0.2, 0.8]]
    }

    fn point_chain(p: Vec<Vec<f64>>) -> MarkovChain {
        let emissions = (0..p.len())
            .map(|i| Emission::Point {
                x: vec![i as f64],
                y: 0.0,
            })
            .collect();
        MarkovChain::new(p, emissions).unwrap()
    }

    /// Solves `pi (P - I) = 0`, `sum pi = 1` directly.
    fn linear_solve_stationary(p: &[Vec<f64>]) -> Vec<f64> {
        let m = p.len();
        let mut a = DMatrix::from_fn(m, m, |i, j| p[j][i] - if i == j { 1.0 } else { 0.0 });
        for j in 0..m {
            a[(m - 1, j)] = 1.0;
        }
        let mut b = DVector::zeros(m);
        b[m - 1] = 1.0;
        a.lu().solve(&b).unwrap().iter().copied().collect()
    }

    #[test]
    fn iid_sampling() {
        let dist = DistributionSpec::new(
            BoxSpace::cube(1, 0.0, 1.0).unwrap(),
            Marginal::Uniform,
            LabelModel::None,
        )
        .unwrap();
        assert_eq!(
            sample_iid(&dist, 50, 3).unwrap(),
            sample_iid(&dist, 50, 3).unwrap()
        );
        let big = sample_iid(&dist, 100_000, 4).unwrap();
        let mean = big.iter().map(|s| s.x[0]).sum::<f64>() / big.len() as f64;
        assert!((mean - 0.5).abs() < 0.01);
        assert!(sample_iid(&dist, 0, 3).is_err());

        let gauss = DistributionSpec::new(
            BoxSpace::cube(2, -1.0, 1.0).unwrap(),
            Marginal::TruncatedGaussian { std: 0.3 },
            LabelModel::Linear {
                weights: vec![1.0, 1.0],
                bias: 0.0,
                noise: 0.5,
                range: [-1.0, 1.0],
            },
        )
        .unwrap();
        for s in sample_iid(&gauss, 2000, 5).unwrap() {
            assert!(gauss.input.contains(&s.x) && (-1.0..=1.0).contains(&s.y));
        }
    }

    #[test]
    fn doeblin_examples() {
        let d = doeblin_params(&two_state(), 10).unwrap();
        assert_eq!(d.t, 1);
        assert!((d.alpha - 0.2).abs() < 1e-15);
        for (i, row) in two_state().iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!(*v >= d.alpha * 0.5 - 1e-15, "({i},{j})");
            }
        }
        assert!(matches!(
            doeblin_params(&[vec![1.0, 0.0], vec![0.0, 1.0]], 50),
            Err(Error::NotDoeblin { t_max: 50 })
        ));
        let q = vec![0.2, 0.5, 0.3];
        let d = doeblin_params(&vec![q.clone(); 3], 5).unwrap();
        assert_eq!(d.t, 1);
        assert!((d.alpha - 0.6).abs() < 1e-15);
        // periodic cycle never minorizes
        let cycle = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(doeblin_params(&cycle, 20).is_err());
        // needs two steps
        let lazy = vec![vec![0.0, 1.0], vec![0.5, 0.5]];
        assert_eq!(doeblin_params(&lazy, 5).unwrap().t, 2);
    }

    #[test]
    fn stationary_examples() {
        let pi = stationary_distribution(&two_state(), 1e-14).unwrap();
        let oracle = linear_solve_stationary(&two_state());
        assert!((oracle[0] - 2.0 / 3.0).abs() < 1e-12);
        for (a, b) in pi.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9);
        }
        let ds = vec![
            vec![0.5, 0.3, 0.2],
            vec![0.2, 0.5, 0.3],
            vec![0.3, 0.2, 0.5],
        ];
        for v in stationary_distribution(&ds, 1e-14).unwrap() {
            assert!((v - 1.0 / 3.0).abs() < 1e-9);
        }
        let q = vec![0.2, 0.5, 0.3];
        let pi = stationary_distribution(&vec![q.clone(); 3], 1e-14).unwrap();
        for (a, b) in pi.iter().zip(&q) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn chain_frequencies_approach_stationary() {
        let chain = point_chain(two_state());
        let traj = sample_chain(&chain, 200_000, 0, 7).unwrap();
        assert_eq!(traj, sample_chain(&chain, 200_000, 0, 7).unwrap());
        let freq0 = traj.iter().filter(|s| s.x[0] == 0.0).count() as f64 / traj.len() as f64;
        assert!((freq0 - 2.0 / 3.0).abs() < 0.02);
        assert!(sample_chain(&chain, 10, 5, 7).is_err());
    }

    #[test]
    fn true_risk_examples() {
        // loss |y - w x| with w = 0 and y fixed per state: state i has loss i
        let chain = MarkovChain::new(
            two_state(),
            vec![
                Emission::Point {
                    x: vec![0.0],
                    y: 0.0,
                },
                Emission::Point {
                    x: vec![1.0],
                    y: 1.0,
                },
            ],
        )
        .unwrap();
        let pi = stationary_distribution(chain.transition(), 1e-14).unwrap();
        let h = Hypothesis::Lasso(LassoModel::from_weights(vec![0.0], 1.0));
        let spec = LossSpec::new(LossKind::Absolute, 2.0).unwrap();
        let src = RiskSource::Stationary {
            chain: &chain,
            stationary: &pi,
        };
        let est = true_risk(&h, src, &spec, 40_000, 1).unwrap();
        let exact = pi[0] * 0.0 + pi[1] * 1.0;
        assert!((est.mean - exact).abs() <= 3.0 * est.std_err);
        let small = true_risk(&h, src, &spec, 10_000, 1).unwrap();
        assert!((small.std_err / est.std_err - 2.0).abs() < 0.1);

        let dist = DistributionSpec::new(
            BoxSpace::cube(1, 0.0, 1.0).unwrap(),
            Marginal::Uniform,
            LabelModel::Linear {
                weights: vec![0.0],
                bias: 0.25,
                noise: 0.0,
                range: [0.0, 1.0],
            },
        )
        .unwrap();
        let est = true_risk(&h, RiskSource::Iid(&dist), &spec, 10_000, 2).unwrap();
        assert_eq!((est.mean, est.std_err), (0.25, 0.0));
        assert!(true_risk(&h, RiskSource::Iid(&dist), &spec, 100, 2).is_err());
    }

    #[test]
    fn doeblin_tail_dominates_observed_frequency() {
        let chain = point_chain(two_state());
        let params = doeblin_params(chain.transition(), 5).unwrap();
        let pi0 = 2.0 / 3.0;
        let (n, eps, reps) = (1000usize, 0.06, 2000usize);
        for f_state in [0usize, 1] {
            let target = if f_state == 0 { pi0 } else { 1.0 - pi0 };
            let tail = doeblin_tail(params, n, eps, 1.0).unwrap();
            let hits = (0..reps)
                .filter(|r| {
                    let mut rng = rng::stream(*r as u64, streams::TRAIN);
                    let start = *r % 2;
                    let states = sample_states(&chain, n, start, &mut rng).unwrap();
                    let avg = states.iter().filter(|s| **s == f_state).count() as f64 / n as f64;
                    avg - target >= eps
                })
                .count();
            let freq = hits as f64 / reps as f64;
            let se = (tail * (1.0 - tail) / reps as f64).sqrt();
            assert!(freq <= tail + 3.0 * se, "freq {freq} tail {tail}");
        }
        assert!(matches!(
            doeblin_tail(params, 10, 0.1, 1.0),
            Err(Error::PreconditionViolated(_))
        ));
    }
}
