use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, streams};

use super::{input_dim, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Activation {
    Identity,
    /// `tanh(scale * t)`.
    Tanh {
        scale: f64,
    },
    /// `1 / (1 + exp(-scale * t))`.
    Logistic {
        scale: f64,
    },
    /// `clamp(slope * t, -1, 1)`.
    ClippedIdentity {
        slope: f64,
    },
}

impl Activation {
    pub fn apply(&self, t: f64) -> f64 {
        match *self {
            Activation::Identity => t,
            Activation::Tanh { scale } => (scale * t).tanh(),
            Activation::Logistic { scale } => 1.0 / (1.0 + (-scale * t).exp()),
            Activation::ClippedIdentity { slope } => (slope * t).clamp(-1.0, 1.0),
        }
    }

    fn derivative(&self, t: f64) -> f64 {
        match *self {
            Activation::Identity => 1.0,
            Activation::Tanh { scale } => scale * (1.0 - (scale * t).tanh().powi(2)),
            Activation::Logistic { scale } => {
                let s = self.apply(t);
                scale * s * (1.0 - s)
            }
            Activation::ClippedIdentity { slope } => {
                if (slope * t).abs() < 1.0 {
                    slope
                } else {
                    0.0
                }
            }
        }
    }

    /// Smallest `beta` with `|sigma(a) - sigma(b)| <= beta |a - b|`.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Activation::Identity => 1.0,
            Activation::Tanh { scale } => scale.abs(),
            Activation::Logistic { scale } => scale.abs() / 4.0,
            Activation::ClippedIdentity { slope } => slope.abs(),
        }
    }
}

/// Layered network `x^v = sigma(W^{v-1} x^{v-1})`; the last layer has one row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    /// `layers[v][i][j]` is the weight from unit `j` of layer `v` to unit `i` of layer `v + 1`.
    pub layers: Vec<Vec<Vec<f64>>>,
    pub activation: Activation,
    pub alpha: f64,
}

impl Network {
    /// Number of weight layers `d`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn max_row_l1(&self) -> f64 {
        self.layers
            .iter()
            .flatten()
            .map(|row| row.iter().map(|w| w.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    fn forward_all(&self, x: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut out = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for layer in &self.layers {
            let pre: Vec<f64> = layer.iter().map(|row| super::dot(row, &a)).collect();
            let post: Vec<f64> = pre.iter().map(|t| self.activation.apply(*t)).collect();
            out.push((pre, a));
            a = post;
        }
        out
    }
}

pub fn nn_forward(network: &Network, x: &[f64]) -> Result<f64> {
    let first = network
        .layers
        .first()
        .ok_or_else(|| Error::param("network has no layers"))?;
    if first.iter().any(|row| row.len() != x.len()) {
        return Err(Error::param(format!(
            "network expects {} inputs, got {}",
            first.first().map_or(0, Vec::len),
            x.len()
        )));
    }
    let mut a = x.to_vec();
    for layer in &network.layers {
        a = layer
            .iter()
            .map(|row| network.activation.apply(super::dot(row, &a)))
            .collect();
    }
    match a.as_slice() {
        [out] => Ok(*out),
        _ => Err(Error::param(format!(
            "network output has {} units, expected 1",
            a.len()
        ))),
    }
}

/// Euclidean projection onto `{v : ||v||_1 <= radius}` (sort-based).
pub fn l1_ball_projection(v: &[f64], radius: f64) -> Vec<f64> {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= radius {
        return v.to_vec();
    }
    if radius <= 0.0 {
        return vec![0.0; v.len()];
    }
    let mut u: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - radius) / (k + 1) as f64;
        if *uk > t {
            theta = t;
        } else {
            break;
        }
    }
    let mut out: Vec<f64> = v
        .iter()
        .map(|x| x.signum() * (x.abs() - theta).max(0.0))
        .collect();
    // guard the constraint against rounding in theta
    let got: f64 = out.iter().map(|x| x.abs()).sum();
    if got > radius {
        let s = radius / got;
        out.iter_mut().for_each(|x| *x *= s);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkOptions {
    /// Widths of the hidden layers; empty means a single weight layer.
    pub hidden: Vec<usize>,
    pub alpha: f64,
    pub beta: f64,
    pub activation: Activation,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        NetworkOptions {
            hidden: vec![4],
            alpha: 1.0,
            beta: 1.0,
            activation: Activation::Tanh { scale: 1.0 },
            iterations: 500,
            learning_rate: 0.5,
            seed: 0,
        }
    }
}

fn mean_abs_loss(net: &Network, samples: &[Sample]) -> f64 {
    samples
        .iter()
        .map(|s| (s.y - nn_forward(net, &s.x).unwrap_or(f64::NAN)).abs())
        .sum::<f64>()
        / samples.len() as f64
}

/// Full-batch subgradient descent on the mean absolute loss; every row is
/// projected onto the `l1` ball of radius `alpha` after each step. Returns the
/// best iterate.
pub fn train_network(samples: &[Sample], opts: &NetworkOptions) -> Result<Network> {
    let m = input_dim(samples)?;
    if !(opts.alpha >= 0.0 && opts.alpha.is_finite()) {
        return Err(Error::param(format!(
            "alpha must be finite and >= 0, got {}",
            opts.alpha
        )));
    }
    if !(opts.beta > 0.0 && opts.beta.is_finite()) {
        return Err(Error::param(format!(
            "beta must be positive, got {}",
            opts.beta
        )));
    }
    let lip = opts.activation.lipschitz();
    if !lip.is_finite() || lip > opts.beta * (1.0 + 1e-12) {
        return Err(Error::param(format!(
            "activation {:?} is {lip}-Lipschitz, exceeding beta = {}",
            opts.activation, opts.beta
        )));
    }
    if opts.hidden.contains(&0) {
        return Err(Error::param("hidden layers must have at least one unit"));
    }

    let mut widths = vec![m];
    widths.extend(&opts.hidden);
    widths.push(1);
    let mut rng = rng::stream(opts.seed, streams::LEARNER);
    let layers = widths
        .windows(2)
        .map(|w| {
            (0..w[1])
                .map(|_| {
                    let row: Vec<f64> = (0..w[0])
                        .map(|_| rng.random_range(-1.0..1.0) / w[0] as f64)
                        .collect();
                    l1_ball_projection(&row, opts.alpha)
                })
                .collect()
        })
        .collect();
    let mut net = Network {
        layers,
        activation: opts.activation,
        alpha: opts.alpha,
    };

    let n = samples.len() as f64;
    let mut best = net.clone();
    let mut best_obj = mean_abs_loss(&net, samples);
    for t in 1..=opts.iterations {
        let mut grads: Vec<Vec<Vec<f64>>> = net
            .layers
            .iter()
            .map(|l| l.iter().map(|row| vec![0.0; row.len()]).collect())
            .collect();
        for s in samples {
            let trace = net.forward_all(&s.x);
            let out = net.activation.apply(trace.last().expect("non-empty").0[0]);
            let r = s.y - out;
            if r == 0.0 {
                continue;
            }
            let mut upstream = vec![-r.signum() / n];
            for v in (0..net.layers.len()).rev() {
                let (pre, input) = &trace[v];
                let delta: Vec<f64> = upstream
                    .iter()
                    .zip(pre)
                    .map(|(u, p)| u * net.activation.derivative(*p))
                    .collect();
                for (i, di) in delta.iter().enumerate() {
                    grads[v][i]
                        .iter_mut()
                        .zip(input)
                        .for_each(|(g, a)| *g += di * a);
                }
                upstream = (0..input.len())
                    .map(|j| {
                        net.layers[v]
                            .iter()
                            .zip(&delta)
                            .map(|(row, d)| row[j] * d)
                            .sum()
                    })
                    .collect();
            }
        }
        let step = opts.learning_rate / (t as f64).sqrt();
        for (layer, g) in net.layers.iter_mut().zip(&grads) {
            for (row, gr) in layer.iter_mut().zip(g) {
                row.iter_mut().zip(gr).for_each(|(w, gw)| *w -= step * gw);
                *row = l1_ball_projection(row, opts.alpha);
            }
        }
        let obj = mean_abs_loss(&net, samples);
        if obj < best_obj {
            best_obj = obj;
            best = net.clone();
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_net(seed: u64, widths: &[usize], alpha: f64, activation: Activation) -> Network {
        let mut r = rng::stream(seed, 0);
        Network {
            layers: widths
                .windows(2)
                .map(|w| {
                    (0..w[1])
                        .map(|_| {
                            let row: Vec<f64> =
                                (0..w[0]).map(|_| r.random_range(-2.0..2.0)).collect();
                            l1_ball_projection(&row, alpha)
                        })
                        .collect()
                })
                .collect(),
            activation,
            alpha,
        }
    }

    #[test]
    fn zero_and_linear_networks() {
        let act = Activation::Logistic { scale: 2.0 };
        let zero = Network {
            layers: vec![vec![vec![0.0; 3]; 2], vec![vec![0.0; 2]]],
            activation: act,
            alpha: 1.0,
        };
        assert_eq!(nn_forward(&zero, &[0.3, -0.2, 0.9]).unwrap(), 0.5);
        let single = Network {
            layers: vec![vec![vec![0.7]]],
            activation: Activation::Identity,
            alpha: 1.0,
        };
        assert!((nn_forward(&single, &[0.4]).unwrap() - 0.28).abs() < 1e-15);
        assert!(nn_forward(&single, &[0.4, 0.1]).is_err());
    }

    #[test]
    fn projection_matches_threshold_oracle() {
        let mut r = rng::stream(11, 0);
        for _ in 0..200 {
            let v: Vec<f64> = (0..6).map(|_| r.random_range(-3.0..3.0)).collect();
            let radius = r.random_range(0.1..4.0);
            let p = l1_ball_projection(&v, radius);
            assert!(p.iter().map(|x| x.abs()).sum::<f64>() <= radius + 1e-12);
            let l1: f64 = v.iter().map(|x| x.abs()).sum();
            if l1 <= radius {
                assert_eq!(p, v);
                continue;
            }
            // bisection on the soft threshold as an independent oracle
            let (mut lo, mut hi) = (0.0, 3.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let s: f64 = v.iter().map(|x| (x.abs() - mid).max(0.0)).sum();
                if s > radius {
                    lo = mid
                } else {
                    hi = mid
                }
            }
            for (a, x) in p.iter().zip(&v) {
                let expected = x.signum() * (x.abs() - hi).max(0.0);
                assert!((a - expected).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn lipschitz_chain_holds() {
        let mut r = rng::stream(12, 0);
        for (seed, act) in [
            Activation::Tanh { scale: 1.5 },
            Activation::Logistic { scale: 3.0 },
            Activation::ClippedIdentity { slope: 0.8 },
        ]
        .into_iter()
        .enumerate()
        {
            let alpha = 1.3;
            let net = random_net(seed as u64, &[3, 5, 4, 1], alpha, act);
            let constant = (alpha * act.lipschitz()).powi(net.depth() as i32);
            for _ in 0..10_000 {
                let x: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
                let xh: Vec<f64> = x.iter().map(|v| v + r.random_range(-0.2..0.2)).collect();
                let dist = x
                    .iter()
                    .zip(&xh)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                let diff = (nn_forward(&net, &x).unwrap() - nn_forward(&net, &xh).unwrap()).abs();
                assert!(diff <= constant * dist + 1e-12);
            }
        }
    }

    #[test]
    fn training_respects_row_budget() {
        let mut r = rng::stream(13, 0);
        let samples: Vec<Sample> = (0..50)
            .map(|_| {
                let x: Vec<f64> = (0..2).map(|_| r.random_range(-1.0..1.0)).collect();
                Sample::new(x.clone(), (0.6 * x[0] - 0.3 * x[1]).tanh())
            })
            .collect();
        for alpha in [1e-6, 0.5, 2.0] {
            let opts = NetworkOptions {
                alpha,
                iterations: 100,
                ..NetworkOptions::default()
            };
            let net = train_network(&samples, &opts).unwrap();
            assert!(net.max_row_l1() <= alpha + 1e-9);
            if alpha < 1e-3 {
                let outs: Vec<f64> = samples
                    .iter()
                    .map(|s| nn_forward(&net, &s.x).unwrap())
                    .collect();
                assert!(outs.iter().all(|o| o.abs() < 1e-5));
            }
        }
        let bad = NetworkOptions {
            beta: 0.5,
            ..NetworkOptions::default()
        };
        assert!(matches!(
            train_network(&samples, &bad),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn single_layer_recovers_slope_sign() {
        for slope in [0.5, -0.5] {
            let samples: Vec<Sample> = (0..21)
                .map(|i| {
                    let x = -1.0 + 0.1 * i as f64;
                    Sample::new(vec![x], slope * x)
                })
                .collect();
            // least-squares slope through the origin as oracle
            let ls = samples.iter().map(|s| s.x[0] * s.y).sum::<f64>()
                / samples.iter().map(|s| s.x[0] * s.x[0]).sum::<f64>();
            let opts = NetworkOptions {
                hidden: vec![],
                activation: Activation::Identity,
                iterations: 300,
                ..NetworkOptions::default()
            };
            let net = train_network(&samples, &opts).unwrap();
            assert_eq!(net.layers[0][0][0].signum(), ls.signum());
        }
    }
}
