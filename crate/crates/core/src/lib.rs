//! Robustness certificates and the generalization bounds they imply.
//!
//! A learning algorithm is `(K, eps)`-robust when the sample space splits into
//! `K` disjoint cells such that a test point sharing a cell with a training
//! point has loss within `eps` of that training point. This crate
//!
//! * builds the partitions ([`cover`]),
//! * trains the learners whose robustness is known in closed form ([`learners`]),
//! * issues closed-form and probe-estimated certificates ([`certificates`]),
//! * turns certificates into generalization bounds ([`bounds`], [`stats`]),
//! * samples IID data and Doeblin Markov chains ([`sampling`]),
//! * and checks every bound by Monte-Carlo trials ([`harness`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod certificates;
pub mod cover;
pub mod error;
pub mod harness;
pub mod learners;
pub mod rng;
pub mod sampling;
pub mod stats;

pub use bounds::{BoundKind, BoundReport};
pub use certificates::{Provenance, RobustnessCertificate, SampleLayout};
pub use cover::{BoxSpace, Metric, MetricSpace, OutputSpace, Partition, Space};
pub use error::{Error, Result};
pub use learners::{Hypothesis, LossKind, LossSpec, Sample};
pub use sampling::{DistributionSpec, MarkovChain};
