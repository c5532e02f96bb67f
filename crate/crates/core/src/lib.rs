//! Exact, population-level simulation of dynamic benchmarking over finite domains.
//!
//! Distributions are probability vectors over `0..d`, hypotheses are ±1 label
//! vectors, and the risk-minimizer oracle is a pluggable ε-approximate
//! minimizer. On top of that sit the path and hierarchical benchmark engines,
//! the explicit lower-bound sequences, label-noise dynamics, gradient-style
//! updates and the rollout harness.

pub mod domain;
pub mod experiments;
pub mod error;
pub mod gradient;
pub mod hier;
pub mod measures;
pub mod minimizer;
pub mod noise;
pub mod path;
pub mod witness;

pub use domain::{
    mix, mix_uniform, Distribution, FiniteDomain, Hypothesis, HypothesisClass, Instance, PointSet,
};
pub use error::{Error, Result};
pub use measures::{error_set, hdh_distance, joint_error_mass, majority, majority_with, risk_01, EnsembleVote};
pub use minimizer::{
    eps_feasible_set, min_risk, verify_eps_consistency, ConsistencyReport, Minimizer, MinimizerMode,
    MinimizerSpec,
};
