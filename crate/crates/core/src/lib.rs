//! Near-optimal early stopping and restart policies for multi-fidelity
//! black-box optimization.
//!
//! Given a collection of observation curves (e.g. validation accuracy per
//! training epoch for randomly sampled hyperparameters), the crate computes
//! the stopping rule whose restart policy minimizes expected time to reach a
//! target, and benchmarks it against random search, fixed restart
//! thresholds, the Luby schedule, the above-median rule, Successive Halving
//! and Hyperband.
//!
//! The pipeline is: [`curve`] data → [`discretize`] into quantile tokens →
//! [`policy`] trie and bisection search → [`simulator`] /
//! [`evaluation`] for assessment.

pub mod baselines;
pub mod catalog;
pub mod curve;
pub mod discretize;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod num;
pub mod policy;
pub mod rules;
pub mod simulator;
pub mod synthetic;

pub use curve::{population_medians, success_time, Curve, CurveDataset, SuccessSpec};
pub use discretize::{fit_discretizer, DiscretizedRun, QuantileDiscretizer, Token};
pub use error::{Error, Result};
pub use policy::{
    brute_force_optimal, build_trie, delta, evaluate_rule, find_stopping_rule,
    fixed_threshold_rule, FixedThreshold, PolicyStats, StoppingTree, UnseenAction, WeightedTrie,
};
pub use rules::{curve_rule_stats, CurveRule, FittedRule};
pub use simulator::{simulate_time_to_success, RunSwitchingPolicy, SimResult};
