//! Trace simulation of run-switching policies.
//!
//! Each trial starts from an empty set of seeds. On every step the policy
//! names the seed to advance; naming the next unused index draws a fresh
//! curve uniformly (with replacement) from the dataset. The trial ends when
//! an observation meets the target, or is censored once its accumulated
//! cost reaches the cap.
//!
//! Trial `i` draws from ChaCha stream `i` under `master_seed`, so results do
//! not depend on how trials are spread across threads.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{CurveDataset, SuccessSpec};
use crate::error::{Error, Result};
use crate::num::{compensated_sum, float_or_inf};
use crate::rules::{curve_rule_stats, CurveRule};

/// Default censoring cap, in multiples of the dataset horizon.
pub const DEFAULT_CAP_MULTIPLIER: f64 = 1000.0;

#[derive(Debug, Clone, Copy)]
struct SeedState {
    curve: usize,
    observed: usize,
}

/// What a policy can see of one seed: the values observed so far.
#[derive(Debug, Clone, Copy)]
pub struct SeedView<'a> {
    pub values: &'a [f64],
    /// Per-step costs of the observed values; `None` means unit costs.
    pub costs: Option<&'a [f64]>,
    /// The seed's run has ended; it cannot be advanced further.
    pub exhausted: bool,
}

impl SeedView<'_> {
    pub fn observed(&self) -> usize {
        self.values.len()
    }

    pub fn last_value(&self) -> Option<f64> {
        self.values.last().copied()
    }

    pub fn cost_so_far(&self) -> f64 {
        match self.costs {
            Some(c) => c.iter().sum(),
            None => self.values.len() as f64,
        }
    }
}

/// The per-seed observation lists `L` passed to a policy.
#[derive(Debug)]
pub struct TrialLog<'a> {
    dataset: &'a CurveDataset,
    seeds: Vec<SeedState>,
}

impl<'a> TrialLog<'a> {
    fn new(dataset: &'a CurveDataset) -> Self {
        TrialLog {
            dataset,
            seeds: Vec::new(),
        }
    }

    /// Number of seeds sampled so far; also the index of the next fresh seed.
    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn seed(&self, index: usize) -> SeedView<'a> {
        let s = self.seeds[index];
        let curve = &self.dataset.curves()[s.curve];
        SeedView {
            values: &curve.values[..s.observed],
            costs: curve.costs.as_deref().map(|c| &c[..s.observed]),
            exhausted: s.observed >= curve.len(),
        }
    }
}

/// Adaptive choice of which seed to advance next.
pub trait RunSwitchingPolicy {
    /// Index of the seed to advance; `log.len()` requests a fresh seed.
    fn next_seed(&mut self, log: &TrialLog<'_>) -> usize;
}

pub type PolicyFactory<'a> = dyn Fn() -> Box<dyn RunSwitchingPolicy> + Sync + 'a;

/// Outcome of a single trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub cost: f64,
    pub censored: bool,
    pub seeds_used: usize,
}

/// Runs one trial with the given RNG stream.
pub fn run_trial(
    policy: &mut dyn RunSwitchingPolicy,
    dataset: &CurveDataset,
    spec: &SuccessSpec,
    cap: f64,
    rng: &mut ChaCha8Rng,
) -> Result<TrialOutcome> {
    run_trial_traced(policy, dataset, spec, cap, rng, None)
}

/// Like [`run_trial`], also returning the seed index advanced at each step.
pub fn trace_trial(
    policy: &mut dyn RunSwitchingPolicy,
    dataset: &CurveDataset,
    spec: &SuccessSpec,
    cap: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(TrialOutcome, Vec<usize>)> {
    let mut trace = Vec::new();
    let outcome = run_trial_traced(policy, dataset, spec, cap, rng, Some(&mut trace))?;
    Ok((outcome, trace))
}

fn run_trial_traced(
    policy: &mut dyn RunSwitchingPolicy,
    dataset: &CurveDataset,
    spec: &SuccessSpec,
    cap: f64,
    rng: &mut ChaCha8Rng,
    mut trace: Option<&mut Vec<usize>>,
) -> Result<TrialOutcome> {
    let mut log = TrialLog::new(dataset);
    let mut cost = 0.0;
    loop {
        let idx = policy.next_seed(&log);
        if idx == log.seeds.len() {
            let curve = rng.random_range(0..dataset.len());
            log.seeds.push(SeedState { curve, observed: 0 });
        } else if idx > log.seeds.len() {
            return Err(Error::Policy(format!(
                "policy asked for seed {idx} with only {} sampled",
                log.seeds.len()
            )));
        }
        let seed = &mut log.seeds[idx];
        let curve = &dataset.curves()[seed.curve];
        if seed.observed >= curve.len() {
            return Err(Error::Policy(format!(
                "policy advanced exhausted seed {idx}"
            )));
        }
        let t = seed.observed;
        seed.observed += 1;
        if let Some(trace) = trace.as_deref_mut() {
            trace.push(idx);
        }
        cost += curve.cost(t);
        if spec.is_success(curve.values[t]) {
            return Ok(TrialOutcome {
                cost,
                censored: false,
                seeds_used: log.seeds.len(),
            });
        }
        if cost >= cap {
            return Ok(TrialOutcome {
                cost,
                censored: true,
                seeds_used: log.seeds.len(),
            });
        }
    }
}

/// Monte Carlo estimate of the expected time to success.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    #[serde(with = "float_or_inf")]
    pub mean_time: f64,
    #[serde(with = "float_or_inf")]
    pub std_error: f64,
    pub trials: usize,
    pub censored: usize,
}

impl SimResult {
    /// Mean and standard error over uncensored trials.
    pub fn from_outcomes(outcomes: &[TrialOutcome]) -> Self {
        let times: Vec<f64> = outcomes
            .iter()
            .filter(|o| !o.censored)
            .map(|o| o.cost)
            .collect();
        let n = times.len();
        let censored = outcomes.len() - n;
        if n == 0 {
            return SimResult {
                mean_time: f64::INFINITY,
                std_error: f64::INFINITY,
                trials: outcomes.len(),
                censored,
            };
        }
        let mean = compensated_sum(times.iter().copied()) / n as f64;
        let std_error = if n > 1 {
            let ss = compensated_sum(times.iter().map(|t| (t - mean) * (t - mean)));
            (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        SimResult {
            mean_time: mean,
            std_error,
            trials: outcomes.len(),
            censored,
        }
    }

    /// `std_error / mean_time`.
    pub fn relative_std_error(&self) -> f64 {
        self.std_error / self.mean_time
    }
}

pub fn default_cap(dataset: &CurveDataset) -> f64 {
    DEFAULT_CAP_MULTIPLIER * dataset.horizon() as f64
}

pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}

pub fn simulate_time_to_success(
    factory: &PolicyFactory<'_>,
    dataset: &CurveDataset,
    spec: &SuccessSpec,
    trials: usize,
    cap: f64,
    master_seed: u64,
) -> Result<SimResult> {
    if trials < 1 {
        return Err(Error::param("trials must be at least 1"));
    }
    if cap.is_nan() || cap < 1.0 {
        return Err(Error::param(
            "cap must allow at least one observation (cap >= 1)",
        ));
    }
    if dataset.is_empty() {
        return Err(Error::param("dataset is empty"));
    }
    let outcomes: Vec<TrialOutcome> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(master_seed, trial);
            let mut policy = factory();
            run_trial(policy.as_mut(), dataset, spec, cap, &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(SimResult::from_outcomes(&outcomes))
}

/// Static restart policy: repeatedly runs one stopping rule on fresh seeds.
pub struct RestartPolicy<R: CurveRule> {
    rule: Arc<R>,
    current: Option<Current<R::State>>,
}

struct Current<S> {
    index: usize,
    state: S,
    fed: usize,
    continuing: bool,
}

impl<R: CurveRule> RestartPolicy<R> {
    pub fn new(rule: Arc<R>) -> Self {
        RestartPolicy {
            rule,
            current: None,
        }
    }
}

impl<R: CurveRule> RunSwitchingPolicy for RestartPolicy<R> {
    fn next_seed(&mut self, log: &TrialLog<'_>) -> usize {
        if let Some(cur) = self.current.as_mut() {
            let view = log.seed(cur.index);
            while cur.fed < view.values.len() && cur.continuing {
                cur.continuing = self.rule.observe(&mut cur.state, view.values[cur.fed]);
                cur.fed += 1;
            }
            if cur.continuing && !view.exhausted {
                return cur.index;
            }
        }
        let index = log.len();
        self.current = Some(Current {
            index,
            state: R::State::default(),
            fed: 0,
            continuing: true,
        });
        index
    }
}

/// Factory for restart policies of a shared rule.
pub fn restart_factory<R: CurveRule + 'static>(
    rule: R,
) -> impl Fn() -> Box<dyn RunSwitchingPolicy> + Sync {
    let rule = Arc::new(rule);
    move || Box::new(RestartPolicy::new(Arc::clone(&rule))) as Box<dyn RunSwitchingPolicy>
}

/// Exact expected time `c / q` of the restart policy of `rule` under the
/// uniform distribution over the dataset's curves.
pub fn exact_restart_expectation<R: CurveRule + ?Sized>(
    rule: &R,
    dataset: &CurveDataset,
    spec: &SuccessSpec,
) -> f64 {
    curve_rule_stats(rule, dataset, spec).expected_time
}

/// One line of the simulation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub policy: String,
    pub target: f64,
    pub trials: usize,
    #[serde(with = "float_or_inf")]
    pub mean_time: f64,
    #[serde(with = "float_or_inf")]
    pub std_error: f64,
    pub censored: usize,
    #[serde(with = "float_or_inf")]
    pub improvement_over_random: f64,
}

impl SimReport {
    pub fn new(
        policy: impl Into<String>,
        spec: &SuccessSpec,
        result: &SimResult,
        random: &SimResult,
    ) -> Self {
        SimReport {
            policy: policy.into(),
            target: spec.target,
            trials: result.trials,
            mean_time: result.mean_time,
            std_error: result.std_error,
            censored: result.censored,
            improvement_over_random: random.mean_time / result.mean_time,
        }
    }
}
