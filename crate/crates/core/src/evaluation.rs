//! Cross-validated assessment of quantile policies and the online
//! explore/exploit algorithms built on them.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::curve::{percentile, population_medians, Curve, CurveDataset, SuccessSpec};
use crate::discretize::fit_discretizer;
use crate::error::{Error, Result};
use crate::num::{compensated_sum, float_or_inf};
use crate::policy::{build_trie, evaluate_rule, find_stopping_rule, FixedThreshold, PolicyStats};
use crate::rules::{curve_rule_stats, AboveMedianRule, CurveRule, FittedRule, FittedRuleState};
use crate::simulator::{RunSwitchingPolicy, TrialLog};

pub const DEFAULT_K_SET: [usize; 3] = [2, 3, 4];
pub const DEFAULT_MIN_COUNT: usize = 4;
pub const DEFAULT_REFIT_PERIOD: usize = 8;
pub const DEFAULT_EXPLORATION_PERCENTILE: f64 = 90.0;

const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FoldResult {
    pub q: f64,
    pub c: f64,
    /// The training part had no success; `q` is forced to 0.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvEstimate {
    #[serde(with = "float_or_inf")]
    pub low_variance: f64,
    #[serde(with = "float_or_inf")]
    pub naive: f64,
    #[serde(rename = "folds")]
    pub per_fold: Vec<FoldResult>,
}

impl CvEstimate {
    /// Both estimators from per-fold results.
    pub fn from_folds(per_fold: Vec<FoldResult>) -> Self {
        let sum_c = compensated_sum(per_fold.iter().map(|f| f.c));
        let sum_q = compensated_sum(per_fold.iter().map(|f| f.q));
        let low_variance = if sum_q > 0.0 {
            sum_c / sum_q
        } else {
            f64::INFINITY
        };
        let naive = if per_fold.iter().any(|f| f.q <= 0.0) {
            f64::INFINITY
        } else {
            compensated_sum(per_fold.iter().map(|f| f.c / f.q)) / per_fold.len() as f64
        };
        CvEstimate {
            low_variance,
            naive,
            per_fold,
        }
    }

    /// Convenience for hand-fed `(q, c)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        CvEstimate::from_folds(
            pairs
                .iter()
                .map(|&(q, c)| FoldResult {
                    q,
                    c,
                    skipped: false,
                })
                .collect(),
        )
    }
}

/// Shuffled fold assignment: `folds` contiguous, near-equal index blocks.
pub fn fold_partition(n: usize, folds: usize, fold_seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::param("folds must be at least 2"));
    }
    if folds > n {
        return Err(Error::param(format!("{folds} folds but only {n} curves")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(fold_seed));
    Ok((0..folds)
        .map(|i| order[i * n / folds..(i + 1) * n / folds].to_vec())
        .collect())
}

/// Fits a discretizer and the near-optimal tree on `dataset`.
pub fn fit_quantile_rule(
    dataset: &CurveDataset,
    spec: &SuccessSpec,
    buckets: usize,
    min_count: usize,
    epsilon: f64,
) -> Result<(FittedRule, PolicyStats)> {
    let discretizer = fit_discretizer(dataset, spec, buckets, min_count)?;
    let runs = discretizer.discretize_all(dataset, spec)?;
    let trie = build_trie(&runs, None)?;
    let found = find_stopping_rule(&trie, epsilon)?;
    Ok((
        FittedRule {
            tree: found.rule,
            discretizer,
        },
        found.stats,
    ))
}

fn evaluate_fold(
    dataset: &CurveDataset,
    spec: &SuccessSpec,
    train: &[usize],
    test: &[usize],
    buckets: usize,
    min_count: usize,
    epsilon: f64,
) -> Result<FoldResult> {
    let train = dataset.subset(train)?;
    let test = dataset.subset(test)?;
    match fit_quantile_rule(&train, spec, buckets, min_count, epsilon) {
        Ok((rule, _)) => {
            let runs = rule.discretizer.discretize_all(&test, spec)?;
            let stats = evaluate_rule(&rule.tree, &runs, None)?;
            Ok(FoldResult {
                q: stats.q,
                c: stats.c,
                skipped: false,
            })
        }
        Err(Error::SuccessUnreachable) => {
            let fallback = FixedThreshold::new(dataset.horizon())?;
            Ok(FoldResult {
                q: 0.0,
                c: curve_rule_stats(&fallback, &test, spec).c,
                skipped: true,
            })
        }
        Err(e) => Err(e),
    }
}

pub fn kfold_cv(
    dataset: &CurveDataset,
    spec: &SuccessSpec,
    buckets: usize,
    folds: usize,
    min_count: usize,
    epsilon: f64,
    fold_seed: u64,
) -> Result<CvEstimate> {
    let parts = fold_partition(dataset.len(), folds, fold_seed)?;
    let per_fold = (0..parts.len())
        .into_par_iter()
        .map(|i| {
            let train: Vec<usize> = parts
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .flat_map(|(_, p)| p.iter().copied())
                .collect();
            evaluate_fold(
                dataset, spec, &train, &parts[i], buckets, min_count, epsilon,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CvEstimate::from_folds(per_fold))
}

#[derive(Debug, Clone)]
pub struct BestQuantilePolicy {
    pub k_best: usize,
    pub rule: FittedRule,
    /// Training-set stats of `rule`.
    pub stats: PolicyStats,
    pub per_k: Vec<(usize, CvEstimate)>,
}

impl BestQuantilePolicy {
    pub fn estimate(&self) -> &CvEstimate {
        &self
            .per_k
            .iter()
            .find(|(k, _)| *k == self.k_best)
            .expect("k_best evaluated")
            .1
    }
}

/// Index of the smallest value; near-ties (relative 1e-9) keep the earlier one.
fn argmin_with_ties(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        let b = values[best];
        let tie = v == b
            || (v.is_finite()
                && b.is_finite()
                && (v - b).abs() <= TIE_TOLERANCE * b.abs().max(v.abs()));
        if v < b && !tie {
            best = i;
        }
    }
    best
}

pub fn select_best_quantile_policy(
    dataset: &CurveDataset,
    spec: &SuccessSpec,
    k_set: &[usize],
    folds: usize,
    min_count: usize,
    epsilon: f64,
    fold_seed: u64,
) -> Result<BestQuantilePolicy> {
    if k_set.is_empty() {
        return Err(Error::param("K set is empty"));
    }
    let mut ks = k_set.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let per_k = ks
        .iter()
        .map(|&k| {
            Ok((
                k,
                kfold_cv(dataset, spec, k, folds, min_count, epsilon, fold_seed)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let lows: Vec<f64> = per_k.iter().map(|(_, e)| e.low_variance).collect();
    let k_best = per_k[argmin_with_ties(&lows)].0;
    let (rule, stats) = fit_quantile_rule(dataset, spec, k_best, min_count, epsilon)?;
    Ok(BestQuantilePolicy {
        k_best,
        rule,
        stats,
        per_k,
    })
}

/// Expected time of random search on the data, divided by `policy_time`.
pub fn improvement_over_random(
    policy_time: f64,
    dataset: &CurveDataset,
    spec: &SuccessSpec,
) -> Result<f64> {
    let random = curve_rule_stats(&FixedThreshold::never(), dataset, spec).expected_time;
    if !random.is_finite() {
        return Err(Error::SuccessUnreachable);
    }
    Ok(random / policy_time)
}

#[derive(Debug, Clone, Serialize)]
pub struct CvReport {
    pub target: f64,
    #[serde(rename = "per_K")]
    pub per_k: BTreeMap<String, CvEstimate>,
    #[serde(rename = "K_best")]
    pub k_best: usize,
    #[serde(with = "float_or_inf")]
    pub improvement_over_random: f64,
}

impl CvReport {
    pub fn new(
        best: &BestQuantilePolicy,
        dataset: &CurveDataset,
        spec: &SuccessSpec,
    ) -> Result<Self> {
        Ok(CvReport {
            target: spec.target,
            per_k: best
                .per_k
                .iter()
                .map(|(k, e)| (k.to_string(), e.clone()))
                .collect(),
            k_best: best.k_best,
            improvement_over_random: improvement_over_random(
                best.estimate().low_variance,
                dataset,
                spec,
            )?,
        })
    }
}

/// Settings shared by the two online algorithms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExploreExploitConfig {
    pub k_set: Vec<usize>,
    pub folds: usize,
    pub min_count: usize,
    pub epsilon: f64,
    pub refit_period: usize,
    pub exploration_percentile: f64,
    pub fold_seed: u64,
}

impl Default for ExploreExploitConfig {
    fn default() -> Self {
        ExploreExploitConfig {
            k_set: DEFAULT_K_SET.to_vec(),
            folds: 5,
            min_count: DEFAULT_MIN_COUNT,
            epsilon: 0.01,
            refit_period: DEFAULT_REFIT_PERIOD,
            exploration_percentile: DEFAULT_EXPLORATION_PERCENTILE,
            fold_seed: 0,
        }
    }
}

impl ExploreExploitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_set.is_empty() || self.k_set.contains(&0) {
            return Err(Error::param("K set must be non-empty with K >= 1"));
        }
        if self.folds < 2 {
            return Err(Error::param("folds must be at least 2"));
        }
        if self.min_count < 1 {
            return Err(Error::param("min_count must be at least 1"));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::param("epsilon must be positive"));
        }
        if self.refit_period < 1 {
            return Err(Error::param("refit_period must be at least 1"));
        }
        if !(self.exploration_percentile > 0.0 && self.exploration_percentile <= 100.0) {
            return Err(Error::param("exploration percentile must lie in (0, 100]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Exploited {
    Quantile,
    AboveMedian,
}

enum ExploitRule {
    Quantile(FittedRule),
    AboveMedian(AboveMedianRule),
}

enum ExploitState {
    Quantile(FittedRuleState),
    AboveMedian(usize),
}

impl ExploitRule {
    fn start(&self) -> ExploitState {
        match self {
            ExploitRule::Quantile(_) => ExploitState::Quantile(FittedRuleState::default()),
            ExploitRule::AboveMedian(_) => ExploitState::AboveMedian(0),
        }
    }

    fn observe(&self, state: &mut ExploitState, value: f64) -> bool {
        match (self, state) {
            (ExploitRule::Quantile(r), ExploitState::Quantile(s)) => r.observe(s, value),
            (ExploitRule::AboveMedian(r), ExploitState::AboveMedian(s)) => r.observe(s, value),
            _ => unreachable!("state created by the same rule"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Explore,
    /// Exploitation turn played as random search (no rule fitted yet).
    ColdExploit,
    Exploit,
}

struct ActiveRun {
    index: usize,
    mode: Mode,
    state: Option<ExploitState>,
    fed: usize,
    continuing: bool,
}

/// Half exploration by random search, half exploitation of a rule refitted
/// on the curves seen so far. Turns alternate at run granularity: a new run
/// explores when cumulative exploration cost is at most exploitation cost.
pub struct ExploreExploit {
    config: ExploreExploitConfig,
    kind: Exploited,
    pool: Vec<Curve>,
    fresh_curves: usize,
    rule: Option<Arc<ExploitRule>>,
    explore_cost: f64,
    exploit_cost: f64,
    refits: usize,
    active: Option<ActiveRun>,
}

pub fn explore_exploit_policy(config: ExploreExploitConfig) -> Result<ExploreExploit> {
    ExploreExploit::new(config, Exploited::Quantile)
}

pub fn above_median_algorithm(config: ExploreExploitConfig) -> Result<ExploreExploit> {
    ExploreExploit::new(config, Exploited::AboveMedian)
}

impl ExploreExploit {
    fn new(config: ExploreExploitConfig, kind: Exploited) -> Result<Self> {
        config.validate()?;
        Ok(ExploreExploit {
            config,
            kind,
            pool: Vec::new(),
            fresh_curves: 0,
            rule: None,
            explore_cost: 0.0,
            exploit_cost: 0.0,
            refits: 0,
            active: None,
        })
    }

    pub fn explore_cost(&self) -> f64 {
        self.explore_cost
    }

    pub fn exploit_cost(&self) -> f64 {
        self.exploit_cost
    }

    /// Number of successful refits so far.
    pub fn refits(&self) -> usize {
        self.refits
    }

    fn refit(&mut self) {
        let Ok(dataset) = CurveDataset::new(self.pool.clone()) else {
            return;
        };
        let fitted = match self.kind {
            Exploited::AboveMedian => AboveMedianRule::new(population_medians(&dataset))
                .ok()
                .map(ExploitRule::AboveMedian),
            Exploited::Quantile => self.fit_quantile(&dataset).map(ExploitRule::Quantile),
        };
        if let Some(rule) = fitted {
            self.rule = Some(Arc::new(rule));
            self.refits += 1;
        }
    }

    fn fit_quantile(&self, dataset: &CurveDataset) -> Option<FittedRule> {
        if dataset.len() < 2 {
            return None;
        }
        let finals = dataset.final_values();
        let target = percentile(&finals, self.config.exploration_percentile).ok()?;
        let internal = SuccessSpec::new(target).ok()?;
        let folds = self.config.folds.min(dataset.len());
        select_best_quantile_policy(
            dataset,
            &internal,
            &self.config.k_set,
            folds,
            self.config.min_count,
            self.config.epsilon,
            self.config.fold_seed,
        )
        .ok()
        .map(|best| best.rule)
    }

    /// Closes the finished run: books its cost and keeps full random curves.
    fn finish(&mut self, run: ActiveRun, log: &TrialLog<'_>) {
        let view = log.seed(run.index);
        let cost = view.cost_so_far();
        match run.mode {
            Mode::Explore => self.explore_cost += cost,
            Mode::ColdExploit | Mode::Exploit => self.exploit_cost += cost,
        }
        if run.mode != Mode::Exploit && view.exhausted {
            let curve = Curve {
                id: format!("s{:08}", run.index),
                values: view.values.to_vec(),
                costs: view.costs.map(<[f64]>::to_vec),
            };
            self.pool.push(curve);
            self.fresh_curves += 1;
            if self.fresh_curves >= self.config.refit_period {
                self.fresh_curves = 0;
                self.refit();
            }
        }
    }
}

impl RunSwitchingPolicy for ExploreExploit {
    fn next_seed(&mut self, log: &TrialLog<'_>) -> usize {
        if let Some(mut run) = self.active.take() {
            let view = log.seed(run.index);
            if let (Some(state), Some(rule)) = (run.state.as_mut(), self.rule.as_ref()) {
                while run.fed < view.values.len() && run.continuing {
                    run.continuing = rule.observe(state, view.values[run.fed]);
                    run.fed += 1;
                }
            }
            if run.continuing && !view.exhausted {
                let index = run.index;
                self.active = Some(run);
                return index;
            }
            self.finish(run, log);
        }
        let index = log.len();
        let (mode, state) = if self.explore_cost <= self.exploit_cost {
            (Mode::Explore, None)
        } else {
            match &self.rule {
                Some(rule) => (Mode::Exploit, Some(rule.start())),
                None => (Mode::ColdExploit, None),
            }
        };
        self.active = Some(ActiveRun {
            index,
            mode,
            state,
            fed: 0,
            continuing: true,
        });
        index
    }
}
