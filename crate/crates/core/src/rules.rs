//! Stopping rules over raw curve values.
//!
//! These are what the simulator and the exact restart evaluation run. A rule
//! sees one value at a time and answers "continue?". Success is checked by
//! the caller before the rule is consulted, so rules never see a value that
//! meets the external target.

use serde::{Deserialize, Serialize};

use crate::curve::{Curve, CurveDataset, SuccessSpec};
use crate::discretize::{DiscretizerState, QuantileDiscretizer};
use crate::error::{Error, Result};
use crate::num::compensated_sum;
use crate::policy::{FixedThreshold, PolicyStats, StoppingTree, TreeState};

pub trait CurveRule: Send + Sync {
    type State: Default + Send;

    /// Feeds the next non-success value; returns whether to continue.
    fn observe(&self, state: &mut Self::State, value: f64) -> bool;
}

impl CurveRule for FixedThreshold {
    type State = usize;

    fn observe(&self, state: &mut usize, _value: f64) -> bool {
        *state += 1;
        *state < self.threshold()
    }
}

/// Stops after step `t` when the value is strictly below the step-`t`
/// population median. Steps past the end of `medians` always continue.
#[derive(Debug, Clone, PartialEq)]
pub struct AboveMedianRule {
    medians: Vec<f64>,
}

impl AboveMedianRule {
    pub fn new(medians: Vec<f64>) -> Result<Self> {
        if medians.is_empty() {
            return Err(Error::param("above-median rule needs at least one median"));
        }
        Ok(AboveMedianRule { medians })
    }

    pub fn medians(&self) -> &[f64] {
        &self.medians
    }
}

pub fn above_median_rule(medians: Vec<f64>) -> Result<AboveMedianRule> {
    AboveMedianRule::new(medians)
}

impl CurveRule for AboveMedianRule {
    type State = usize;

    fn observe(&self, step: &mut usize, value: f64) -> bool {
        let t = *step;
        *step += 1;
        self.medians.get(t).is_none_or(|&m| value >= m)
    }
}

/// A fitted discretizer plus the stopping tree over its tokens.
///
/// When the run reaches the discretizer's own target (which may differ from
/// the external one), the run is kept going to its end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedRule {
    #[serde(flatten)]
    pub tree: StoppingTree,
    pub discretizer: QuantileDiscretizer,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FittedRuleState {
    disc: DiscretizerState,
    tree: TreeState,
    reached_target: bool,
}

impl CurveRule for FittedRule {
    type State = FittedRuleState;

    fn observe(&self, state: &mut FittedRuleState, value: f64) -> bool {
        if state.reached_target {
            return true;
        }
        let token = self.discretizer.step(&mut state.disc, value);
        if token.is_success() {
            state.reached_target = true;
            return true;
        }
        self.tree.advance(&mut state.tree, token)
    }
}

impl FittedRule {
    pub fn check_target(&self, spec: &SuccessSpec) -> Result<()> {
        let trained = self.discretizer.trained_target();
        if trained.target != spec.target {
            return Err(Error::TargetMismatch {
                trained: trained.target,
                requested: spec.target,
            });
        }
        Ok(())
    }
}

/// Outcome of one run of a stopping rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOutcome {
    pub success: bool,
    pub cost: f64,
    pub steps: usize,
}

/// Runs `rule` on one curve until success, stop, or the curve ends.
pub fn play<R: CurveRule + ?Sized>(rule: &R, curve: &Curve, spec: &SuccessSpec) -> RunOutcome {
    let mut state = R::State::default();
    let mut cost = 0.0;
    for (t, &v) in curve.values.iter().enumerate() {
        cost += curve.cost(t);
        if spec.is_success(v) {
            return RunOutcome {
                success: true,
                cost,
                steps: t + 1,
            };
        }
        if !rule.observe(&mut state, v) {
            return RunOutcome {
                success: false,
                cost,
                steps: t + 1,
            };
        }
    }
    RunOutcome {
        success: false,
        cost,
        steps: curve.len(),
    }
}

/// (q, c) of a raw-curve rule under the uniform distribution over curves.
pub fn curve_rule_stats<R: CurveRule + ?Sized>(
    rule: &R,
    dataset: &CurveDataset,
    spec: &SuccessSpec,
) -> PolicyStats {
    let w = 1.0 / dataset.len() as f64;
    let outcomes: Vec<RunOutcome> = dataset
        .curves()
        .iter()
        .map(|c| play(rule, c, spec))
        .collect();
    let q = compensated_sum(outcomes.iter().map(|o| if o.success { w } else { 0.0 }));
    let c = compensated_sum(outcomes.iter().map(|o| w * o.cost));
    PolicyStats::new(q, c)
}
