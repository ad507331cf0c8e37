//! Reference policies: fixed restart thresholds, the Luby universal
//! schedule, the above-median rule, Successive Halving and Hyperband.

use serde::Serialize;

use crate::curve::{CurveDataset, SuccessSpec};
use crate::error::{Error, Result};
use crate::num::float_or_inf;
use crate::policy::FixedThreshold;
use crate::rules::curve_rule_stats;
use crate::simulator::{RunSwitchingPolicy, TrialLog};

pub use crate::rules::{above_median_rule, AboveMedianRule};

pub const DEFAULT_ETA: usize = 3;

/// Value at 1-based position `i` of the Luby sequence 1,1,2,1,1,2,4,...
pub fn luby_length(i: u64) -> Result<u64> {
    if i < 1 {
        return Err(Error::param("Luby positions are 1-based"));
    }
    let mut i = i;
    loop {
        // smallest k with i <= 2^k - 1
        let k = 64 - i.leading_zeros();
        if i == (1u64 << k) - 1 {
            return Ok(1u64 << (k - 1));
        }
        i -= (1u64 << (k - 1)) - 1;
    }
}

/// Restart schedule whose j-th run is capped at `unit * luby(j)` steps.
#[derive(Debug, Clone)]
pub struct LubyPolicy {
    unit: u64,
    runs_started: u64,
    current: Option<(usize, u64)>,
}

impl LubyPolicy {
    pub fn new(unit: u64) -> Self {
        LubyPolicy {
            unit: unit.max(1),
            runs_started: 0,
            current: None,
        }
    }
}

impl Default for LubyPolicy {
    fn default() -> Self {
        LubyPolicy::new(1)
    }
}

impl RunSwitchingPolicy for LubyPolicy {
    fn next_seed(&mut self, log: &TrialLog<'_>) -> usize {
        if let Some((index, budget)) = self.current {
            let view = log.seed(index);
            if (view.observed() as u64) < budget && !view.exhausted {
                return index;
            }
        }
        self.runs_started += 1;
        let budget = self
            .unit
            .saturating_mul(luby_length(self.runs_started).expect("1-based"));
        let index = log.len();
        self.current = Some((index, budget));
        index
    }
}

/// One Successive Halving bracket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BracketSpec {
    pub n: usize,
    pub eta: usize,
    pub max_budget: usize,
}

impl BracketSpec {
    pub fn new(n: usize, eta: usize, max_budget: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::param("bracket needs at least one configuration"));
        }
        if eta < 2 {
            return Err(Error::param("eta must be at least 2"));
        }
        if max_budget < 1 {
            return Err(Error::param("maximum budget R must be at least 1"));
        }
        Ok(BracketSpec { n, eta, max_budget })
    }

    /// Eliminations needed to go from `n` configurations to one, keeping
    /// `ceil(k / eta)` each time.
    pub fn eliminations(&self) -> usize {
        let mut k = self.n;
        let mut s = 0;
        while k > 1 {
            k = k.div_ceil(self.eta);
            s += 1;
        }
        s
    }

    /// Rung schedule for a bracket with `eliminations` rungs after the first.
    fn schedule(&self, eliminations: usize) -> Rungs {
        let mut counts = Vec::with_capacity(eliminations + 1);
        let mut budgets = Vec::with_capacity(eliminations + 1);
        let mut k = self.n;
        for i in 0..=eliminations {
            counts.push(k);
            k = k.div_ceil(self.eta);
            let shrink = (self.eta as u64)
                .checked_pow((eliminations - i) as u32)
                .unwrap_or(u64::MAX);
            budgets.push(((self.max_budget as u64 / shrink).max(1)) as usize);
        }
        Rungs { counts, budgets }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Rungs {
    counts: Vec<usize>,
    budgets: Vec<usize>,
}

#[derive(Debug, Clone)]
struct ActiveBracket {
    rungs: Rungs,
    rung: usize,
    members: Vec<usize>,
    pos: usize,
}

impl ActiveBracket {
    fn new(rungs: Rungs) -> Self {
        ActiveBracket {
            rungs,
            rung: 0,
            members: Vec::new(),
            pos: 0,
        }
    }

    /// Next seed to advance, or `None` once the final rung is done.
    fn next(&mut self, log: &TrialLog<'_>) -> Option<usize> {
        loop {
            let budget = self.rungs.budgets[self.rung];
            let count = self.rungs.counts[self.rung];
            while self.pos < count {
                if self.pos == self.members.len() {
                    let fresh = log.len();
                    self.members.push(fresh);
                    return Some(fresh);
                }
                let seed = self.members[self.pos];
                let view = log.seed(seed);
                if view.observed() < budget && !view.exhausted {
                    return Some(seed);
                }
                self.pos += 1;
            }
            if self.rung + 1 == self.rungs.budgets.len() {
                return None;
            }
            // keep the best by current value, ties to the lower seed index
            let keep = self.rungs.counts[self.rung + 1];
            let mut ranked: Vec<(f64, usize)> = self
                .members
                .iter()
                .map(|&s| (log.seed(s).last_value().unwrap_or(f64::NEG_INFINITY), s))
                .collect();
            ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut survivors: Vec<usize> = ranked.into_iter().take(keep).map(|(_, s)| s).collect();
            survivors.sort_unstable();
            self.members = survivors;
            self.rung += 1;
            self.pos = 0;
        }
    }
}

/// Successive Halving, restarted with fresh seeds after every bracket.
#[derive(Debug, Clone)]
pub struct SuccessiveHalving {
    rungs: Rungs,
    active: ActiveBracket,
}

pub fn successive_halving(spec: BracketSpec) -> SuccessiveHalving {
    let rungs = spec.schedule(spec.eliminations());
    SuccessiveHalving {
        active: ActiveBracket::new(rungs.clone()),
        rungs,
    }
}

impl RunSwitchingPolicy for SuccessiveHalving {
    fn next_seed(&mut self, log: &TrialLog<'_>) -> usize {
        loop {
            if let Some(seed) = self.active.next(log) {
                return seed;
            }
            self.active = ActiveBracket::new(self.rungs.clone());
        }
    }
}

/// Hyperband: cycles brackets `s = s_max..=0` forever.
#[derive(Debug, Clone)]
pub struct Hyperband {
    brackets: Vec<Rungs>,
    current: usize,
    active: ActiveBracket,
}

/// Largest `s` with `eta^s <= r`.
fn floor_log(r: usize, eta: usize) -> usize {
    let mut s = 0;
    let mut p = eta;
    while p <= r {
        s += 1;
        p = match p.checked_mul(eta) {
            Some(next) => next,
            None => break,
        };
    }
    s
}

/// `(n_s, r_s)` for each Hyperband bracket, `s = s_max` first.
pub fn hyperband_brackets(max_budget: usize, eta: usize) -> Result<Vec<(usize, usize)>> {
    BracketSpec::new(1, eta, max_budget)?;
    let s_max = floor_log(max_budget, eta);
    Ok((0..=s_max)
        .rev()
        .map(|s| {
            let pow = eta.pow(s as u32);
            let n = ((s_max + 1) * pow).div_ceil(s + 1);
            (n, (max_budget / pow).max(1))
        })
        .collect())
}

pub fn hyperband(max_budget: usize, eta: usize) -> Result<Hyperband> {
    BracketSpec::new(1, eta, max_budget)?;
    let s_max = floor_log(max_budget, eta);
    let brackets: Vec<Rungs> = hyperband_brackets(max_budget, eta)?
        .into_iter()
        .zip((0..=s_max).rev())
        .map(|((n, _), s)| BracketSpec { n, eta, max_budget }.schedule(s))
        .collect();
    Ok(Hyperband {
        active: ActiveBracket::new(brackets[0].clone()),
        brackets,
        current: 0,
    })
}

impl RunSwitchingPolicy for Hyperband {
    fn next_seed(&mut self, log: &TrialLog<'_>) -> usize {
        loop {
            if let Some(seed) = self.active.next(log) {
                return seed;
            }
            self.current = (self.current + 1) % self.brackets.len();
            self.active = ActiveBracket::new(self.brackets[self.current].clone());
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub t: usize,
    pub q: f64,
    pub c: f64,
    #[serde(with = "float_or_inf")]
    pub expected_time: f64,
}

/// Exact expected time of every fixed restart threshold in `t_values`.
pub fn threshold_sweep(
    dataset: &CurveDataset,
    spec: &SuccessSpec,
    t_values: &[usize],
) -> Result<Vec<SweepRow>> {
    t_values
        .iter()
        .map(|&t| {
            if t < 1 || t > dataset.horizon() {
                return Err(Error::param(format!(
                    "threshold {t} outside 1..={}",
                    dataset.horizon()
                )));
            }
            let stats = curve_rule_stats(&FixedThreshold::new(t)?, dataset, spec);
            Ok(SweepRow {
                t,
                q: stats.q,
                c: stats.c,
                expected_time: stats.expected_time,
            })
        })
        .collect()
}

/// Row with the smallest expected time; ties keep the smaller `t`.
pub fn best_threshold(rows: &[SweepRow]) -> Option<SweepRow> {
    rows.iter()
        .copied()
        .fold(None, |best: Option<SweepRow>, row| match best {
            Some(b) if b.expected_time <= row.expected_time => Some(b),
            _ => Some(row),
        })
}
