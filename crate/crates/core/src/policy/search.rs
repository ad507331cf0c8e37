//! Optimal stopping rule search.
//!
//! `delta(r)` is the best achievable `q - r * c` over all deterministic
//! rules on the trie. Each non-root node `v` carries weight
//! `mass(v) * (1[success] - r * step_cost(v))`; a rule is a subtree hanging
//! off the root, so the optimum is a maximum-weight subtree, found in one
//! leaves-to-root pass. `delta(r) > 0` exactly when `r` is below the best
//! ratio `q / c`, which lets [`find_stopping_rule`] bisect on `r`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::policy::tree::{stats_on_trie, PolicyStats, StoppingTree, UnseenAction};
use crate::policy::trie::{WeightedTrie, ROOT};

/// Safety net on bisection steps; `f64` bisection runs out of bits long before.
const MAX_ITERATIONS: usize = 4096;
const MAX_REFINEMENTS: usize = 64;

/// Bottom-up max-weight subtree values. Returns (delta, per-node children sums).
fn subtree_sums(trie: &WeightedTrie, r: f64) -> (f64, Vec<f64>) {
    let nodes = trie.nodes();
    let mut best = vec![0.0f64; nodes.len()];
    let mut child_sum = vec![0.0f64; nodes.len()];
    for id in (0..nodes.len()).rev() {
        let node = &nodes[id];
        let sum: f64 = node.children().iter().map(|&(_, c)| best[c]).sum();
        child_sum[id] = sum;
        if id == ROOT {
            continue;
        }
        let reward = if node.is_success() { node.mass() } else { 0.0 };
        let weight = reward - r * node.cost_mass();
        best[id] = weight + sum.max(0.0);
    }
    (child_sum[ROOT], child_sum)
}

/// Value of `max_rule q - r * c`, without building the maximizer.
pub fn delta_value(trie: &WeightedTrie, r: f64) -> f64 {
    subtree_sums(trie, r).0
}

/// `delta(r)` and a minimal maximizing rule. Nodes whose subtree sum is
/// exactly zero stop.
pub fn delta(trie: &WeightedTrie, r: f64) -> (f64, StoppingTree) {
    let (value, child_sum) = subtree_sums(trie, r);
    let mut cont = Vec::new();
    let mut stop = Vec::new();
    let mut stack = vec![(ROOT, Vec::new())];
    while let Some((id, prefix)) = stack.pop() {
        for &(token, child) in trie.node(id).children() {
            if trie.node(child).is_success() {
                continue;
            }
            let mut p = prefix.clone();
            p.push(token);
            if child_sum[child] > 0.0 {
                cont.push(p.clone());
                stack.push((child, p));
            } else {
                stop.push(p);
            }
        }
    }
    let tree = StoppingTree::from_prefixes(cont, stop, UnseenAction::Stop)
        .expect("maximizer is prefix-closed");
    (value, tree)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoundRule {
    pub rule: StoppingTree,
    pub stats: PolicyStats,
    pub iterations: usize,
    /// Ratio-improving steps taken after bisection.
    pub refinements: usize,
    /// Final bisection bracket `[lower, upper]` around the best ratio.
    pub lower: f64,
    pub upper: f64,
}

/// Bisection on `r` until `upper <= (1 + epsilon) * lower`; the rule that
/// maximizes `q - lower * c` has ratio at least `best / (1 + epsilon)`.
/// That rule is then refined by re-maximizing at its own ratio, which never
/// lowers the ratio and ends at the optimum on a finite trie.
pub fn find_stopping_rule(trie: &WeightedTrie, epsilon: f64) -> Result<FoundRule> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::param("epsilon must be positive"));
    }
    if trie.total_success_mass() <= 0.0 {
        return Err(Error::SuccessUnreachable);
    }
    let min_cost = trie.min_step_cost();
    if !(min_cost.is_finite() && min_cost > 0.0) {
        return Err(Error::param("step costs must be positive"));
    }
    // any run pays at least one step, so the best ratio is at most 1/min_cost
    let mut lower = 0.0f64;
    let mut upper = if min_cost >= 1.0 { 1.0 } else { 1.0 / min_cost };
    let mut iterations = 0;
    while upper > (1.0 + epsilon) * lower && iterations < MAX_ITERATIONS {
        let r = 0.5 * (upper + lower);
        if r <= lower || r >= upper {
            break;
        }
        iterations += 1;
        if delta_value(trie, r) > 0.0 {
            lower = r;
        } else {
            upper = r;
        }
    }
    let (_, mut rule) = delta(trie, lower);
    let mut stats = stats_on_trie(trie, &rule);
    // Dinkelbach steps: re-maximize at the rule's own ratio while that helps
    let mut refinements = 0;
    while refinements < MAX_REFINEMENTS {
        let (value, next) = delta(trie, stats.ratio);
        if value.is_nan() || value <= 0.0 {
            break;
        }
        let next_stats = stats_on_trie(trie, &next);
        if next_stats.ratio.partial_cmp(&stats.ratio) != Some(std::cmp::Ordering::Greater) {
            break;
        }
        rule = next;
        stats = next_stats;
        refinements += 1;
    }
    Ok(FoundRule {
        rule,
        stats,
        iterations,
        refinements,
        lower,
        upper,
    })
}
