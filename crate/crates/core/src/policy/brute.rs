//! Exhaustive search over stopping rules, for small run sets.
//!
//! Builds its own prefix set from the runs and scores each candidate rule by
//! playing the runs directly, so it shares nothing with the trie weights or
//! the subtree recursion it is used to check.

use std::collections::{BTreeMap, BTreeSet};

use crate::discretize::{DiscretizedRun, Token};
use crate::error::{Error, Result};
use crate::policy::tree::{StoppingTree, UnseenAction};
use crate::policy::trie::resolve_weights;

pub const DEFAULT_NODE_LIMIT: usize = 20;

const RELATIVE_TIE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceOptimum {
    pub r_star: f64,
    pub q: f64,
    pub c: f64,
    pub tree: StoppingTree,
    /// Number of prefix-closed rules enumerated.
    pub candidates: usize,
}

struct Search<'a> {
    runs: &'a [DiscretizedRun],
    weights: Vec<f64>,
    /// decision prefix -> decision children
    children: BTreeMap<Vec<Token>, Vec<Vec<Token>>>,
    best: Option<(f64, f64, Vec<Vec<Token>>)>,
    candidates: usize,
}

impl Search<'_> {
    fn score(&self, chosen: &BTreeSet<Vec<Token>>) -> (f64, f64) {
        let mut q = 0.0;
        let mut c = 0.0;
        for (run, &w) in self.runs.iter().zip(&self.weights) {
            let mut observed = run.tokens.len();
            for i in 0..run.tokens.len() {
                let prefix = &run.tokens[..=i];
                if run.tokens[i].is_success() || !chosen.contains(prefix) {
                    observed = i + 1;
                    break;
                }
            }
            if run.tokens[observed - 1].is_success() {
                q += w;
            }
            c += w * run.costs[..observed].iter().sum::<f64>();
        }
        (q, c)
    }

    fn consider(&mut self, chosen: &BTreeSet<Vec<Token>>) {
        self.candidates += 1;
        let (q, c) = self.score(chosen);
        let list: Vec<Vec<Token>> = chosen.iter().cloned().collect();
        let better = match &self.best {
            None => true,
            Some((bq, bc, blist)) => {
                let lhs = q * bc;
                let rhs = bq * c;
                let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
                if (lhs - rhs) / scale > RELATIVE_TIE {
                    true
                } else if (rhs - lhs) / scale > RELATIVE_TIE {
                    false
                } else {
                    (list.len(), &list) < (blist.len(), blist)
                }
            }
        };
        if better {
            self.best = Some((q, c, list));
        }
    }

    fn enumerate(&mut self, pending: &mut Vec<Vec<Token>>, chosen: &mut BTreeSet<Vec<Token>>) {
        let Some(next) = pending.pop() else {
            self.consider(chosen);
            return;
        };
        // stop at `next`
        self.enumerate(pending, chosen);
        // continue at `next`
        let kids = self.children.get(&next).cloned().unwrap_or_default();
        let mark = pending.len();
        pending.extend(kids);
        chosen.insert(next.clone());
        self.enumerate(pending, chosen);
        chosen.remove(&next);
        pending.truncate(mark);
        pending.push(next);
    }
}

/// Exact maximizer of `q / c` over all prefix-closed continue sets.
/// Ties prefer the smaller continue set, then the lexicographically
/// smaller one.
pub fn brute_force_optimal(
    runs: &[DiscretizedRun],
    weights: Option<&[f64]>,
    node_limit: usize,
) -> Result<BruteForceOptimum> {
    if runs.is_empty() {
        return Err(Error::param("brute force needs at least one run"));
    }
    let weights = resolve_weights(runs.len(), weights)?;
    let mut prefixes: BTreeSet<Vec<Token>> = BTreeSet::new();
    for run in runs {
        run.validate()?;
        for i in 1..=run.tokens.len() {
            prefixes.insert(run.tokens[..i].to_vec());
        }
    }
    if prefixes.len() > node_limit {
        return Err(Error::NodeLimitExceeded {
            nodes: prefixes.len(),
            limit: node_limit,
        });
    }
    // A decision prefix is a non-success prefix with at least one extension;
    // continuing at a prefix with no extension changes nothing.
    let mut children: BTreeMap<Vec<Token>, Vec<Vec<Token>>> = BTreeMap::new();
    for p in &prefixes {
        let (parent, _) = p.split_at(p.len() - 1);
        let has_extension = prefixes
            .range(p.clone()..)
            .nth(1)
            .is_some_and(|n| n.starts_with(p));
        if !p.last().is_some_and(|t| t.is_success()) && has_extension {
            children.entry(parent.to_vec()).or_default().push(p.clone());
        }
    }
    let mut search = Search {
        runs,
        weights,
        children,
        best: None,
        candidates: 0,
    };
    let mut pending = search
        .children
        .get(&Vec::new())
        .cloned()
        .unwrap_or_default();
    let mut chosen = BTreeSet::new();
    search.enumerate(&mut pending, &mut chosen);
    let (q, c, list) = search
        .best
        .expect("at least the root-only rule is enumerated");
    let tree = StoppingTree::from_prefixes(list, Vec::new(), UnseenAction::Stop)?;
    Ok(BruteForceOptimum {
        r_star: q / c,
        q,
        c,
        tree,
        candidates: search.candidates,
    })
}
