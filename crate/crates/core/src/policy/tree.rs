//! Deterministic stopping rules over token sequences and their statistics.

use std::collections::BTreeSet;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::discretize::{DiscretizedRun, Token};
use crate::error::{Error, Result};
use crate::num::{compensated_sum, float_or_inf};
use crate::policy::trie::{resolve_weights, NodeId, WeightedTrie, ROOT};

/// Decision for a prefix that the rule has never seen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum UnseenAction {
    #[default]
    #[serde(rename = "stop")]
    Stop,
    /// Inherit the decision of the deepest known ancestor. Since that
    /// ancestor chose to continue, the run continues to its end.
    #[serde(rename = "continue-as-deepest-ancestor")]
    ContinueAsAncestor,
}

/// Something that decides how many tokens of a run it observes.
pub trait TokenRule {
    /// Number of leading tokens observed before stopping; at least one
    /// for non-empty input, and never past a success token.
    fn observed_len(&self, tokens: &[Token]) -> usize;
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct RuleNode {
    children: Vec<(Token, usize)>,
    cont: bool,
}

/// Prefix-closed continue set, stored as a tree.
///
/// Known non-continue prefixes are kept as leaves so that the rule can tell
/// "seen and stop" apart from "never seen".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoppingTree {
    nodes: Vec<RuleNode>,
    unseen_action: UnseenAction,
}

impl StoppingTree {
    /// Rule that continues only at the empty prefix.
    pub fn root_only(unseen_action: UnseenAction) -> Self {
        StoppingTree {
            nodes: vec![RuleNode {
                children: Vec::new(),
                cont: true,
            }],
            unseen_action,
        }
    }

    /// Builds a rule from continue prefixes (the empty prefix is implied)
    /// and optional known stop prefixes.
    pub fn from_prefixes<I, J>(
        continue_prefixes: I,
        stop_prefixes: J,
        unseen_action: UnseenAction,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = Vec<Token>>,
        J: IntoIterator<Item = Vec<Token>>,
    {
        let mut cont: Vec<Vec<Token>> = continue_prefixes.into_iter().collect();
        cont.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        cont.dedup();
        let mut tree = Self::root_only(unseen_action);
        for prefix in &cont {
            if prefix.iter().any(|t| t.is_success()) {
                return Err(Error::param(
                    "continue prefixes may not contain the success token",
                ));
            }
            let Some((&last, parent)) = prefix.split_last() else {
                continue;
            };
            let parent = tree
                .lookup(parent)
                .filter(|&p| tree.nodes[p].cont)
                .ok_or_else(|| Error::param("continue prefixes are not prefix-closed"))?;
            let id = tree.insert_child(parent, last)?;
            tree.nodes[id].cont = true;
        }
        for prefix in stop_prefixes {
            if prefix.iter().any(|t| t.is_success()) {
                return Err(Error::param(
                    "stop prefixes may not contain the success token",
                ));
            }
            let Some((&last, parent)) = prefix.split_last() else {
                return Err(Error::param("the empty prefix always continues"));
            };
            let parent = tree
                .lookup(parent)
                .filter(|&p| tree.nodes[p].cont)
                .ok_or_else(|| Error::param("stop prefix must extend a continue prefix"))?;
            if tree.child(parent, last).is_some() {
                return Err(Error::param("prefix listed as both continue and stop"));
            }
            tree.insert_child(parent, last)?;
        }
        Ok(tree)
    }

    fn insert_child(&mut self, parent: usize, token: Token) -> Result<usize> {
        match self.nodes[parent]
            .children
            .binary_search_by(|(t, _)| t.cmp(&token))
        {
            Ok(i) => Ok(self.nodes[parent].children[i].1),
            Err(i) => {
                let id = self.nodes.len();
                self.nodes[parent].children.insert(i, (token, id));
                self.nodes.push(RuleNode {
                    children: Vec::new(),
                    cont: false,
                });
                Ok(id)
            }
        }
    }

    fn child(&self, node: usize, token: Token) -> Option<usize> {
        let children = &self.nodes[node].children;
        children
            .binary_search_by(|(t, _)| t.cmp(&token))
            .ok()
            .map(|i| children[i].1)
    }

    fn lookup(&self, prefix: &[Token]) -> Option<usize> {
        let mut node = 0;
        for &t in prefix {
            node = self.child(node, t)?;
        }
        Some(node)
    }

    pub fn unseen_action(&self) -> UnseenAction {
        self.unseen_action
    }

    pub fn with_unseen_action(mut self, unseen_action: UnseenAction) -> Self {
        self.unseen_action = unseen_action;
        self
    }

    /// Whether the rule continues after observing `prefix`.
    pub fn continues_after(&self, prefix: &[Token]) -> bool {
        if prefix.last().is_some_and(|t| t.is_success()) {
            return false;
        }
        let mut node = Some(0);
        for &t in prefix {
            match node {
                Some(n) if self.nodes[n].cont => node = self.child(n, t),
                Some(_) => return false,
                None => break,
            }
        }
        match node {
            Some(n) => self.nodes[n].cont,
            None => self.unseen_action == UnseenAction::ContinueAsAncestor,
        }
    }

    /// Whether `prefix` is a member of the continue set.
    pub fn contains(&self, prefix: &[Token]) -> bool {
        self.lookup(prefix).is_some_and(|n| self.nodes[n].cont)
    }

    /// Size of the continue set, counting the empty prefix.
    pub fn continue_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.cont).count()
    }

    fn collect(&self, want_cont: bool) -> Vec<Vec<Token>> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, Vec::new())];
        while let Some((node, prefix)) = stack.pop() {
            if self.nodes[node].cont == want_cont {
                out.push(prefix.clone());
            }
            for &(t, c) in self.nodes[node].children.iter().rev() {
                let mut p = prefix.clone();
                p.push(t);
                stack.push((c, p));
            }
        }
        out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        out
    }

    /// Continue set, shortest first; the first entry is the empty prefix.
    pub fn continue_prefixes(&self) -> Vec<Vec<Token>> {
        self.collect(true)
    }

    /// Known prefixes at which the rule stops.
    pub fn stop_prefixes(&self) -> Vec<Vec<Token>> {
        self.collect(false)
    }

    /// Incremental walker for one run.
    pub fn cursor(&self) -> TreeCursor<'_> {
        TreeCursor {
            tree: self,
            state: TreeState::default(),
        }
    }

    /// Feeds the next token of a run whose walk so far is `state`; returns
    /// whether the rule continues.
    pub fn advance(&self, state: &mut TreeState, token: Token) -> bool {
        if token.is_success() {
            return false;
        }
        if state.off_tree {
            // only reachable while continuing
            return true;
        }
        match self.child(state.node, token) {
            Some(c) => {
                state.node = c;
                self.nodes[c].cont
            }
            None => {
                state.off_tree = true;
                self.unseen_action == UnseenAction::ContinueAsAncestor
            }
        }
    }

    /// Continue set as an ordered set, for comparisons in tests.
    pub fn continue_set(&self) -> BTreeSet<Vec<Token>> {
        self.continue_prefixes().into_iter().collect()
    }
}

/// Position of one run's walk through a [`StoppingTree`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TreeState {
    node: usize,
    off_tree: bool,
}

/// Walks a [`StoppingTree`] one observation at a time.
#[derive(Debug, Clone)]
pub struct TreeCursor<'a> {
    tree: &'a StoppingTree,
    state: TreeState,
}

impl TreeCursor<'_> {
    /// Feeds the next token; returns whether the rule continues.
    pub fn observe(&mut self, token: Token) -> bool {
        self.tree.advance(&mut self.state, token)
    }
}

impl TokenRule for StoppingTree {
    fn observed_len(&self, tokens: &[Token]) -> usize {
        let mut cursor = self.cursor();
        for (i, &t) in tokens.iter().enumerate() {
            if !cursor.observe(t) {
                return i + 1;
            }
        }
        tokens.len()
    }
}

/// Label-oblivious rule: stop after `t` observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedThreshold(usize);

impl FixedThreshold {
    pub fn new(t: usize) -> Result<Self> {
        if t < 1 {
            return Err(Error::param("restart threshold must be at least 1"));
        }
        Ok(FixedThreshold(t))
    }

    /// Never stops; the random-search rule.
    pub fn never() -> Self {
        FixedThreshold(usize::MAX)
    }

    pub fn threshold(self) -> usize {
        self.0
    }
}

pub fn fixed_threshold_rule(t: usize) -> Result<FixedThreshold> {
    FixedThreshold::new(t)
}

impl TokenRule for FixedThreshold {
    fn observed_len(&self, tokens: &[Token]) -> usize {
        tokens.len().min(self.0)
    }
}

/// Per-run success probability and expected cost of a stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyStats {
    pub q: f64,
    pub c: f64,
    #[serde(with = "float_or_inf")]
    pub ratio: f64,
    #[serde(with = "float_or_inf")]
    pub expected_time: f64,
}

impl PolicyStats {
    pub fn new(q: f64, c: f64) -> Self {
        PolicyStats {
            q,
            c,
            ratio: q / c,
            expected_time: if q > 0.0 { c / q } else { f64::INFINITY },
        }
    }
}

/// Plays every run against `rule` and aggregates (q, c).
pub fn evaluate_rule<R: TokenRule + ?Sized>(
    rule: &R,
    runs: &[DiscretizedRun],
    weights: Option<&[f64]>,
) -> Result<PolicyStats> {
    if runs.is_empty() {
        return Err(Error::param("cannot evaluate a rule on zero runs"));
    }
    let weights = resolve_weights(runs.len(), weights)?;
    let mut q_terms = Vec::with_capacity(runs.len());
    let mut c_terms = Vec::with_capacity(runs.len());
    for (run, &w) in runs.iter().zip(&weights) {
        let n = rule.observed_len(&run.tokens).min(run.len());
        let cost: f64 = run.costs[..n].iter().sum();
        if run.tokens[..n].last().is_some_and(|t| t.is_success()) {
            q_terms.push(w);
        }
        c_terms.push(w * cost);
    }
    Ok(PolicyStats::new(
        compensated_sum(q_terms),
        compensated_sum(c_terms),
    ))
}

/// (q, c) of a tree rule measured directly on trie masses.
pub fn stats_on_trie(trie: &WeightedTrie, tree: &StoppingTree) -> PolicyStats {
    let mut q_terms = Vec::new();
    let mut c_terms = Vec::new();
    // (trie node, rule node or None when off the rule tree)
    let mut stack: Vec<(NodeId, Option<usize>)> = vec![(ROOT, Some(0))];
    while let Some((tn, rn)) = stack.pop() {
        for &(token, child) in trie.node(tn).children() {
            let node = trie.node(child);
            q_terms.push(if node.is_success() { node.mass() } else { 0.0 });
            c_terms.push(node.cost_mass());
            if node.is_success() {
                continue;
            }
            let next = rn.and_then(|r| tree.child(r, token));
            let cont = match (rn, next) {
                (_, Some(r)) => tree.nodes[r].cont,
                (Some(_), None) | (None, None) => {
                    tree.unseen_action == UnseenAction::ContinueAsAncestor
                }
            };
            if cont {
                stack.push((child, next));
            }
        }
    }
    PolicyStats::new(compensated_sum(q_terms), compensated_sum(c_terms))
}

#[derive(Serialize, Deserialize)]
struct SerializedTree {
    unseen_action: UnseenAction,
    continue_prefixes: Vec<Vec<Token>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    stop_prefixes: Vec<Vec<Token>>,
}

impl Serialize for StoppingTree {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        SerializedTree {
            unseen_action: self.unseen_action,
            continue_prefixes: self.continue_prefixes(),
            stop_prefixes: self.stop_prefixes(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for StoppingTree {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = SerializedTree::deserialize(deserializer)?;
        StoppingTree::from_prefixes(raw.continue_prefixes, raw.stop_prefixes, raw.unseen_action)
            .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::trie::build_trie;
    use Token::{Bucket, Success};

    fn two_sequence() -> Vec<DiscretizedRun> {
        vec![
            DiscretizedRun::unit(vec![Success]),
            DiscretizedRun::unit(vec![Bucket(1), Bucket(1), Bucket(1)]),
        ]
    }

    #[test]
    fn never_stop_on_two_sequence() {
        let s = evaluate_rule(&FixedThreshold::never(), &two_sequence(), None).unwrap();
        assert_eq!((s.q, s.c, s.expected_time), (0.5, 2.0, 4.0));
    }

    #[test]
    fn root_only_rule_on_two_sequence() {
        let rule = StoppingTree::root_only(UnseenAction::Stop);
        let s = evaluate_rule(&rule, &two_sequence(), None).unwrap();
        assert_eq!((s.q, s.c, s.expected_time), (0.5, 1.0, 2.0));
    }

    #[test]
    fn all_success_runs() {
        let runs = vec![DiscretizedRun::unit(vec![Success]); 3];
        let s = evaluate_rule(&StoppingTree::root_only(UnseenAction::Stop), &runs, None).unwrap();
        assert!((s.q - 1.0).abs() < 1e-15 && (s.c - 1.0).abs() < 1e-15);
        let s = evaluate_rule(&FixedThreshold::new(5).unwrap(), &runs, None).unwrap();
        assert!((s.q - 1.0).abs() < 1e-15 && (s.c - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fixed_thresholds_on_two_sequence() {
        let s1 = evaluate_rule(&fixed_threshold_rule(1).unwrap(), &two_sequence(), None).unwrap();
        assert_eq!((s1.q, s1.c), (0.5, 1.0));
        let s3 = evaluate_rule(&fixed_threshold_rule(3).unwrap(), &two_sequence(), None).unwrap();
        assert_eq!((s3.q, s3.c), (0.5, 2.0));
        assert!(fixed_threshold_rule(0).is_err());
    }

    #[test]
    fn prefix_closure_enforced() {
        let bad = StoppingTree::from_prefixes(
            vec![vec![Bucket(1), Bucket(2)]],
            vec![],
            UnseenAction::Stop,
        );
        assert!(bad.is_err());
        let success = StoppingTree::from_prefixes(vec![vec![Success]], vec![], UnseenAction::Stop);
        assert!(success.is_err());
        let ok = StoppingTree::from_prefixes(
            vec![vec![Bucket(1)], vec![Bucket(1), Bucket(2)], vec![]],
            vec![vec![Bucket(2)]],
            UnseenAction::Stop,
        )
        .unwrap();
        assert_eq!(ok.continue_count(), 3);
        assert!(ok.contains(&[]));
        assert!(ok.contains(&[Bucket(1), Bucket(2)]));
        assert!(!ok.contains(&[Bucket(2)]));
    }

    #[test]
    fn unseen_action_semantics() {
        let stop = StoppingTree::from_prefixes(
            vec![vec![Bucket(1)]],
            vec![vec![Bucket(2)]],
            UnseenAction::Stop,
        )
        .unwrap();
        let cont = stop
            .clone()
            .with_unseen_action(UnseenAction::ContinueAsAncestor);
        let unseen = [Bucket(3), Bucket(1), Bucket(1)];
        assert_eq!(stop.observed_len(&unseen), 1);
        assert_eq!(cont.observed_len(&unseen), 3);
        // a known stop prefix stops regardless of the unseen action
        assert_eq!(cont.observed_len(&[Bucket(2), Bucket(1)]), 1);
        // leaving the tree below a continue node
        assert_eq!(stop.observed_len(&[Bucket(1), Bucket(4), Bucket(1)]), 2);
        assert_eq!(cont.observed_len(&[Bucket(1), Bucket(4), Bucket(1)]), 3);
        assert!(cont.continues_after(&[Bucket(1), Bucket(4)]));
        assert!(!stop.continues_after(&[Bucket(1), Bucket(4)]));
        assert!(!cont.continues_after(&[Bucket(1), Success]));
    }

    #[test]
    fn trie_stats_match_playout() {
        let runs = vec![
            DiscretizedRun::new(vec![Bucket(1), Success], vec![1.0, 2.0], "a").unwrap(),
            DiscretizedRun::new(vec![Bucket(2), Bucket(1)], vec![1.5, 1.0], "b").unwrap(),
            DiscretizedRun::new(
                vec![Bucket(2), Bucket(2), Success],
                vec![1.0, 1.0, 1.0],
                "c",
            )
            .unwrap(),
        ];
        let trie = build_trie(&runs, None).unwrap();
        let trees = [
            StoppingTree::root_only(UnseenAction::Stop),
            StoppingTree::root_only(UnseenAction::ContinueAsAncestor),
            StoppingTree::from_prefixes(vec![vec![Bucket(2)]], vec![], UnseenAction::Stop).unwrap(),
            StoppingTree::from_prefixes(
                vec![vec![Bucket(2)]],
                vec![vec![Bucket(1)]],
                UnseenAction::ContinueAsAncestor,
            )
            .unwrap(),
        ];
        for tree in &trees {
            let a = stats_on_trie(&trie, tree);
            let b = evaluate_rule(tree, &runs, None).unwrap();
            assert!(
                (a.q - b.q).abs() < 1e-12 && (a.c - b.c).abs() < 1e-12,
                "{tree:?}"
            );
        }
    }

    #[test]
    fn serde_round_trip() {
        let tree = StoppingTree::from_prefixes(
            vec![vec![Bucket(1)], vec![Bucket(1), Bucket(3)]],
            vec![vec![Bucket(2)]],
            UnseenAction::ContinueAsAncestor,
        )
        .unwrap();
        let json = serde_json::to_string(&tree).unwrap();
        assert_eq!(
            json,
            r#"{"unseen_action":"continue-as-deepest-ancestor","continue_prefixes":[[],[1],[1,3]],"stop_prefixes":[[2]]}"#
        );
        assert_eq!(serde_json::from_str::<StoppingTree>(&json).unwrap(), tree);
        let minimal: StoppingTree =
            serde_json::from_str(r#"{"unseen_action":"stop","continue_prefixes":[[2]]}"#).unwrap();
        assert!(minimal.contains(&[Bucket(2)]));
    }

    #[test]
    fn stats_identity() {
        let s = PolicyStats::new(0.25, 2.0);
        assert!((s.ratio * s.expected_time - 1.0).abs() < 1e-15);
        assert_eq!(PolicyStats::new(0.0, 1.0).expected_time, f64::INFINITY);
    }
}
