//! Weighted prefix tree over discretized runs.

use crate::discretize::{DiscretizedRun, Token};
use crate::error::{Error, Result};

/// Tolerance on the sum of run weights.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

pub type NodeId = usize;

pub const ROOT: NodeId = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct TrieNode {
    label: Option<Token>,
    mass: f64,
    /// Sum over runs through this node of weight times the cost of this step.
    cost_mass: f64,
    end_mass: f64,
    children: Vec<(Token, NodeId)>,
}

impl TrieNode {
    pub fn label(&self) -> Option<Token> {
        self.label
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Mass-weighted mean cost of this observation.
    pub fn step_cost(&self) -> f64 {
        self.cost_mass / self.mass
    }

    /// `mass * step_cost`, kept as accumulated to avoid a round trip.
    pub fn cost_mass(&self) -> f64 {
        self.cost_mass
    }

    /// Mass of runs whose sequence ends at this node.
    pub fn end_mass(&self) -> f64 {
        self.end_mass
    }

    pub fn is_success(&self) -> bool {
        self.label == Some(Token::Success)
    }

    pub fn children(&self) -> &[(Token, NodeId)] {
        &self.children
    }
}

/// Prefix tree of observation sequences with probability masses.
///
/// Nodes are stored so that every child has a larger index than its
/// parent; iterating in reverse visits leaves before their ancestors.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedTrie {
    nodes: Vec<TrieNode>,
    total_success_mass: f64,
    run_count: usize,
}

/// Checks explicit weights or builds uniform ones.
pub(crate) fn resolve_weights(count: usize, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    match weights {
        None => Ok(vec![1.0 / count as f64; count]),
        Some(w) => {
            if w.len() != count {
                return Err(Error::param(format!(
                    "{} weights for {} runs",
                    w.len(),
                    count
                )));
            }
            if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::param("run weights must be positive"));
            }
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
                return Err(Error::param(format!(
                    "run weights sum to {total}, expected 1"
                )));
            }
            Ok(w.to_vec())
        }
    }
}

pub fn build_trie(runs: &[DiscretizedRun], weights: Option<&[f64]>) -> Result<WeightedTrie> {
    if runs.is_empty() {
        return Err(Error::param("cannot build a trie from zero runs"));
    }
    let weights = resolve_weights(runs.len(), weights)?;
    let mut nodes = vec![TrieNode {
        label: None,
        mass: 0.0,
        cost_mass: 0.0,
        end_mass: 0.0,
        children: Vec::new(),
    }];
    for (run, &w) in runs.iter().zip(&weights) {
        run.validate()?;
        nodes[ROOT].mass += w;
        let mut node = ROOT;
        for (&token, &cost) in run.tokens.iter().zip(&run.costs) {
            let next = match nodes[node]
                .children
                .binary_search_by(|(t, _)| t.cmp(&token))
            {
                Ok(i) => nodes[node].children[i].1,
                Err(i) => {
                    let id = nodes.len();
                    nodes[node].children.insert(i, (token, id));
                    nodes.push(TrieNode {
                        label: Some(token),
                        mass: 0.0,
                        cost_mass: 0.0,
                        end_mass: 0.0,
                        children: Vec::new(),
                    });
                    id
                }
            };
            nodes[next].mass += w;
            nodes[next].cost_mass += w * cost;
            node = next;
        }
        nodes[node].end_mass += w;
    }
    // leaves-to-root, in child order, so it matches the subtree recursion bit for bit
    let mut below = vec![0.0f64; nodes.len()];
    for id in (0..nodes.len()).rev() {
        let sum: f64 = nodes[id].children.iter().map(|&(_, c)| below[c]).sum();
        below[id] = if nodes[id].is_success() {
            nodes[id].mass
        } else {
            sum
        };
    }
    let total_success_mass = below[ROOT];
    Ok(WeightedTrie {
        nodes,
        total_success_mass,
        run_count: runs.len(),
    })
}

impl WeightedTrie {
    pub fn root(&self) -> &TrieNode {
        &self.nodes[ROOT]
    }

    pub fn node(&self, id: NodeId) -> &TrieNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[TrieNode] {
        &self.nodes
    }

    /// Number of nodes, excluding the root.
    pub fn node_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn total_success_mass(&self) -> f64 {
        self.total_success_mass
    }

    pub fn run_count(&self) -> usize {
        self.run_count
    }

    pub fn child(&self, node: NodeId, token: Token) -> Option<NodeId> {
        let children = &self.nodes[node].children;
        children
            .binary_search_by(|(t, _)| t.cmp(&token))
            .ok()
            .map(|i| children[i].1)
    }

    /// Smallest per-step cost over all non-root nodes.
    pub fn min_step_cost(&self) -> f64 {
        self.nodes[1..]
            .iter()
            .map(TrieNode::step_cost)
            .fold(f64::INFINITY, f64::min)
    }

    /// Token path from the root to `node`.
    pub fn prefix_of(&self, node: NodeId) -> Vec<Token> {
        let parents = self.parents();
        let mut path = Vec::new();
        let mut cur = node;
        while cur != ROOT {
            path.push(self.nodes[cur].label.expect("non-root nodes are labelled"));
            cur = parents[cur];
        }
        path.reverse();
        path
    }

    pub(crate) fn parents(&self) -> Vec<NodeId> {
        let mut parents = vec![ROOT; self.nodes.len()];
        for (id, node) in self.nodes.iter().enumerate() {
            for &(_, c) in &node.children {
                parents[c] = id;
            }
        }
        parents
    }
}
