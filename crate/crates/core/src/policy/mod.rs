//! Stopping rules over token sequences: the weighted trie, the
//! `delta(r)` subtree recursion, the bisection search for the best
//! benefit-to-cost ratio, and an exhaustive reference search.

pub mod brute;
pub mod search;
pub mod tree;
pub mod trie;

pub use brute::{brute_force_optimal, BruteForceOptimum, DEFAULT_NODE_LIMIT};
pub use search::{delta, delta_value, find_stopping_rule, FoundRule};
pub use tree::{
    evaluate_rule, fixed_threshold_rule, stats_on_trie, FixedThreshold, PolicyStats, StoppingTree,
    TokenRule, TreeCursor, TreeState, UnseenAction,
};
pub use trie::{build_trie, TrieNode, WeightedTrie};
