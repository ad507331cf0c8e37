//! Quantile discretization of raw curves into a finite token alphabet.
//!
//! At each stored prefix the runs that are still going and have not yet
//! succeeded are ranked by their next value and split into `K` near-equal
//! buckets. Test-time mapping compares against the per-bucket maxima seen at
//! fit time, so training and held-out curves go through the same thresholds.

use std::cmp::Ordering;
use std::fmt;

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::curve::{Curve, CurveDataset, SuccessSpec};
use crate::error::{Error, Result};

/// One observation symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Token {
    /// 1-based quantile bucket.
    Bucket(u16),
    /// The success symbol; always the last token of a run.
    Success,
}

impl Token {
    pub fn is_success(self) -> bool {
        matches!(self, Token::Success)
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Bucket(b) => write!(f, "{b}"),
            Token::Success => f.write_str("S"),
        }
    }
}

impl Serialize for Token {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Token::Bucket(b) => serializer.serialize_u16(*b),
            Token::Success => serializer.serialize_str("S"),
        }
    }
}

impl<'de> Deserialize<'de> for Token {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Bucket(u16),
            Symbol(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Bucket(0) => Err(de::Error::custom("bucket tokens are 1-based")),
            Raw::Bucket(b) => Ok(Token::Bucket(b)),
            Raw::Symbol(s) if s == "S" => Ok(Token::Success),
            Raw::Symbol(s) => Err(de::Error::custom(format!("unknown token {s:?}"))),
        }
    }
}

/// A curve rewritten as tokens, truncated at the first success.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedRun {
    pub tokens: Vec<Token>,
    pub costs: Vec<f64>,
    pub source_id: String,
}

impl DiscretizedRun {
    /// Unit-cost run, mostly for tests and hand-built instances.
    pub fn unit(tokens: Vec<Token>) -> Self {
        let costs = vec![1.0; tokens.len()];
        DiscretizedRun {
            tokens,
            costs,
            source_id: String::new(),
        }
    }

    pub fn new(tokens: Vec<Token>, costs: Vec<f64>, source_id: impl Into<String>) -> Result<Self> {
        let run = DiscretizedRun {
            tokens,
            costs,
            source_id: source_id.into(),
        };
        run.validate()?;
        Ok(run)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::InvalidCurve("discretized run is empty".into()));
        }
        if self.tokens.len() != self.costs.len() {
            return Err(Error::InvalidCurve(
                "tokens and costs differ in length".into(),
            ));
        }
        if let Some(pos) = self.tokens.iter().position(|t| t.is_success()) {
            if pos + 1 != self.tokens.len() {
                return Err(Error::InvalidCurve(
                    "success token must be the final token".into(),
                ));
            }
        }
        if self.costs.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::InvalidCurve("costs must be positive".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn succeeded(&self) -> bool {
        self.tokens.last().is_some_and(|t| t.is_success())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct DiscNode {
    cuts: Vec<f64>,
    /// (bucket, node index), sorted by bucket.
    children: Vec<(u16, usize)>,
}

/// Fitted prefix-conditional quantile discretizer.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileDiscretizer {
    buckets: u16,
    min_count: usize,
    trained_target: SuccessSpec,
    nodes: Vec<DiscNode>,
}

#[inline]
fn bucket_for(cuts: &[f64], buckets: u16, value: f64) -> u16 {
    match cuts.iter().position(|&c| value <= c) {
        Some(j) => j as u16 + 1,
        None => buckets,
    }
}

pub fn fit_discretizer(
    dataset: &CurveDataset,
    spec: &SuccessSpec,
    buckets: usize,
    min_count: usize,
) -> Result<QuantileDiscretizer> {
    if buckets < 1 {
        return Err(Error::param("bucket count K must be at least 1"));
    }
    if buckets > u16::MAX as usize {
        return Err(Error::param("bucket count K too large"));
    }
    if min_count < 1 {
        return Err(Error::param("min_count must be at least 1"));
    }
    if dataset.is_empty() {
        return Err(Error::param("cannot fit a discretizer on an empty dataset"));
    }
    let mut disc = QuantileDiscretizer {
        buckets: buckets as u16,
        min_count,
        trained_target: *spec,
        nodes: Vec::new(),
    };
    let members: Vec<usize> = (0..dataset.len()).collect();
    disc.fit_node(dataset.curves(), members, 0, true);
    Ok(disc)
}

impl QuantileDiscretizer {
    /// Fits the node for prefixes of length `depth` reached by `members`.
    /// Returns the node index, or `None` when the node is not stored.
    fn fit_node(
        &mut self,
        curves: &[Curve],
        members: Vec<usize>,
        depth: usize,
        is_root: bool,
    ) -> Option<usize> {
        let target = self.trained_target;
        let mut continuing: Vec<usize> = members
            .into_iter()
            .filter(|&i| {
                curves[i]
                    .values
                    .get(depth)
                    .is_some_and(|&v| !target.is_success(v))
            })
            .collect();
        if continuing.is_empty() && !is_root {
            return None;
        }
        continuing.sort_by(|&a, &b| {
            curves[a].values[depth]
                .total_cmp(&curves[b].values[depth])
                .then_with(|| curves[a].id.cmp(&curves[b].id))
        });

        let k = self.buckets as usize;
        let m = continuing.len();
        let mut maxima: Vec<Option<f64>> = vec![None; k];
        for (rank0, &i) in continuing.iter().enumerate() {
            let b = (rank0 * k / m).min(k - 1);
            let v = curves[i].values[depth];
            maxima[b] = Some(maxima[b].map_or(v, |cur: f64| cur.max(v)));
        }
        let mut cuts = Vec::with_capacity(k - 1);
        let mut last = f64::MAX;
        for slot in maxima.iter().take(k - 1) {
            if let Some(v) = slot {
                last = *v;
            } else if cuts.is_empty() {
                last = f64::MAX;
            }
            cuts.push(last);
        }

        let index = self.nodes.len();
        self.nodes.push(DiscNode {
            cuts: cuts.clone(),
            children: Vec::new(),
        });

        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
        for &i in &continuing {
            let b = bucket_for(&cuts, self.buckets, curves[i].values[depth]);
            groups[b as usize - 1].push(i);
        }
        let mut children = Vec::new();
        for (b0, group) in groups.into_iter().enumerate() {
            if group.len() >= self.min_count {
                if let Some(child) = self.fit_node(curves, group, depth + 1, false) {
                    children.push((b0 as u16 + 1, child));
                }
            }
        }
        self.nodes[index].children = children;
        Some(index)
    }

    pub fn buckets(&self) -> usize {
        self.buckets as usize
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn trained_target(&self) -> SuccessSpec {
        self.trained_target
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Cut points stored for `prefix` (a sequence of bucket labels), if stored.
    pub fn cuts_at(&self, prefix: &[u16]) -> Option<&[f64]> {
        let mut node = 0;
        for b in prefix {
            node = self.child(node, *b)?;
        }
        Some(&self.nodes[node].cuts)
    }

    fn child(&self, node: usize, bucket: u16) -> Option<usize> {
        let children = &self.nodes[node].children;
        children
            .binary_search_by(|(b, _)| b.cmp(&bucket))
            .ok()
            .map(|i| children[i].1)
    }

    pub fn cursor(&self) -> DiscretizerCursor<'_> {
        DiscretizerCursor {
            disc: self,
            state: DiscretizerState::default(),
        }
    }

    /// Token for the next observed value of a run whose walk so far is
    /// `state`. Values at or above the fitted target map to
    /// [`Token::Success`].
    pub fn step(&self, state: &mut DiscretizerState, value: f64) -> Token {
        if self.trained_target.is_success(value) {
            return Token::Success;
        }
        let b = bucket_for(&self.nodes[state.node].cuts, self.buckets, value);
        if !state.off_tree {
            match self.child(state.node, b) {
                Some(child) => state.node = child,
                None => state.off_tree = true,
            }
        }
        Token::Bucket(b)
    }

    fn check_target(&self, spec: &SuccessSpec) -> Result<()> {
        if spec.target != self.trained_target.target {
            return Err(Error::TargetMismatch {
                trained: self.trained_target.target,
                requested: spec.target,
            });
        }
        Ok(())
    }

    pub fn discretize(&self, curve: &Curve, spec: &SuccessSpec) -> Result<DiscretizedRun> {
        self.check_target(spec)?;
        let mut cursor = self.cursor();
        let mut tokens = Vec::with_capacity(curve.len());
        let mut costs = Vec::with_capacity(curve.len());
        for (t, &v) in curve.values.iter().enumerate() {
            let token = cursor.step(v);
            tokens.push(token);
            costs.push(curve.cost(t));
            if token.is_success() {
                break;
            }
        }
        Ok(DiscretizedRun {
            tokens,
            costs,
            source_id: curve.id.clone(),
        })
    }

    pub fn discretize_all(
        &self,
        dataset: &CurveDataset,
        spec: &SuccessSpec,
    ) -> Result<Vec<DiscretizedRun>> {
        dataset
            .curves()
            .iter()
            .map(|c| self.discretize(c, spec))
            .collect()
    }
}

/// Position of one run's walk through the stored tree.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DiscretizerState {
    node: usize,
    off_tree: bool,
}

impl DiscretizerState {
    /// True once the walked prefix has left the stored tree; later tokens
    /// use the cut points of the deepest stored ancestor.
    pub fn off_tree(&self) -> bool {
        self.off_tree
    }
}

/// Incremental discretizer walk over one run.
#[derive(Debug, Clone)]
pub struct DiscretizerCursor<'a> {
    disc: &'a QuantileDiscretizer,
    state: DiscretizerState,
}

impl DiscretizerCursor<'_> {
    pub fn step(&mut self, value: f64) -> Token {
        self.disc.step(&mut self.state, value)
    }

    pub fn off_tree(&self) -> bool {
        self.state.off_tree
    }
}

#[derive(Serialize, Deserialize)]
struct SerializedNode {
    prefix: Vec<u16>,
    cuts: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SerializedDiscretizer {
    buckets: u16,
    min_count: usize,
    target: f64,
    nodes: Vec<SerializedNode>,
}

impl Serialize for QuantileDiscretizer {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(0usize, Vec::new())];
        while let Some((node, prefix)) = stack.pop() {
            for &(b, child) in self.nodes[node].children.iter().rev() {
                let mut p: Vec<u16> = prefix.clone();
                p.push(b);
                stack.push((child, p));
            }
            nodes.push(SerializedNode {
                prefix,
                cuts: self.nodes[node].cuts.clone(),
            });
        }
        SerializedDiscretizer {
            buckets: self.buckets,
            min_count: self.min_count,
            target: self.trained_target.target,
            nodes,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for QuantileDiscretizer {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = SerializedDiscretizer::deserialize(deserializer)?;
        if raw.buckets == 0 {
            return Err(de::Error::custom("bucket count must be at least 1"));
        }
        let mut sorted = raw.nodes;
        sorted.sort_by(|a, b| {
            a.prefix
                .len()
                .cmp(&b.prefix.len())
                .then_with(|| a.prefix.cmp(&b.prefix))
        });
        if sorted.first().map(|n| n.prefix.is_empty()) != Some(true) {
            return Err(de::Error::custom("discretizer is missing its root node"));
        }
        let mut disc = QuantileDiscretizer {
            buckets: raw.buckets,
            min_count: raw.min_count,
            trained_target: SuccessSpec { target: raw.target },
            nodes: Vec::with_capacity(sorted.len()),
        };
        for node in sorted {
            if node.cuts.len() != raw.buckets as usize - 1
                || node
                    .cuts
                    .windows(2)
                    .any(|w| w[0].partial_cmp(&w[1]) == Some(Ordering::Greater))
            {
                return Err(de::Error::custom(
                    "cut points must be K-1 non-decreasing values",
                ));
            }
            let index = disc.nodes.len();
            if let Some((&last, parent_prefix)) = node.prefix.split_last() {
                let mut parent = 0;
                for b in parent_prefix {
                    parent = disc
                        .child(parent, *b)
                        .ok_or_else(|| de::Error::custom("discretizer node without a parent"))?;
                }
                let children = &mut disc.nodes[parent].children;
                match children.binary_search_by(|(b, _)| b.cmp(&last)) {
                    Ok(_) => return Err(de::Error::custom("duplicate discretizer node")),
                    Err(pos) => children.insert(pos, (last, index)),
                }
            }
            disc.nodes.push(DiscNode {
                cuts: node.cuts,
                children: Vec::new(),
            });
        }
        Ok(disc)
    }
}
