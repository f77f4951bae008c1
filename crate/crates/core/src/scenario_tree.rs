//! Multi-stage scenario tree over the proportion of untested asymptomatic
//! infections.
//!
//! Every node carries a normal distribution for the proportion. Its children
//! split that distribution into probability bands (0.3 / 0.4 / 0.3 by
//! default) and each child realizes the quantile at the middle of its band,
//! which for the default bands are the 0.15, 0.50 and 0.85 quantiles.
//!
//! Nodes are numbered breadth first, so the root is node 0, its children are
//! 1..=b, and so on. Scenarios are the leaves in the same order; the bundle of
//! any node is therefore a contiguous range of scenario indices.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::normal_quantile;

pub type NodeId = usize;
pub type ScenarioId = usize;

/// Default band probabilities for the low, medium and high realizations.
pub const DEFAULT_BRANCH_PROBS: [f64; 3] = [0.3, 0.4, 0.3];

/// Global clamp for realized proportions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for PropBounds {
    fn default() -> Self {
        PropBounds { min: 0.15, max: 0.4 }
    }
}

impl PropBounds {
    pub const UNIT: PropBounds = PropBounds { min: 0.0, max: 1.0 };

    fn validate(&self) -> Result<()> {
        if !(0.0 <= self.min && self.min <= self.max && self.max <= 1.0) {
            return Err(Error::Distribution(format!(
                "proportion bounds [{}, {}] must satisfy 0 <= min <= max <= 1",
                self.min, self.max
            )));
        }
        Ok(())
    }

    fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeDistribution {
    pub mean: f64,
    pub std: f64,
    #[serde(default = "default_lower_q")]
    pub lower_q: f64,
    #[serde(default = "default_upper_q")]
    pub upper_q: f64,
}

fn default_lower_q() -> f64 {
    0.001
}
fn default_upper_q() -> f64 {
    0.999
}

impl NodeDistribution {
    pub fn new(mean: f64, std: f64) -> Self {
        NodeDistribution { mean, std, lower_q: default_lower_q(), upper_q: default_upper_q() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mean) {
            return Err(Error::Distribution(format!("mean {} outside [0, 1]", self.mean)));
        }
        if !(self.std >= 0.0) || !self.std.is_finite() {
            return Err(Error::Distribution(format!("std {} must be finite and >= 0", self.std)));
        }
        if !(0.0 < self.lower_q && self.lower_q < self.upper_q && self.upper_q < 1.0) {
            return Err(Error::Distribution(format!(
                "quantile levels {} and {} must satisfy 0 < lower < upper < 1",
                self.lower_q, self.upper_q
            )));
        }
        Ok(())
    }

    /// Quantile at `level`, with the level truncated to `[lower_q, upper_q]`
    /// and the value clamped to `bounds`.
    pub fn quantile(&self, level: f64, bounds: &PropBounds) -> f64 {
        let level = level.clamp(self.lower_q, self.upper_q);
        bounds.clamp(normal_quantile(level, self.mean, self.std))
    }
}

/// Realizations for branches with the given band probabilities: each branch
/// takes the quantile at the midpoint of its cumulative-probability band.
pub fn branch_realizations(
    dist: &NodeDistribution,
    probs: &[f64],
    bounds: &PropBounds,
) -> Result<Vec<f64>> {
    dist.validate()?;
    bounds.validate()?;
    validate_probs(probs)?;
    let mut cum = 0.0;
    let mut out = Vec::with_capacity(probs.len());
    for &p in probs {
        let mid = cum + 0.5 * p;
        cum += p;
        out.push(dist.quantile(mid, bounds));
    }
    Ok(out)
}

/// Low / medium / high realizations under the default 0.3/0.4/0.3 bands,
/// i.e. the 0.15, 0.50 and 0.85 quantiles.
pub fn conditional_quantiles(dist: &NodeDistribution, bounds: &PropBounds) -> Result<(f64, f64, f64)> {
    let v = branch_realizations(dist, &DEFAULT_BRANCH_PROBS, bounds)?;
    Ok((v[0], v[1], v[2]))
}

fn validate_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::Tree("branch probabilities must not be empty".into()));
    }
    if probs.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
        return Err(Error::Tree(format!("branch probabilities {probs:?} must lie in (0, 1]")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Tree(format!("branch probabilities sum to {sum}, not 1")));
    }
    Ok(())
}

/// Standard deviation assigned to child nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StdPolicy {
    /// Same spread everywhere.
    Constant(f64),
    /// `table[d - 1][b]` is the spread for a child at depth `d` reached
    /// through branch `b`.
    Table(Vec<Vec<f64>>),
}

impl StdPolicy {
    /// Spreads observed in the worked three-stage example: children of the
    /// low branch narrow to 0.0386, children of the high branch widen to
    /// 0.1833, the medium branch keeps the root spread.
    pub fn example_table(stages: usize) -> StdPolicy {
        StdPolicy::Table(vec![vec![0.0386, 0.05, 0.1833]; stages.max(1)])
    }

    fn std_for(&self, depth: usize, branch: usize) -> Result<f64> {
        match self {
            StdPolicy::Constant(s) => Ok(*s),
            StdPolicy::Table(rows) => rows
                .get(depth - 1)
                .and_then(|row| row.get(branch))
                .copied()
                .ok_or_else(|| {
                    Error::Tree(format!("std policy has no entry for depth {depth}, branch {branch}"))
                }),
        }
    }

    fn validate(&self, stages: usize, branching: usize) -> Result<()> {
        match self {
            StdPolicy::Constant(s) if *s >= 0.0 && s.is_finite() => Ok(()),
            StdPolicy::Constant(s) => Err(Error::Tree(format!("constant std {s} must be >= 0"))),
            StdPolicy::Table(rows) => {
                if rows.len() < stages {
                    return Err(Error::Tree(format!(
                        "std policy covers {} stages but {stages} were requested",
                        rows.len()
                    )));
                }
                for (d, row) in rows.iter().take(stages).enumerate() {
                    if row.len() != branching {
                        return Err(Error::Tree(format!(
                            "std policy row {} has {} entries, expected {branching}",
                            d + 1,
                            row.len()
                        )));
                    }
                    if row.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
                        return Err(Error::Tree(format!("std policy row {} has a negative entry", d + 1)));
                    }
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSpec {
    /// Number of branching stages. The tree has `stages + 1` node levels and
    /// `branching^stages` scenarios.
    pub stages: usize,
    pub root: NodeDistribution,
    pub std_policy: StdPolicy,
    #[serde(default = "default_probs")]
    pub branch_probs: Vec<f64>,
    #[serde(default)]
    pub bounds: PropBounds,
}

fn default_probs() -> Vec<f64> {
    DEFAULT_BRANCH_PROBS.to_vec()
}

/// Branch label: with three branches these are Low/Medium/High.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Branch(pub usize);

impl Branch {
    pub const LOW: Branch = Branch(0);
    pub const MEDIUM: Branch = Branch(1);
    pub const HIGH: Branch = Branch(2);

    pub fn label(&self, branching: usize) -> String {
        match (branching, self.0) {
            (3, 0) => "low".into(),
            (3, 1) => "medium".into(),
            (3, 2) => "high".into(),
            (_, b) => format!("b{b}"),
        }
    }

    pub fn parse(s: &str, branching: usize) -> Option<Branch> {
        let b = match s.trim().to_ascii_lowercase().as_str() {
            "low" | "l" if branching == 3 => 0,
            "medium" | "med" | "m" if branching == 3 => 1,
            "high" | "h" if branching == 3 => 2,
            other => other.trim_start_matches('b').parse().ok()?,
        };
        (b < branching).then_some(Branch(b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub id: NodeId,
    pub stage: usize,
    pub parent: Option<NodeId>,
    pub branch: Option<Branch>,
    /// Proportion realized on arrival at this node. The root carries its
    /// distribution mean.
    pub realized_value: f64,
    pub distribution: NodeDistribution,
    /// Conditional probability of this branch given the parent (1 at the root).
    pub branch_prob: f64,
    /// Unconditional probability of reaching this node.
    pub path_prob: f64,
    pub children: Vec<NodeId>,
    /// Scenarios passing through this node.
    pub bundle: Range<ScenarioId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: ScenarioId,
    /// Node ids from the root to the leaf; `path[d]` is the node at depth `d`.
    pub path: Vec<NodeId>,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTree {
    stages: usize,
    branching: usize,
    nodes: Vec<TreeNode>,
    scenarios: Vec<Scenario>,
    /// `levels[d]` lists the node ids at depth `d` in order.
    levels: Vec<Vec<NodeId>>,
}

impl ScenarioTree {
    pub fn build(spec: &TreeSpec) -> Result<ScenarioTree> {
        spec.root.validate()?;
        spec.bounds.validate()?;
        validate_probs(&spec.branch_probs)?;
        let branching = spec.branch_probs.len();
        spec.std_policy.validate(spec.stages, branching)?;

        let root_value = spec.bounds.clamp(spec.root.mean);
        let mut nodes = vec![TreeNode {
            id: 0,
            stage: 0,
            parent: None,
            branch: None,
            realized_value: root_value,
            distribution: spec.root,
            branch_prob: 1.0,
            path_prob: 1.0,
            children: Vec::new(),
            bundle: 0..0,
        }];
        let mut levels = vec![vec![0]];
        for depth in 1..=spec.stages {
            let mut level = Vec::with_capacity(levels[depth - 1].len() * branching);
            for &parent in &levels[depth - 1] {
                let values = branch_realizations(&nodes[parent].distribution, &spec.branch_probs, &spec.bounds)?;
                for (b, (&value, &p)) in values.iter().zip(&spec.branch_probs).enumerate() {
                    let id = nodes.len();
                    let std = spec.std_policy.std_for(depth, b)?;
                    let distribution = NodeDistribution { mean: value, std, ..nodes[parent].distribution };
                    let path_prob = nodes[parent].path_prob * p;
                    nodes.push(TreeNode {
                        id,
                        stage: depth,
                        parent: Some(parent),
                        branch: Some(Branch(b)),
                        realized_value: value,
                        distribution,
                        branch_prob: p,
                        path_prob,
                        children: Vec::new(),
                        bundle: 0..0,
                    });
                    nodes[parent].children.push(id);
                    level.push(id);
                }
            }
            levels.push(level);
        }
        Self::finish(spec.stages, branching, nodes, levels)
    }

    /// Fills in scenarios and bundles once the node list is complete.
    fn finish(stages: usize, branching: usize, mut nodes: Vec<TreeNode>, levels: Vec<Vec<NodeId>>) -> Result<Self> {
        let leaves = &levels[stages];
        let mut scenarios = Vec::with_capacity(leaves.len());
        for (w, &leaf) in leaves.iter().enumerate() {
            let mut path = vec![leaf];
            let mut probability = 1.0;
            let mut cur = leaf;
            while let Some(parent) = nodes[cur].parent {
                probability *= nodes[cur].branch_prob;
                path.push(parent);
                cur = parent;
            }
            path.reverse();
            scenarios.push(Scenario { id: w, path, probability });
        }
        // Leaves are in depth-first order of their ancestors, so each bundle is contiguous.
        for depth in (0..=stages).rev() {
            for &id in &levels[depth] {
                let bundle = if depth == stages {
                    let w = leaves.iter().position(|&l| l == id).expect("leaf is listed");
                    w..w + 1
                } else {
                    let first = nodes[id].children.first().copied();
                    let last = nodes[id].children.last().copied();
                    match (first, last) {
                        (Some(f), Some(l)) => nodes[f].bundle.start..nodes[l].bundle.end,
                        _ => return Err(Error::Tree(format!("interior node {id} has no children"))),
                    }
                };
                nodes[id].bundle = bundle;
            }
        }
        Ok(ScenarioTree { stages, branching, nodes, scenarios, levels })
    }

    /// Number of branching stages (J̄); states are indexed `0..=stages()`.
    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&TreeNode> {
        self.nodes.get(id).ok_or(Error::UnknownNode(id))
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn scenario(&self, w: ScenarioId) -> Result<&Scenario> {
        self.scenarios.get(w).ok_or(Error::UnknownScenario(w))
    }

    pub fn num_scenarios(&self) -> usize {
        self.scenarios.len()
    }

    pub fn level(&self, depth: usize) -> &[NodeId] {
        &self.levels[depth]
    }

    /// Scenarios passing through `node` (β(n)).
    pub fn bundles_at(&self, node: NodeId) -> Result<Range<ScenarioId>> {
        Ok(self.node(node)?.bundle.clone())
    }

    /// Node at `depth` on the path of scenario `w`.
    pub fn node_on_path(&self, w: ScenarioId, depth: usize) -> NodeId {
        self.scenarios[w].path[depth]
    }

    /// Position of the depth-`depth` node of scenario `w` within its level.
    pub fn level_index(&self, w: ScenarioId, depth: usize) -> usize {
        let span = self.branching.pow((self.stages - depth) as u32);
        w / span
    }

    /// Proportions driving each period of scenario `w`: entry `k - 1` is the
    /// value realized at the depth-`k` node, used for the transition into
    /// state `k`.
    pub fn sigma2_path(&self, w: ScenarioId) -> Vec<f64> {
        self.scenarios[w].path[1..].iter().map(|&n| self.nodes[n].realized_value).collect()
    }

    /// Scenario that follows `branch` at every stage.
    pub fn uniform_path(&self, branch: Branch) -> Result<ScenarioId> {
        self.find_path(&vec![branch; self.stages])
    }

    pub fn find_path(&self, branches: &[Branch]) -> Result<ScenarioId> {
        if branches.len() != self.stages {
            return Err(Error::Tree(format!(
                "path has {} branches but the tree has {} stages",
                branches.len(),
                self.stages
            )));
        }
        let mut w = 0;
        for b in branches {
            if b.0 >= self.branching {
                return Err(Error::Tree(format!("branch {} out of range", b.0)));
            }
            w = w * self.branching + b.0;
        }
        Ok(w)
    }

    /// Single-branch tree that follows scenario `w`, with probability one.
    pub fn path_tree(&self, w: ScenarioId) -> Result<ScenarioTree> {
        let path = &self.scenario(w)?.path;
        let nodes = path
            .iter()
            .enumerate()
            .map(|(d, &n)| {
                let src = &self.nodes[n];
                TreeNode {
                    id: d,
                    stage: d,
                    parent: d.checked_sub(1),
                    branch: (d > 0).then_some(Branch(0)),
                    realized_value: src.realized_value,
                    distribution: src.distribution,
                    branch_prob: 1.0,
                    path_prob: 1.0,
                    children: if d + 1 < path.len() { vec![d + 1] } else { Vec::new() },
                    bundle: 0..0,
                }
            })
            .collect();
        let levels = (0..path.len()).map(|d| vec![d]).collect();
        Self::finish(self.stages, 1, nodes, levels)
    }

    pub fn to_dump(&self) -> TreeDump {
        TreeDump {
            stages: self.stages,
            branching: self.branching,
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeDump {
                    id: n.id,
                    stage: n.stage,
                    parent: n.parent,
                    branch: n.branch.map(|b| b.label(self.branching)),
                    value: n.realized_value,
                    prob: n.branch_prob,
                    std: n.distribution.std,
                })
                .collect(),
            scenarios: self
                .scenarios
                .iter()
                .map(|s| ScenarioDump { path: s.path.clone(), probability: s.probability })
                .collect(),
        }
    }

    pub fn from_dump(dump: &TreeDump) -> Result<ScenarioTree> {
        let branching = dump.branching;
        if branching == 0 {
            return Err(Error::Tree("branching must be positive".into()));
        }
        let mut nodes: Vec<TreeNode> = Vec::with_capacity(dump.nodes.len());
        let mut levels: Vec<Vec<NodeId>> = vec![Vec::new(); dump.stages + 1];
        for (i, n) in dump.nodes.iter().enumerate() {
            if n.id != i {
                return Err(Error::Tree(format!("node ids must be dense and ordered, found {} at {i}", n.id)));
            }
            let (path_prob, stage_ok) = match n.parent {
                None => (1.0, n.stage == 0 && i == 0),
                Some(p) if p < i => (nodes[p].path_prob * n.prob, nodes[p].stage + 1 == n.stage),
                Some(p) => return Err(Error::Tree(format!("node {i} refers to later parent {p}"))),
            };
            if !stage_ok || n.stage > dump.stages {
                return Err(Error::Tree(format!("node {i} has inconsistent stage {}", n.stage)));
            }
            let branch = match (&n.branch, n.parent) {
                (None, None) => None,
                (Some(label), Some(_)) => Some(
                    Branch::parse(label, branching)
                        .ok_or_else(|| Error::Tree(format!("bad branch label `{label}`")))?,
                ),
                _ => return Err(Error::Tree(format!("node {i}: branch label must be present iff it has a parent"))),
            };
            if let Some(p) = n.parent {
                nodes[p].children.push(i);
            }
            nodes.push(TreeNode {
                id: i,
                stage: n.stage,
                parent: n.parent,
                branch,
                realized_value: n.value,
                distribution: NodeDistribution::new(n.value, n.std),
                branch_prob: n.prob,
                path_prob,
                children: Vec::new(),
                bundle: 0..0,
            });
            levels[n.stage].push(i);
        }
        for (d, level) in levels.iter().enumerate() {
            if level.len() != branching.pow(d as u32) {
                return Err(Error::Tree(format!("level {d} has {} nodes, expected a uniform tree", level.len())));
            }
        }
        let tree = Self::finish(dump.stages, branching, nodes, levels)?;
        for (s, d) in tree.scenarios.iter().zip(&dump.scenarios) {
            if s.path != d.path || (s.probability - d.probability).abs() > 1e-12 {
                return Err(Error::Tree(format!("scenario {} does not match its node path", s.id)));
            }
        }
        if dump.scenarios.len() != tree.scenarios.len() {
            return Err(Error::Tree("scenario count does not match the node list".into()));
        }
        Ok(tree)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDump {
    pub id: NodeId,
    pub stage: usize,
    pub parent: Option<NodeId>,
    pub branch: Option<String>,
    pub value: f64,
    pub prob: f64,
    #[serde(default)]
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDump {
    pub path: Vec<NodeId>,
    pub probability: f64,
}

/// JSON form of a tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDump {
    pub stages: usize,
    pub branching: usize,
    pub nodes: Vec<NodeDump>,
    pub scenarios: Vec<ScenarioDump>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example_spec(stages: usize, bounds: PropBounds) -> TreeSpec {
        TreeSpec {
            stages,
            root: NodeDistribution::new(0.26, 0.05),
            std_policy: StdPolicy::example_table(stages),
            branch_probs: DEFAULT_BRANCH_PROBS.to_vec(),
            bounds,
        }
    }

    #[test]
    fn root_quantiles() {
        let (l, m, h) = conditional_quantiles(&NodeDistribution::new(0.26, 0.05), &PropBounds::UNIT).unwrap();
        assert!((l - 0.21).abs() <= 0.005);
        assert_eq!(m, 0.26);
        assert!((h - 0.31).abs() <= 0.005);
    }

    #[test]
    fn degenerate_distribution() {
        let q = conditional_quantiles(&NodeDistribution::new(0.26, 0.0), &PropBounds::default()).unwrap();
        assert_eq!(q, (0.26, 0.26, 0.26));
    }

    #[test]
    fn node_one_quantiles() {
        let (l, m, h) = conditional_quantiles(&NodeDistribution::new(0.21, 0.0386), &PropBounds::UNIT).unwrap();
        assert!((l - 0.17).abs() <= 0.005, "{l}");
        assert_eq!(m, 0.21);
        assert!((h - 0.25).abs() <= 0.005, "{h}");
    }

    #[test]
    fn clamping_binds() {
        let (l, m, h) = conditional_quantiles(&NodeDistribution::new(0.31, 0.1833), &PropBounds::default()).unwrap();
        assert_eq!(l, 0.15);
        assert_eq!(m, 0.31);
        assert_eq!(h, 0.4);
    }

    #[test]
    fn rejects_bad_distributions() {
        assert!(conditional_quantiles(&NodeDistribution::new(0.2, -0.1), &PropBounds::UNIT).is_err());
        assert!(conditional_quantiles(&NodeDistribution::new(1.2, 0.1), &PropBounds::UNIT).is_err());
    }

    #[test]
    fn three_stage_example_tree() {
        let tree = ScenarioTree::build(&example_spec(3, PropBounds::UNIT)).unwrap();
        let node3 = tree.node(3).unwrap();
        assert_eq!(node3.children, vec![10, 11, 12]);
        let vals: Vec<f64> = node3.children.iter().map(|&c| tree.node(c).unwrap().realized_value).collect();
        for (v, want) in vals.iter().zip([0.12, 0.31, 0.50]) {
            assert!((v - want).abs() <= 0.01, "{vals:?}");
        }
        assert_eq!(tree.num_scenarios(), 27);
    }

    #[test]
    fn zero_stage_tree_is_single_node() {
        let tree = ScenarioTree::build(&example_spec(0, PropBounds::default())).unwrap();
        assert_eq!(tree.nodes().len(), 1);
        assert_eq!(tree.num_scenarios(), 1);
        assert_eq!(tree.scenarios()[0].probability, 1.0);
        assert!(tree.sigma2_path(0).is_empty());
    }

    #[test]
    fn two_stage_low_low_probability() {
        let tree = ScenarioTree::build(&example_spec(2, PropBounds::default())).unwrap();
        let w = tree.find_path(&[Branch::LOW, Branch::LOW]).unwrap();
        assert!((tree.scenarios()[w].probability - 0.09).abs() < 1e-15);
        assert_eq!(tree.num_scenarios(), 9);
    }

    #[test]
    fn bundles() {
        let tree = ScenarioTree::build(&example_spec(2, PropBounds::default())).unwrap();
        assert_eq!(tree.bundles_at(0).unwrap(), 0..9);
        // Enumerate all 9 paths and count those through node 1.
        let through_1 = tree.scenarios().iter().filter(|s| s.path.contains(&1)).count();
        assert_eq!(tree.bundles_at(1).unwrap().len(), through_1);
        assert_eq!(through_1, 3);
        for &leaf in tree.level(2) {
            assert_eq!(tree.bundles_at(leaf).unwrap().len(), 1);
        }
        assert!(matches!(tree.bundles_at(99), Err(Error::UnknownNode(99))));
    }

    #[test]
    fn rejects_bad_probs_and_short_std_table() {
        let mut spec = example_spec(2, PropBounds::default());
        spec.branch_probs = vec![0.3, 0.3, 0.3];
        assert!(ScenarioTree::build(&spec).is_err());
        let mut spec = example_spec(3, PropBounds::default());
        spec.std_policy = StdPolicy::Table(vec![vec![0.05; 3]; 2]);
        assert!(ScenarioTree::build(&spec).is_err());
        spec.std_policy = StdPolicy::Table(vec![]);
        assert!(ScenarioTree::build(&spec).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let tree = ScenarioTree::build(&example_spec(3, PropBounds::default())).unwrap();
        let json = serde_json::to_string(&tree.to_dump()).unwrap();
        let back = ScenarioTree::from_dump(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.num_scenarios(), tree.num_scenarios());
        for (a, b) in back.nodes().iter().zip(tree.nodes()) {
            assert_eq!(a.realized_value, b.realized_value);
            assert_eq!(a.bundle, b.bundle);
        }
    }

    #[test]
    fn level_index_matches_path() {
        let tree = ScenarioTree::build(&example_spec(3, PropBounds::default())).unwrap();
        for w in 0..tree.num_scenarios() {
            for d in 0..=3 {
                let node = tree.node_on_path(w, d);
                assert_eq!(tree.level(d)[tree.level_index(w, d)], node);
            }
        }
    }

    proptest! {
        #[test]
        fn probability_mass_and_partition(stages in 0usize..6, three in proptest::bool::ANY, std in 0.0f64..0.2) {
            let probs = if three { DEFAULT_BRANCH_PROBS.to_vec() } else { vec![0.45, 0.55] };
            let b = probs.len();
            let spec = TreeSpec {
                stages,
                root: NodeDistribution::new(0.26, 0.05),
                std_policy: StdPolicy::Constant(std),
                branch_probs: probs,
                bounds: PropBounds::default(),
            };
            let tree = ScenarioTree::build(&spec).unwrap();
            prop_assert_eq!(tree.num_scenarios(), b.pow(stages as u32));
            let total: f64 = tree.scenarios().iter().map(|s| s.probability).sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            for d in 0..=stages {
                let mut covered = vec![0; tree.num_scenarios()];
                for &n in tree.level(d) {
                    for w in tree.bundles_at(n).unwrap() {
                        covered[w] += 1;
                        prop_assert_eq!(tree.node_on_path(w, d), n);
                    }
                }
                prop_assert!(covered.iter().all(|&c| c == 1));
            }
        }

        #[test]
        fn quantiles_monotone(mean in 0.0f64..=1.0, std in 0.0f64..0.5) {
            let (l, m, h) = conditional_quantiles(&NodeDistribution::new(mean, std), &PropBounds::default()).unwrap();
            prop_assert!(l <= m && m <= h);
            let (l2, m2, h2) = conditional_quantiles(&NodeDistribution::new(mean, std), &PropBounds::default()).unwrap();
            prop_assert_eq!((l, m, h), (l2, m2, h2));
        }
    }
}
