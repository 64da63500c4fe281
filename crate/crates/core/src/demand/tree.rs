//! Finite scenario trees.
//!
//! A virtual root sits at time 0. Real nodes live on levels `1..=depth`, each
//! covering one interval of length `1/depth`; one decision per node is what
//! makes a tree policy non-anticipating.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_bounds, check_level, DemandError, DemandPath};

pub const MAX_TREE_LEAVES: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    /// `None` for children of the virtual root.
    pub parent: Option<usize>,
    /// 1-based level; the node covers `((level-1)/depth, level/depth]`.
    pub level: usize,
    pub value: f64,
    /// Conditional probability given the parent.
    pub prob: f64,
    /// Probability of reaching this node.
    pub path_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTree {
    nodes: Vec<TreeNode>,
    children: Vec<Vec<usize>>,
    roots: Vec<usize>,
    leaves: Vec<usize>,
    depth: usize,
    lo: f64,
    hi: f64,
}

impl ScenarioTree {
    /// Validates and indexes a node list. Parents must precede children.
    pub fn from_nodes(nodes: Vec<(Option<usize>, f64, f64)>, lo: f64, hi: f64) -> Result<Self, DemandError> {
        check_bounds(lo, hi)?;
        if nodes.is_empty() {
            return Err(DemandError::Tree("no nodes".into()));
        }
        let mut built: Vec<TreeNode> = Vec::with_capacity(nodes.len());
        let mut children = vec![Vec::new(); nodes.len()];
        let mut roots = Vec::new();
        for (i, (parent, value, prob)) in nodes.into_iter().enumerate() {
            let value = check_level(i, value, lo, hi)?;
            if !(prob > 0.0 && prob <= 1.0 + 1e-12) {
                return Err(DemandError::Tree(format!("node {i} has probability {prob}")));
            }
            let (level, path_prob) = match parent {
                None => {
                    roots.push(i);
                    (1, prob)
                }
                Some(p) if p < i => {
                    children[p].push(i);
                    (built[p].level + 1, built[p].path_prob * prob)
                }
                Some(p) => {
                    return Err(DemandError::Tree(format!(
                        "node {i} lists parent {p}, which does not precede it"
                    )))
                }
            };
            built.push(TreeNode {
                parent,
                level,
                value,
                prob,
                path_prob,
            });
        }
        let leaves: Vec<usize> = (0..built.len()).filter(|&i| children[i].is_empty()).collect();
        let depth = built[leaves[0]].level;
        if let Some(&bad) = leaves.iter().find(|&&l| built[l].level != depth) {
            return Err(DemandError::Tree(format!(
                "leaf {bad} at level {} but depth is {depth}",
                built[bad].level
            )));
        }
        let check_sum = |ids: &[usize], what: String| -> Result<(), DemandError> {
            let s: f64 = ids.iter().map(|&c| built[c].prob).sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(DemandError::Tree(format!("branch probabilities {what} sum to {s}")));
            }
            Ok(())
        };
        check_sum(&roots, "at the root".into())?;
        for (i, ch) in children.iter().enumerate() {
            if !ch.is_empty() {
                check_sum(ch, format!("below node {i}"))?;
            }
        }
        Ok(ScenarioTree {
            nodes: built,
            children,
            roots,
            leaves,
            depth,
            lo,
            hi,
        })
    }

    /// A deterministic path as a one-branch tree.
    pub fn from_path(path: &DemandPath) -> Self {
        let (lo, hi) = path.bounds();
        let nodes = path
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| (i.checked_sub(1), v, 1.0))
            .collect();
        Self::from_nodes(nodes, lo, hi).expect("a valid path is a valid chain")
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.depth as f64
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Node ids from the top level down to `leaf`.
    pub fn path_to(&self, leaf: usize) -> Vec<usize> {
        let mut path = vec![leaf];
        let mut cur = leaf;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    pub fn average(&self) -> f64 {
        self.nodes.iter().map(|n| n.path_prob * n.value).sum::<f64>() * self.dt()
    }
}

/// How child demand levels are generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum ValueRule {
    /// Children spread evenly over `parent ± step`, clipped to the bounds.
    /// The virtual root carries `start`.
    #[serde(alias = "binary-updown")]
    UpDown { start: f64, step: f64 },
    /// Explicit values per level, in breadth-first order.
    Table { levels: Vec<Vec<f64>> },
    /// `parent + U(-step, step)`, clipped.
    RandomWalk { start: f64, step: f64 },
}

/// How conditional branch probabilities are generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum ProbRule {
    Uniform,
    /// The same conditional probabilities below every node.
    Table {
        probs: Vec<f64>,
    },
    /// Independent normalised uniforms, bounded away from zero.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSpec {
    pub depth: usize,
    pub branching: usize,
    pub values: ValueRule,
    #[serde(default = "uniform")]
    pub probs: ProbRule,
}

fn uniform() -> ProbRule {
    ProbRule::Uniform
}

/// Builds a full tree with `branching^depth` leaves on `[0, 1]` levels.
pub fn build_tree(spec: &TreeSpec, seed: u64) -> Result<ScenarioTree, DemandError> {
    let TreeSpec { depth, branching, .. } = *spec;
    if depth == 0 || branching == 0 {
        return Err(DemandError::Parameter("depth and branching must be positive".into()));
    }
    let leaves = (branching as u128).checked_pow(depth as u32).unwrap_or(u128::MAX);
    if leaves > MAX_TREE_LEAVES as u128 {
        return Err(DemandError::TreeTooLarge { leaves });
    }
    if let ProbRule::Table { probs } = &spec.probs {
        if probs.len() != branching {
            return Err(DemandError::Parameter(format!(
                "probability table has {} entries for branching {branching}",
                probs.len()
            )));
        }
    }
    if let ValueRule::Table { levels } = &spec.values {
        if levels.len() != depth {
            return Err(DemandError::Parameter(format!(
                "value table has {} levels for depth {depth}",
                levels.len()
            )));
        }
        for (l, row) in levels.iter().enumerate() {
            let want = branching.pow(l as u32 + 1);
            if row.len() != want {
                return Err(DemandError::Parameter(format!(
                    "value table level {} has {} entries, needs {want}",
                    l + 1,
                    row.len()
                )));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (0.0, 1.0);
    let offset = |j: usize| {
        if branching == 1 {
            0.0
        } else {
            2.0 * j as f64 / (branching - 1) as f64 - 1.0
        }
    };
    let child_probs = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        match &spec.probs {
            ProbRule::Uniform => vec![1.0 / branching as f64; branching],
            ProbRule::Table { probs } => probs.clone(),
            ProbRule::Random => {
                let raw: Vec<f64> = (0..branching).map(|_| rng.random_range(0.2..1.0)).collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|r| r / s).collect()
            }
        }
    };

    let mut nodes: Vec<(Option<usize>, f64, f64)> = Vec::new();
    // (node id, value) on the previous level; the virtual root first
    let start = match &spec.values {
        ValueRule::UpDown { start, .. } | ValueRule::RandomWalk { start, .. } => *start,
        ValueRule::Table { .. } => 0.0,
    };
    let mut frontier: Vec<(Option<usize>, f64)> = vec![(None, start)];
    for level in 0..depth {
        let mut next = Vec::with_capacity(frontier.len() * branching);
        for (parent, pv) in &frontier {
            let probs = child_probs(&mut rng);
            for (j, prob) in probs.into_iter().enumerate() {
                let value = match &spec.values {
                    ValueRule::UpDown { step, .. } => (pv + step * offset(j)).clamp(lo, hi),
                    ValueRule::RandomWalk { step, .. } => (pv + step * rng.random_range(-1.0..=1.0)).clamp(lo, hi),
                    ValueRule::Table { levels } => levels[level][next.len()],
                };
                nodes.push((*parent, value, prob));
                next.push((Some(nodes.len() - 1), value));
            }
        }
        frontier = next;
    }
    ScenarioTree::from_nodes(nodes, lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn updown(depth: usize, branching: usize, start: f64, step: f64) -> TreeSpec {
        TreeSpec {
            depth,
            branching,
            values: ValueRule::UpDown { start, step },
            probs: ProbRule::Uniform,
        }
    }

    #[test]
    fn single_deterministic_path() {
        let t = build_tree(&updown(1, 1, 0.5, 0.0), 0).unwrap();
        assert_eq!(t.nodes().len(), 1);
        assert_eq!(t.nodes()[0].value, 0.5);
        assert_eq!(t.leaves(), &[0]);
    }

    #[test]
    fn binary_depth_three() {
        let t = build_tree(&updown(3, 2, 0.5, 0.2), 0).unwrap();
        assert_eq!(t.leaves().len(), 8);
        assert_eq!(t.nodes().len(), 14);
        let total: f64 = t.leaves().iter().map(|&l| t.nodes()[l].path_prob).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let top: Vec<f64> = t.roots().iter().map(|&r| t.nodes()[r].value).collect();
        assert!((top[0] - 0.3).abs() < 1e-12 && (top[1] - 0.7).abs() < 1e-12);
        assert_eq!(t.path_to(t.leaves()[0]).len(), 3);
        // up-down values clip at the bounds
        let c = build_tree(&updown(3, 2, 0.9, 0.2), 0).unwrap();
        assert!(c.nodes().iter().all(|n| (0.0..=1.0).contains(&n.value)));
    }

    #[test]
    fn rejects_oversized_and_inconsistent() {
        assert!(matches!(
            build_tree(&updown(14, 2, 0.5, 0.1), 0),
            Err(DemandError::TreeTooLarge { .. })
        ));
        let bad = ScenarioTree::from_nodes(vec![(None, 0.5, 0.6), (None, 0.5, 0.6)], 0.0, 1.0);
        assert!(bad.is_err());
        let ragged = ScenarioTree::from_nodes(vec![(None, 0.5, 0.5), (None, 0.5, 0.5), (Some(0), 0.4, 1.0)], 0.0, 1.0);
        assert!(ragged.is_err());
    }

    #[test]
    fn table_rules() {
        let spec = TreeSpec {
            depth: 2,
            branching: 2,
            values: ValueRule::Table {
                levels: vec![vec![0.2, 0.8], vec![0.1, 0.3, 0.7, 0.9]],
            },
            probs: ProbRule::Table {
                probs: vec![0.25, 0.75],
            },
        };
        let t = build_tree(&spec, 0).unwrap();
        let leaf_values: Vec<f64> = t.leaves().iter().map(|&l| t.nodes()[l].value).collect();
        assert_eq!(leaf_values, vec![0.1, 0.3, 0.7, 0.9]);
        let pp: Vec<f64> = t.leaves().iter().map(|&l| t.nodes()[l].path_prob).collect();
        assert_eq!(pp, vec![0.0625, 0.1875, 0.1875, 0.5625]);
    }

    #[test]
    fn path_embedding() {
        let p = DemandPath::unit(vec![0.1, 0.5, 0.9]).unwrap();
        let t = ScenarioTree::from_path(&p);
        assert_eq!(t.depth(), 3);
        assert_eq!(t.leaves(), &[2]);
        assert!((t.average() - p.average()).abs() < 1e-15);
    }

    #[test]
    fn spec_serde() {
        let s = r#"{"depth":3,"branching":2,"values":{"rule":"binary-updown","start":0.5,"step":0.2}}"#;
        let spec: TreeSpec = serde_json::from_str(s).unwrap();
        assert_eq!(spec, updown(3, 2, 0.5, 0.2));
    }

    proptest! {
        #[test]
        fn leaf_probability_closes(depth in 1usize..5, branching in 1usize..5, seed in any::<u64>()) {
            let spec = TreeSpec {
                depth,
                branching,
                values: ValueRule::RandomWalk { start: 0.5, step: 0.3 },
                probs: ProbRule::Random,
            };
            let t = build_tree(&spec, seed).unwrap();
            let total: f64 = t.leaves().iter().map(|&l| t.nodes()[l].path_prob).sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            prop_assert_eq!(t.leaves().len(), branching.pow(depth as u32));
        }
    }
}
