//! Trees, forests and forward encoding.
//!
//! Trees are flat node arrays rooted at index 0. Leaves carry ordinals
//! `0..L` assigned in pre-order with the false branch visited first, so an
//! ordinal identifies a root-to-leaf path.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rule::{predicate_to_constraint, simplify, Rule};
use crate::schema::{AttributeKind, Bounds, Instance, Schema, Value};
use crate::train::{Mode, TrainConfig};

/// `x[attr] >= threshold` or `x[attr] == category`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeTest {
    Numeric { attr: usize, threshold: f64 },
    Categorical { attr: usize, category: u32 },
}

impl NodeTest {
    pub fn attr(&self) -> usize {
        match *self {
            NodeTest::Numeric { attr, .. } | NodeTest::Categorical { attr, .. } => attr,
        }
    }

    #[inline]
    pub fn evaluate(&self, value: Value) -> bool {
        match (*self, value) {
            (NodeTest::Numeric { threshold, .. }, Value::Number(v)) => v >= threshold,
            (NodeTest::Categorical { category, .. }, Value::Category(c)) => c == category,
            _ => false,
        }
    }

    fn fits(&self, schema: &Schema) -> bool {
        let attr = self.attr();
        if attr >= schema.len() {
            return false;
        }
        match (self, schema.kind(attr)) {
            (NodeTest::Numeric { threshold, .. }, AttributeKind::Numeric) => threshold.is_finite(),
            (NodeTest::Categorical { category, .. }, AttributeKind::Categorical { values }) => {
                (*category as usize) < values.len()
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Internal {
        test: NodeTest,
        false_child: u32,
        true_child: u32,
    },
    Leaf {
        ordinal: u32,
    },
}

const NO_PARENT: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    leaf_count: u32,
    max_depth: u32,
    parents: Vec<u32>,
    leaf_nodes: Vec<u32>,
}

impl Tree {
    /// Validates the node array: every node reachable exactly once from the
    /// root, and leaf ordinals equal to their pre-order rank.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Tree> {
        if nodes.is_empty() {
            return Err(Error::InvalidModel("tree has no nodes".into()));
        }
        let n = nodes.len();
        let mut parents = vec![NO_PARENT; n];
        let mut seen = vec![false; n];
        let mut leaf_nodes = Vec::new();
        let mut max_depth = 0u32;
        // Pre-order walk, false branch first.
        let mut stack = vec![(0u32, 0u32)];
        seen[0] = true;
        while let Some((idx, depth)) = stack.pop() {
            match nodes[idx as usize] {
                Node::Leaf { ordinal } => {
                    if ordinal as usize != leaf_nodes.len() {
                        return Err(Error::InvalidModel(format!(
                            "leaf at node {idx} has ordinal {ordinal}, pre-order rank {}",
                            leaf_nodes.len()
                        )));
                    }
                    leaf_nodes.push(idx);
                    max_depth = max_depth.max(depth);
                }
                Node::Internal {
                    false_child,
                    true_child,
                    ..
                } => {
                    for child in [true_child, false_child] {
                        if child as usize >= n || seen[child as usize] {
                            return Err(Error::InvalidModel(format!(
                                "node {idx} links to invalid or shared child {child}"
                            )));
                        }
                        seen[child as usize] = true;
                        parents[child as usize] = idx;
                        stack.push((child, depth + 1));
                    }
                }
            }
        }
        if let Some(orphan) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidModel(format!("node {orphan} is unreachable")));
        }
        Ok(Tree {
            nodes,
            leaf_count: leaf_nodes.len() as u32,
            max_depth,
            parents,
            leaf_nodes,
        })
    }

    pub fn single_leaf() -> Tree {
        Tree::from_nodes(vec![Node::Leaf { ordinal: 0 }]).expect("single leaf is valid")
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaf_count(&self) -> u32 {
        self.leaf_count
    }

    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    pub(crate) fn check_schema(&self, schema: &Schema) -> Result<()> {
        for (i, node) in self.nodes.iter().enumerate() {
            if let Node::Internal { test, .. } = node {
                if !test.fits(schema) {
                    return Err(Error::InvalidModel(format!(
                        "node {i} test {test:?} does not fit the schema"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Ordinal of the leaf `instance` reaches.
    #[inline]
    pub fn encode(&self, instance: &Instance) -> u32 {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { ordinal } => return *ordinal,
                Node::Internal {
                    test,
                    false_child,
                    true_child,
                } => {
                    idx = if test.evaluate(instance.value(test.attr())) {
                        *true_child as usize
                    } else {
                        *false_child as usize
                    };
                }
            }
        }
    }

    /// Root-to-leaf tests and the direction taken at each.
    pub fn path(&self, ordinal: u32) -> Option<Vec<(NodeTest, bool)>> {
        let mut idx = *self.leaf_nodes.get(ordinal as usize)?;
        let mut path = Vec::new();
        while self.parents[idx as usize] != NO_PARENT {
            let parent = self.parents[idx as usize];
            if let Node::Internal { test, true_child, .. } = self.nodes[parent as usize] {
                path.push((test, true_child == idx));
            }
            idx = parent;
        }
        path.reverse();
        Some(path)
    }

    /// Mean depth of the leaves, each leaf weighted equally.
    pub fn mean_leaf_depth(&self) -> f64 {
        let total: u64 = self
            .leaf_nodes
            .iter()
            .map(|&leaf| {
                let mut depth = 0u64;
                let mut idx = leaf;
                while self.parents[idx as usize] != NO_PARENT {
                    idx = self.parents[idx as usize];
                    depth += 1;
                }
                depth
            })
            .sum();
        total as f64 / self.leaf_count as f64
    }
}

/// Leaf ordinal reached in `tree`.
pub fn tree_encode(tree: &Tree, instance: &Instance) -> u32 {
    tree.encode(instance)
}

/// Decision path of leaf `ordinal` of tree number `tree_index`.
pub fn get_path(tree: &Tree, tree_index: usize, ordinal: u32) -> Result<Vec<(NodeTest, bool)>> {
    tree.path(ordinal).ok_or(Error::LeafIndex {
        tree: tree_index,
        ordinal,
        leaf_count: tree.leaf_count,
    })
}

/// Simplified conjunction of a decision path.
pub fn path_to_rule(path: &[(NodeTest, bool)], schema: &Schema) -> Result<Rule> {
    let raw: Vec<_> = path
        .iter()
        .map(|(test, taken)| predicate_to_constraint(test, *taken, schema))
        .collect();
    simplify(&raw)
}

/// One leaf ordinal per tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Encoding {
    pub leaf_ids: Vec<u32>,
}

impl Encoding {
    pub fn len(&self) -> usize {
        self.leaf_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaf_ids.is_empty()
    }
}

/// Immutable trained ensemble plus everything decoding needs.
#[derive(Debug, Clone)]
pub struct Forest {
    trees: Vec<Tree>,
    schema: Schema,
    bounds: Vec<Option<Bounds>>,
    mode: Option<Mode>,
    seed: u64,
    config: Option<TrainConfig>,
    hash: OnceLock<u64>,
}

impl PartialEq for Forest {
    fn eq(&self, other: &Self) -> bool {
        self.trees == other.trees
            && self.schema == other.schema
            && self.bounds == other.bounds
            && self.mode == other.mode
            && self.seed == other.seed
            && self.config == other.config
    }
}

impl Forest {
    /// Assembles a forest. `bounds` must give finite bounds for every numeric
    /// attribute and `None` for categorical ones.
    pub fn new(
        trees: Vec<Tree>,
        schema: Schema,
        bounds: Vec<Option<Bounds>>,
        mode: Option<Mode>,
        seed: u64,
        config: Option<TrainConfig>,
    ) -> Result<Forest> {
        if trees.is_empty() {
            return Err(Error::InvalidModel("forest needs at least one tree".into()));
        }
        if bounds.len() != schema.len() {
            return Err(Error::InvalidModel(format!(
                "{} bounds for {} attributes",
                bounds.len(),
                schema.len()
            )));
        }
        for (j, b) in bounds.iter().enumerate() {
            match (schema.kind(j), b) {
                (AttributeKind::Numeric, Some(b)) if b.min.is_finite() && b.max.is_finite() && b.min <= b.max => {}
                (AttributeKind::Categorical { .. }, None) => {}
                _ => return Err(Error::InvalidModel(format!("bad bounds for attribute {j}: {b:?}"))),
            }
        }
        for (t, tree) in trees.iter().enumerate() {
            tree.check_schema(&schema)
                .map_err(|e| Error::InvalidModel(format!("tree {t}: {e}")))?;
        }
        Ok(Forest {
            trees,
            schema,
            bounds,
            mode,
            seed,
            config,
            hash: OnceLock::new(),
        })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn bounds(&self) -> &[Option<Bounds>] {
        &self.bounds
    }

    pub fn mode(&self) -> Option<Mode> {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config(&self) -> Option<&TrainConfig> {
        self.config.as_ref()
    }

    /// Keeps only the trees at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Forest> {
        let trees = indices
            .iter()
            .map(|&i| {
                self.trees
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("tree index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Forest::new(
            trees,
            self.schema.clone(),
            self.bounds.clone(),
            self.mode,
            self.seed,
            self.config.clone(),
        )
    }

    /// Content hash of the canonical model serialization, computed once.
    pub fn content_hash(&self) -> u64 {
        *self.hash.get_or_init(|| crate::persist::model_hash(self))
    }
}

pub fn forest_encode(forest: &Forest, instance: &Instance) -> Encoding {
    Encoding {
        leaf_ids: forest.trees.iter().map(|t| t.encode(instance)).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthStats {
    pub max_depth: u32,
    /// Per-tree mean leaf depth, averaged over trees.
    pub mean_depth: f64,
}

pub fn depth_stats(forest: &Forest) -> DepthStats {
    let max_depth = forest.trees.iter().map(Tree::max_depth).max().unwrap_or(0);
    let mean_depth = forest.trees.iter().map(Tree::mean_leaf_depth).sum::<f64>() / forest.trees.len() as f64;
    DepthStats { max_depth, mean_depth }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use crate::rule::{CategorySet, Constraint, Interval};
    use crate::schema::Attribute;

    fn leaf(ordinal: u32) -> Node {
        Node::Leaf { ordinal }
    }

    fn split(test: NodeTest, false_child: u32, true_child: u32) -> Node {
        Node::Internal {
            test,
            false_child,
            true_child,
        }
    }

    fn num(attr: usize, threshold: f64) -> NodeTest {
        NodeTest::Numeric { attr, threshold }
    }

    fn cat(attr: usize, category: u32) -> NodeTest {
        NodeTest::Categorical { attr, category }
    }

    fn example_schema() -> Schema {
        Schema::new(vec![
            Attribute::numeric("x1"),
            Attribute::numeric("x2"),
            Attribute::categorical("x3", ["RED", "BLUE", "GREEN"]),
            Attribute::categorical("x4", ["YES", "NO"]),
        ])
        .unwrap()
    }

    /// Tree whose path (x1≥0)(x2≥1.5)¬(x3==RED)¬(x1≥2.7)¬(x4==NO) ends in the
    /// leaf with ordinal 4. Every other branch is a leaf.
    fn rule1_tree() -> Tree {
        Tree::from_nodes(vec![
            split(num(0, 0.0), 1, 2), // 0
            leaf(0),                  // 1
            split(num(1, 1.5), 3, 4), // 2
            leaf(1),                  // 3
            split(cat(2, 0), 5, 10),  // 4: x3 == RED
            split(num(0, 2.7), 6, 9), // 5
            split(cat(3, 1), 7, 8),   // 6: x4 == NO
            leaf(2),                  // 7
            leaf(3),                  // 8
            leaf(4),                  // 9
            leaf(5),                  // 10
        ])
        .unwrap()
    }

    fn example_instance(s: &Schema) -> Instance {
        Instance::new(
            s,
            vec![
                Value::Number(0.55),
                Value::Number(1.75),
                Value::Category(2),
                Value::Category(0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn rejects_malformed_trees() {
        assert!(Tree::from_nodes(vec![]).is_err());
        // Child out of range.
        assert!(Tree::from_nodes(vec![split(num(0, 1.0), 1, 5), leaf(0)]).is_err());
        // Shared child.
        assert!(Tree::from_nodes(vec![split(num(0, 1.0), 1, 1), leaf(0)]).is_err());
        // Ordinals not in pre-order.
        assert!(Tree::from_nodes(vec![split(num(0, 1.0), 1, 2), leaf(1), leaf(0)]).is_err());
        // Unreachable node.
        assert!(Tree::from_nodes(vec![leaf(0), leaf(1)]).is_err());
        // Cycle back to the root.
        assert!(Tree::from_nodes(vec![split(num(0, 1.0), 1, 0), leaf(0)]).is_err());
    }

    #[test]
    fn single_leaf_encodes_to_zero() {
        let s = example_schema();
        let t = Tree::single_leaf();
        assert_eq!(tree_encode(&t, &example_instance(&s)), 0);
        assert_eq!(get_path(&t, 0, 0).unwrap(), vec![]);
        assert!(path_to_rule(&[], &s).unwrap().is_empty());
    }

    #[test]
    fn rule1_path() {
        let s = example_schema();
        let t = rule1_tree();
        let x = example_instance(&s);
        // The leaf for ¬(x4==NO) is the false child of node 6 (ordinal 2).
        assert_eq!(tree_encode(&t, &x), 2);
        let path = get_path(&t, 0, 2).unwrap();
        let dirs: Vec<bool> = path.iter().map(|p| p.1).collect();
        assert_eq!(dirs, vec![true, true, false, false, false]);
        assert_eq!(
            path.iter().map(|p| p.0).collect::<Vec<_>>(),
            vec![num(0, 0.0), num(1, 1.5), cat(2, 0), num(0, 2.7), cat(3, 1)]
        );
        let rule = path_to_rule(&path, &s).unwrap();
        assert_eq!(
            rule.get(0),
            Some(&Constraint::Interval(Interval::new(0.0, true, 2.7, false).unwrap()))
        );
        assert_eq!(rule.get(1), Some(&Constraint::Interval(Interval::at_least(1.5))));
        assert_eq!(
            rule.get(2),
            Some(&Constraint::Categories(CategorySet::from_values([1, 2])))
        );
        assert_eq!(rule.get(3), Some(&Constraint::Categories(CategorySet::singleton(0))));
        assert!(rule.contains(&x));
    }

    #[test]
    fn leaf_index_out_of_range() {
        let t = rule1_tree();
        assert!(matches!(
            get_path(&t, 3, 6),
            Err(Error::LeafIndex {
                tree: 3,
                ordinal: 6,
                leaf_count: 6
            })
        ));
    }

    /// Random tree over `d` numeric attributes with about `internal` splits.
    pub(crate) fn random_tree(rng: &mut SplitMix64, d: usize, internal: usize) -> Tree {
        // Grow by repeatedly splitting a random leaf, then renumber in pre-order.
        enum Proto {
            Leaf,
            Split(NodeTest, usize, usize),
        }
        let mut protos = vec![Proto::Leaf];
        let mut leaves = vec![0usize];
        for _ in 0..internal {
            let k = rng.below(leaves.len());
            let at = leaves.swap_remove(k);
            let (f, t) = (protos.len(), protos.len() + 1);
            protos.push(Proto::Leaf);
            protos.push(Proto::Leaf);
            protos[at] = Proto::Split(num(rng.below(d), (rng.next_f64() * 20.0).floor()), f, t);
            leaves.push(f);
            leaves.push(t);
        }
        let mut nodes = Vec::new();
        let mut next_leaf = 0;
        fn emit(p: &[Proto], at: usize, nodes: &mut Vec<Node>, next_leaf: &mut u32) -> u32 {
            let idx = nodes.len() as u32;
            match p[at] {
                Proto::Leaf => {
                    nodes.push(Node::Leaf { ordinal: *next_leaf });
                    *next_leaf += 1;
                }
                Proto::Split(test, f, t) => {
                    nodes.push(Node::Leaf { ordinal: 0 });
                    let fc = emit(p, f, nodes, next_leaf);
                    let tc = emit(p, t, nodes, next_leaf);
                    nodes[idx as usize] = Node::Internal {
                        test,
                        false_child: fc,
                        true_child: tc,
                    };
                }
            }
            idx
        }
        emit(&protos, 0, &mut nodes, &mut next_leaf);
        Tree::from_nodes(nodes).unwrap()
    }

    fn naive_encode(tree: &Tree, at: usize, x: &Instance) -> u32 {
        match tree.nodes()[at] {
            Node::Leaf { ordinal } => ordinal,
            Node::Internal {
                test: NodeTest::Numeric { attr, threshold },
                false_child,
                true_child,
            } => {
                let v = x.value(attr).as_number().unwrap();
                naive_encode(tree, if v >= threshold { true_child } else { false_child } as usize, x)
            }
            Node::Internal { .. } => unreachable!(),
        }
    }

    #[test]
    fn random_tree_matches_recursive_oracle() {
        let mut rng = SplitMix64::new(5);
        let s = Schema::numeric(4).unwrap();
        let t = random_tree(&mut rng, 4, 100);
        assert_eq!(t.nodes().len(), 201);
        for _ in 0..500 {
            let v: Vec<f64> = (0..4).map(|_| (rng.next_f64() * 21.0).floor() - 0.5).collect();
            let x = Instance::numeric(&s, &v).unwrap();
            assert_eq!(tree_encode(&t, &x), naive_encode(&t, 0, &x));
        }
    }

    #[test]
    fn replaying_paths_lands_on_leaf() {
        let mut rng = SplitMix64::new(11);
        let t = random_tree(&mut rng, 3, 60);
        for ordinal in 0..t.leaf_count() {
            let path = t.path(ordinal).unwrap();
            let mut idx = 0usize;
            for (test, taken) in &path {
                match t.nodes()[idx] {
                    Node::Internal {
                        test: here,
                        false_child,
                        true_child,
                    } => {
                        assert_eq!(&here, test);
                        idx = if *taken { true_child } else { false_child } as usize;
                    }
                    Node::Leaf { .. } => panic!("path longer than tree"),
                }
            }
            assert_eq!(t.nodes()[idx], Node::Leaf { ordinal });
        }
    }

    #[test]
    fn routed_instances_satisfy_their_rule() {
        let mut rng = SplitMix64::new(3);
        let s = Schema::numeric(3).unwrap();
        let t = random_tree(&mut rng, 3, 40);
        for _ in 0..300 {
            let v: Vec<f64> = (0..3).map(|_| (rng.next_f64() * 40.0).floor() / 2.0).collect();
            let x = Instance::numeric(&s, &v).unwrap();
            // Genuine paths can still carry contradictions in a random tree
            // (e.g. x≥5 then x≥3 false); only reachable leaves matter here.
            let leaf = tree_encode(&t, &x);
            let rule = path_to_rule(&t.path(leaf).unwrap(), &s).unwrap();
            assert!(rule.contains(&x));
        }
    }

    #[test]
    fn depth_of_trivial_forests() {
        let s = Schema::numeric(1).unwrap();
        let b = vec![Some(Bounds { min: 0.0, max: 1.0 })];
        let f = Forest::new(vec![Tree::single_leaf(); 3], s.clone(), b.clone(), None, 0, None).unwrap();
        assert_eq!(
            depth_stats(&f),
            DepthStats {
                max_depth: 0,
                mean_depth: 0.0
            }
        );
        assert_eq!(
            forest_encode(&f, &Instance::numeric(&s, &[0.3]).unwrap()).leaf_ids,
            vec![0, 0, 0]
        );

        // Perfect binary tree of depth 3.
        let mut nodes = Vec::new();
        fn perfect(depth: u32, nodes: &mut Vec<Node>, leaves: &mut u32) -> u32 {
            let idx = nodes.len() as u32;
            if depth == 0 {
                nodes.push(Node::Leaf { ordinal: *leaves });
                *leaves += 1;
            } else {
                nodes.push(Node::Leaf { ordinal: 0 });
                let f = perfect(depth - 1, nodes, leaves);
                let t = perfect(depth - 1, nodes, leaves);
                nodes[idx as usize] = Node::Internal {
                    test: NodeTest::Numeric {
                        attr: 0,
                        threshold: 0.5,
                    },
                    false_child: f,
                    true_child: t,
                };
            }
            idx
        }
        perfect(3, &mut nodes, &mut 0);
        let t = Tree::from_nodes(nodes).unwrap();
        assert_eq!(t.leaf_count(), 8);
        let f = Forest::new(vec![t], s, b, None, 0, None).unwrap();
        assert_eq!(
            depth_stats(&f),
            DepthStats {
                max_depth: 3,
                mean_depth: 3.0
            }
        );
    }

    #[test]
    fn forest_rejects_bad_bounds_and_tests() {
        let s = example_schema();
        let good = vec![
            Some(Bounds { min: 0.0, max: 1.0 }),
            Some(Bounds { min: 0.0, max: 1.0 }),
            None,
            None,
        ];
        assert!(Forest::new(vec![], s.clone(), good.clone(), None, 0, None).is_err());
        let mut bad = good.clone();
        bad[2] = Some(Bounds { min: 0.0, max: 1.0 });
        assert!(Forest::new(vec![Tree::single_leaf()], s.clone(), bad, None, 0, None).is_err());
        let wrong_kind = Tree::from_nodes(vec![split(num(2, 1.0), 1, 2), leaf(0), leaf(1)]).unwrap();
        assert!(Forest::new(vec![wrong_kind], s.clone(), good.clone(), None, 0, None).is_err());
        assert!(Forest::new(vec![rule1_tree()], s, good, None, 0, None).is_ok());
    }
}
