//! Forest construction.
//!
//! Supervised trees follow Random Forest: at every node `ceil(sqrt(d))`
//! attributes are sampled and the split with the highest information gain is
//! kept. Unsupervised trees are completely random: one attribute that varies
//! within the node, one uniform threshold. Both grow until the node is pure
//! (supervised), holds at most `min_node_size` rows, or cannot be split.
//!
//! Tree `t` draws from its own [`SplitMix64::for_tree`] stream, so the forest
//! does not depend on scheduling or thread count.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::schema::{AttributeKind, Dataset, Value};
use crate::tree::{Forest, Node, NodeTest, Tree};

/// Gains at or below this are treated as zero.
const GAIN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Supervised,
    Unsupervised,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sup" | "supervised" => Ok(Mode::Supervised),
            "unsup" | "unsupervised" => Ok(Mode::Unsupervised),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Supervised => "supervised",
            Mode::Unsupervised => "unsupervised",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_min_node_size")]
    pub min_node_size: usize,
    #[serde(default)]
    pub max_depth_cap: Option<u32>,
    /// Defaults to true for supervised and false for unsupervised forests.
    #[serde(default)]
    pub bootstrap: Option<bool>,
    /// Worker count; 0 picks the rayon default. Not part of the model.
    #[serde(default, skip_serializing)]
    pub threads: usize,
}

fn default_min_node_size() -> usize {
    2
}

impl TrainConfig {
    pub fn new(mode: Mode, n_trees: usize, seed: u64) -> Self {
        TrainConfig {
            n_trees,
            mode,
            seed,
            min_node_size: default_min_node_size(),
            max_depth_cap: None,
            bootstrap: None,
            threads: 0,
        }
    }

    pub fn bootstrap(&self) -> bool {
        self.bootstrap.unwrap_or(self.mode == Mode::Supervised)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be at least 1".into()));
        }
        if self.min_node_size == 0 {
            return Err(Error::Config("min_node_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Shannon entropy (bits) of a class histogram.
fn entropy(counts: &[u32], total: u32) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

fn histogram(labels: &[u32], n_classes: usize) -> Vec<u32> {
    let mut counts = vec![0u32; n_classes];
    for &l in labels {
        counts[l as usize] += 1;
    }
    counts
}

/// `H(parent) - |L|/|P| H(L) - |R|/|P| H(R)` in bits.
pub fn information_gain(parent: &[u32], left: &[u32], right: &[u32]) -> f64 {
    let n_classes = parent
        .iter()
        .chain(left)
        .chain(right)
        .map(|&l| l as usize + 1)
        .max()
        .unwrap_or(0);
    gain_from_counts(
        &histogram(parent, n_classes),
        &histogram(left, n_classes),
        &histogram(right, n_classes),
    )
}

fn gain_from_counts(parent: &[u32], left: &[u32], right: &[u32]) -> f64 {
    let np: u32 = parent.iter().sum();
    let nl: u32 = left.iter().sum();
    let nr: u32 = right.iter().sum();
    if np == 0 {
        return 0.0;
    }
    let p = np as f64;
    entropy(parent, np) - (nl as f64 / p) * entropy(left, nl) - (nr as f64 / p) * entropy(right, nr)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub test: NodeTest,
    /// Information gain; `None` for random splits.
    pub gain: Option<f64>,
}

/// Training rows in a flat column-friendly layout. Categorical values are
/// stored as their index.
struct Matrix<'a> {
    data: Vec<f64>,
    d: usize,
    categorical: Vec<bool>,
    labels: Option<&'a [u32]>,
    n_classes: usize,
}

impl<'a> Matrix<'a> {
    fn new(dataset: &'a Dataset) -> Self {
        let d = dataset.schema().len();
        let mut data = Vec::with_capacity(dataset.len() * d);
        for x in dataset.instances() {
            data.extend(x.values().iter().map(|v| match *v {
                Value::Number(v) => v,
                Value::Category(c) => c as f64,
            }));
        }
        let labels = dataset.labels();
        let n_classes = labels
            .map(|l| l.iter().map(|&c| c as usize + 1).max().unwrap_or(1))
            .unwrap_or(0);
        Matrix {
            data,
            d,
            categorical: (0..d).map(|j| !dataset.schema().kind(j).is_numeric()).collect(),
            labels,
            n_classes,
        }
    }

    #[inline]
    fn get(&self, row: u32, attr: usize) -> f64 {
        self.data[row as usize * self.d + attr]
    }

    fn label(&self, row: u32) -> u32 {
        self.labels.expect("labels present")[row as usize]
    }

    fn test(&self, attr: usize, value: f64) -> NodeTest {
        if self.categorical[attr] {
            NodeTest::Categorical {
                attr,
                category: value as u32,
            }
        } else {
            NodeTest::Numeric { attr, threshold: value }
        }
    }

    #[inline]
    fn goes_true(&self, row: u32, test: &NodeTest) -> bool {
        match *test {
            NodeTest::Numeric { attr, threshold } => self.get(row, attr) >= threshold,
            NodeTest::Categorical { attr, category } => self.get(row, attr) == category as f64,
        }
    }
}

fn value_range(m: &Matrix, rows: &[u32], attr: usize) -> (f64, f64) {
    rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
        let v = m.get(r, attr);
        (lo.min(v), hi.max(v))
    })
}

/// Midpoint of two consecutive distinct values, nudged so that rows equal to
/// `a` fall on the false side.
fn midpoint(a: f64, b: f64) -> f64 {
    let mid = a + (b - a) / 2.0;
    if mid > a {
        mid
    } else {
        b
    }
}

/// Uniform threshold in `(lo, hi)`; `hi` when no float lies strictly between.
fn random_threshold(rng: &mut SplitMix64, lo: f64, hi: f64) -> f64 {
    if lo.next_up() >= hi {
        return hi;
    }
    loop {
        let t = lo + (hi - lo) * rng.next_f64();
        if t > lo && t < hi {
            return t;
        }
    }
}

struct Scratch {
    pool: Vec<usize>,
    pairs: Vec<(f64, u32)>,
    left: Vec<u32>,
    right: Vec<u32>,
    parent: Vec<u32>,
    categories: Vec<f64>,
}

impl Scratch {
    fn new(d: usize, n_classes: usize) -> Self {
        Scratch {
            pool: Vec::with_capacity(d),
            pairs: Vec::new(),
            left: vec![0; n_classes],
            right: vec![0; n_classes],
            parent: vec![0; n_classes],
            categories: Vec::new(),
        }
    }

    fn reset_pool(&mut self, d: usize) {
        self.pool.clear();
        self.pool.extend(0..d);
    }
}

fn is_pure(m: &Matrix, rows: &[u32]) -> bool {
    let first = m.label(rows[0]);
    rows.iter().all(|&r| m.label(r) == first)
}

fn build_supervised_node_with(
    m: &Matrix,
    rows: &[u32],
    min_node_size: usize,
    rng: &mut SplitMix64,
    scratch: &mut Scratch,
) -> Option<SplitCandidate> {
    if rows.len() <= min_node_size || is_pure(m, rows) {
        return None;
    }
    let d = m.d;
    let k = (d as f64).sqrt().ceil() as usize;
    scratch.reset_pool(d);
    rng.partial_shuffle(&mut scratch.pool, k);
    let mut attrs: Vec<usize> = scratch.pool[..k.min(d)].to_vec();
    attrs.sort_unstable();

    scratch.parent.iter_mut().for_each(|c| *c = 0);
    for &r in rows {
        scratch.parent[m.label(r) as usize] += 1;
    }
    let total = rows.len() as u32;
    let parent_h = entropy(&scratch.parent, total);

    let mut best: Option<SplitCandidate> = None;
    let mut best_gain = GAIN_EPS;
    let mut consider = |test: NodeTest, left: &[u32], right: &[u32], nl: u32| {
        let nr = total - nl;
        let gain =
            parent_h - (nl as f64 / total as f64) * entropy(left, nl) - (nr as f64 / total as f64) * entropy(right, nr);
        if gain > best_gain {
            best_gain = gain;
            best = Some(SplitCandidate { test, gain: Some(gain) });
        }
    };

    for attr in attrs {
        if m.categorical[attr] {
            scratch.categories.clear();
            scratch.categories.extend(rows.iter().map(|&r| m.get(r, attr)));
            scratch.categories.sort_unstable_by(f64::total_cmp);
            scratch.categories.dedup();
            if scratch.categories.len() < 2 {
                continue;
            }
            for &c in &scratch.categories {
                // left = false side (value != c), right = true side.
                scratch.left.iter_mut().for_each(|x| *x = 0);
                scratch.right.iter_mut().for_each(|x| *x = 0);
                for &r in rows {
                    let l = m.label(r) as usize;
                    if m.get(r, attr) == c {
                        scratch.right[l] += 1;
                    } else {
                        scratch.left[l] += 1;
                    }
                }
                let nl = scratch.left.iter().sum();
                consider(m.test(attr, c), &scratch.left, &scratch.right, nl);
            }
        } else {
            scratch.pairs.clear();
            scratch.pairs.extend(rows.iter().map(|&r| (m.get(r, attr), m.label(r))));
            scratch.pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            if scratch.pairs[0].0 == scratch.pairs[scratch.pairs.len() - 1].0 {
                continue;
            }
            scratch.left.iter_mut().for_each(|x| *x = 0);
            scratch.right.copy_from_slice(&scratch.parent);
            for i in 0..scratch.pairs.len() - 1 {
                let (v, l) = scratch.pairs[i];
                scratch.left[l as usize] += 1;
                scratch.right[l as usize] -= 1;
                let next = scratch.pairs[i + 1].0;
                if next > v {
                    consider(
                        m.test(attr, midpoint(v, next)),
                        &scratch.left,
                        &scratch.right,
                        (i + 1) as u32,
                    );
                }
            }
        }
    }
    best
}

fn build_unsupervised_node_with(
    m: &Matrix,
    rows: &[u32],
    min_node_size: usize,
    rng: &mut SplitMix64,
    scratch: &mut Scratch,
) -> Option<SplitCandidate> {
    if rows.len() <= min_node_size {
        return None;
    }
    // Rejection sampling without replacement: uniform over varying attributes.
    scratch.reset_pool(m.d);
    let mut remaining = m.d;
    while remaining > 0 {
        let pick = rng.below(remaining);
        let attr = scratch.pool[pick];
        let (lo, hi) = value_range(m, rows, attr);
        if lo < hi {
            let test = if m.categorical[attr] {
                scratch.categories.clear();
                scratch.categories.extend(rows.iter().map(|&r| m.get(r, attr)));
                scratch.categories.sort_unstable_by(f64::total_cmp);
                scratch.categories.dedup();
                let c = scratch.categories[rng.below(scratch.categories.len())];
                m.test(attr, c)
            } else {
                m.test(attr, random_threshold(rng, lo, hi))
            };
            return Some(SplitCandidate { test, gain: None });
        }
        scratch.pool.swap(pick, remaining - 1);
        remaining -= 1;
    }
    None
}

/// Best information-gain split over `ceil(sqrt(d))` sampled attributes of the
/// node `rows` (indices into `dataset`), or `None` for a leaf.
pub fn build_supervised_node(
    dataset: &Dataset,
    rows: &[u32],
    min_node_size: usize,
    rng: &mut SplitMix64,
) -> Result<Option<SplitCandidate>> {
    if dataset.labels().is_none() {
        return Err(Error::MissingLabels);
    }
    let m = Matrix::new(dataset);
    let mut scratch = Scratch::new(m.d, m.n_classes);
    Ok(build_supervised_node_with(&m, rows, min_node_size, rng, &mut scratch))
}

/// Completely random split of the node `rows`, or `None` for a leaf.
pub fn build_unsupervised_node(
    dataset: &Dataset,
    rows: &[u32],
    min_node_size: usize,
    rng: &mut SplitMix64,
) -> Option<SplitCandidate> {
    let m = Matrix::new(dataset);
    let mut scratch = Scratch::new(m.d, 0);
    build_unsupervised_node_with(&m, rows, min_node_size, rng, &mut scratch)
}

fn grow_tree(m: &Matrix, config: &TrainConfig, index: usize) -> Tree {
    let mut rng = SplitMix64::for_tree(config.seed, index as u64);
    let n = m.data.len() / m.d;
    let mut rows: Vec<u32> = if config.bootstrap() {
        (0..n).map(|_| rng.below(n) as u32).collect()
    } else {
        (0..n as u32).collect()
    };
    let mut scratch = Scratch::new(m.d, m.n_classes);
    let mut nodes: Vec<Node> = Vec::new();
    let mut leaves = 0u32;

    struct Pending {
        start: usize,
        end: usize,
        depth: u32,
        // (parent node, is true child)
        parent: Option<(usize, bool)>,
    }
    // Popping the false child first yields pre-order, false branch first.
    let mut stack = vec![Pending {
        start: 0,
        end: rows.len(),
        depth: 0,
        parent: None,
    }];
    while let Some(p) = stack.pop() {
        let idx = nodes.len();
        if let Some((parent, is_true)) = p.parent {
            if let Node::Internal {
                false_child,
                true_child,
                ..
            } = &mut nodes[parent]
            {
                if is_true {
                    *true_child = idx as u32;
                } else {
                    *false_child = idx as u32;
                }
            }
        }
        let node_rows = &mut rows[p.start..p.end];
        let capped = config.max_depth_cap.is_some_and(|cap| p.depth >= cap);
        let split = if capped {
            None
        } else {
            match config.mode {
                Mode::Supervised => {
                    build_supervised_node_with(m, node_rows, config.min_node_size, &mut rng, &mut scratch)
                }
                Mode::Unsupervised => {
                    build_unsupervised_node_with(m, node_rows, config.min_node_size, &mut rng, &mut scratch)
                }
            }
        };
        match split {
            None => {
                nodes.push(Node::Leaf { ordinal: leaves });
                leaves += 1;
            }
            Some(candidate) => {
                // Stable partition: false rows first.
                let (mut falses, trues): (Vec<u32>, Vec<u32>) =
                    node_rows.iter().partition(|&&r| !m.goes_true(r, &candidate.test));
                let split_at = p.start + falses.len();
                debug_assert!(!falses.is_empty() && !trues.is_empty());
                falses.extend(trues);
                node_rows.copy_from_slice(&falses);
                nodes.push(Node::Internal {
                    test: candidate.test,
                    false_child: u32::MAX,
                    true_child: u32::MAX,
                });
                stack.push(Pending {
                    start: split_at,
                    end: p.end,
                    depth: p.depth + 1,
                    parent: Some((idx, true)),
                });
                stack.push(Pending {
                    start: p.start,
                    end: split_at,
                    depth: p.depth + 1,
                    parent: Some((idx, false)),
                });
            }
        }
    }
    Tree::from_nodes(nodes).expect("grown trees are well formed")
}

/// Trains `config.n_trees` trees on `dataset`.
pub fn train_forest(dataset: &Dataset, config: &TrainConfig) -> Result<Forest> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyData);
    }
    if config.mode == Mode::Supervised && dataset.labels().is_none() {
        return Err(Error::MissingLabels);
    }
    let m = Matrix::new(dataset);
    let build = || -> Vec<Tree> {
        (0..config.n_trees)
            .into_par_iter()
            .map(|t| grow_tree(&m, config, t))
            .collect()
    };
    let trees = if config.threads == 0 {
        build()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(build)
    };
    let bounds = dataset
        .bounds()
        .iter()
        .enumerate()
        .map(|(j, b)| match dataset.schema().kind(j) {
            AttributeKind::Numeric => *b,
            AttributeKind::Categorical { .. } => None,
        })
        .collect();
    let snapshot = TrainConfig {
        bootstrap: Some(config.bootstrap()),
        threads: 0,
        ..config.clone()
    };
    Forest::new(
        trees,
        dataset.schema().clone(),
        bounds,
        Some(config.mode),
        config.seed,
        Some(snapshot),
    )
}
