//! Batch forward encoding and backward decoding.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::rule::{calculate_mcr, representative, Mcr, Rule, Strategy};
use crate::schema::{Dataset, Instance};
use crate::tree::{forest_encode, get_path, path_to_rule, Encoding, Forest};

/// Leaf ordinals of `n` instances under a `T`-tree forest, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodingMatrix {
    n_trees: usize,
    leaf_ids: Vec<u32>,
    forest_id: u64,
}

impl EncodingMatrix {
    pub fn new(n_trees: usize, leaf_ids: Vec<u32>, forest_id: u64) -> Result<Self> {
        if n_trees == 0 || !leaf_ids.len().is_multiple_of(n_trees) {
            return Err(Error::Shape(format!(
                "{} leaf ids do not fill rows of T={n_trees}",
                leaf_ids.len()
            )));
        }
        Ok(EncodingMatrix {
            n_trees,
            leaf_ids,
            forest_id,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.leaf_ids.len() / self.n_trees
    }

    pub fn n_trees(&self) -> usize {
        self.n_trees
    }

    pub fn forest_id(&self) -> u64 {
        self.forest_id
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.leaf_ids[i * self.n_trees..(i + 1) * self.n_trees]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.leaf_ids.chunks_exact(self.n_trees)
    }

    pub fn encoding(&self, i: usize) -> Encoding {
        Encoding {
            leaf_ids: self.row(i).to_vec(),
        }
    }

    /// Every ordinal within its tree's leaf count.
    pub fn check_against(&self, forest: &Forest) -> Result<()> {
        if self.n_trees != forest.n_trees() {
            return Err(Error::Shape(format!(
                "encodings have T={}, forest has {} trees",
                self.n_trees,
                forest.n_trees()
            )));
        }
        for row in self.rows() {
            for (t, (&ordinal, tree)) in row.iter().zip(forest.trees()).enumerate() {
                if ordinal >= tree.leaf_count() {
                    return Err(Error::LeafIndex {
                        tree: t,
                        ordinal,
                        leaf_count: tree.leaf_count(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Indices of the trees that survive, sorted and unique.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeMask {
    keep: Vec<usize>,
}

impl TreeMask {
    pub fn new(keep: impl IntoIterator<Item = usize>, n_trees: usize) -> Result<Self> {
        let mut keep: Vec<usize> = keep.into_iter().collect();
        keep.sort_unstable();
        keep.dedup();
        if keep.is_empty() {
            return Err(Error::Config("tree mask keeps no trees".into()));
        }
        if let Some(&bad) = keep.iter().find(|&&t| t >= n_trees) {
            return Err(Error::Config(format!("tree {bad} out of range for T={n_trees}")));
        }
        Ok(TreeMask { keep })
    }

    pub fn all(n_trees: usize) -> Self {
        TreeMask {
            keep: (0..n_trees).collect(),
        }
    }

    /// `ceil(fraction * T)` trees drawn without replacement from a permutation
    /// seeded by `seed`. Masks drawn with the same seed are nested: a smaller
    /// fraction keeps a prefix of the larger one's trees.
    pub fn random(n_trees: usize, fraction: f64, seed: u64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Config(format!("keep fraction {fraction} outside (0, 1]")));
        }
        if fraction * (n_trees as f64) < 1.0 {
            return Err(Error::Config(format!(
                "keep fraction {fraction} of {n_trees} trees keeps less than one tree"
            )));
        }
        let k = ((fraction * n_trees as f64).ceil() as usize).min(n_trees);
        let mut order: Vec<usize> = (0..n_trees).collect();
        SplitMix64::new(seed).partial_shuffle(&mut order, n_trees);
        TreeMask::new(order.into_iter().take(k), n_trees)
    }

    pub fn keep(&self) -> &[usize] {
        &self.keep
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    pub fn is_subset_of(&self, other: &TreeMask) -> bool {
        self.keep.iter().all(|t| other.keep.binary_search(t).is_ok())
    }
}

/// Content hash identifying `forest` in encoding files.
pub fn forest_id(forest: &Forest) -> u64 {
    forest.content_hash()
}

pub fn encode_batch(forest: &Forest, dataset: &Dataset) -> Result<EncodingMatrix> {
    forest.schema().check_compatible(dataset.schema())?;
    let rows: Vec<Vec<u32>> = dataset
        .instances()
        .par_iter()
        .map(|x| forest_encode(forest, x).leaf_ids)
        .collect();
    EncodingMatrix::new(forest.n_trees(), rows.concat(), forest_id(forest))
}

/// Path rules of the masked trees for `encoding`.
pub fn path_rules(forest: &Forest, encoding: &Encoding, mask: Option<&TreeMask>) -> Result<Vec<Rule>> {
    if encoding.len() != forest.n_trees() {
        return Err(Error::Shape(format!(
            "encoding has {} entries, forest has {} trees",
            encoding.len(),
            forest.n_trees()
        )));
    }
    let all;
    let keep = match mask {
        Some(m) => m.keep(),
        None => {
            all = TreeMask::all(forest.n_trees());
            all.keep()
        }
    };
    keep.iter()
        .map(|&t| {
            let tree = forest
                .trees()
                .get(t)
                .ok_or_else(|| Error::Config(format!("mask tree {t} out of range")))?;
            let path = get_path(tree, t, encoding.leaf_ids[t])?;
            path_to_rule(&path, forest.schema())
        })
        .collect()
}

/// MCR of an encoding under the masked trees.
pub fn decode_mcr(forest: &Forest, encoding: &Encoding, mask: Option<&TreeMask>) -> Result<Mcr> {
    let rules = path_rules(forest, encoding, mask)?;
    calculate_mcr(&rules, forest.bounds(), forest.schema())
}

/// Reconstructs one instance: path rules, their MCR, then a representative.
pub fn decode(forest: &Forest, encoding: &Encoding, strategy: Strategy, mask: Option<&TreeMask>) -> Result<Instance> {
    let mcr = decode_mcr(forest, encoding, mask)?;
    Ok(representative(&mcr, strategy, forest.schema()))
}

pub fn decode_batch(
    forest: &Forest,
    matrix: &EncodingMatrix,
    strategy: Strategy,
    mask: Option<&TreeMask>,
) -> Result<Dataset> {
    let expected = forest_id(forest);
    if matrix.forest_id() != expected {
        return Err(Error::ModelMismatch {
            expected,
            found: matrix.forest_id(),
        });
    }
    matrix.check_against(forest)?;
    let instances = (0..matrix.n_rows())
        .into_par_iter()
        .map(|i| decode(forest, &matrix.encoding(i), strategy, mask))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(forest.schema().clone(), instances, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Bounds, Schema, Value};
    use crate::train::{train_forest, Mode, TrainConfig};
    use crate::tree::Tree;

    fn small_data(seed: u64, n: usize) -> Dataset {
        let mut rng = SplitMix64::new(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..4).map(|_| (rng.next_f64() * 20.0).floor()).collect())
            .collect();
        let labels = (0..n).map(|i| (i % 2) as u32).collect();
        Dataset::from_rows(Schema::numeric(4).unwrap(), &rows, Some(labels)).unwrap()
    }

    #[test]
    fn empty_dataset_encodes_to_empty_matrix() {
        let data = small_data(1, 30);
        let f = train_forest(&data, &TrainConfig::new(Mode::Unsupervised, 4, 1)).unwrap();
        let empty = data.slice(0..0);
        let m = encode_batch(&f, &empty).unwrap();
        assert_eq!((m.n_rows(), m.n_trees()), (0, 4));
        assert!(decode_batch(&f, &m, Strategy::Min, None).unwrap().is_empty());
    }

    #[test]
    fn batch_matches_per_instance() {
        let data = small_data(2, 100);
        let f = train_forest(&data, &TrainConfig::new(Mode::Unsupervised, 10, 2)).unwrap();
        let m = encode_batch(&f, &data).unwrap();
        let decoded = decode_batch(&f, &m, Strategy::Mean, None).unwrap();
        for (i, x) in data.instances().iter().enumerate() {
            let enc = forest_encode(&f, x);
            assert_eq!(m.row(i), enc.leaf_ids.as_slice());
            assert_eq!(
                &decoded.instances()[i],
                &decode(&f, &enc, Strategy::Mean, None).unwrap()
            );
        }
    }

    #[test]
    fn single_leaf_forest_decodes_to_bounds() {
        let s = Schema::numeric(2).unwrap();
        let bounds = vec![
            Some(Bounds { min: 3.0, max: 4.0 }),
            Some(Bounds { min: -1.0, max: 1.0 }),
        ];
        let f = Forest::new(vec![Tree::single_leaf(); 2], s, bounds, None, 0, None).unwrap();
        let x = decode(&f, &Encoding { leaf_ids: vec![0, 0] }, Strategy::Min, None).unwrap();
        assert_eq!(x.values(), &[Value::Number(3.0), Value::Number(-1.0)]);
    }

    #[test]
    fn masked_region_contains_full_region() {
        let data = small_data(3, 80);
        let f = train_forest(&data, &TrainConfig::new(Mode::Unsupervised, 12, 3)).unwrap();
        let mask = TreeMask::random(12, 0.25, 9).unwrap();
        for x in data.instances() {
            let enc = forest_encode(&f, x);
            let full = decode_mcr(&f, &enc, None).unwrap();
            let part = decode_mcr(&f, &enc, Some(&mask)).unwrap();
            assert!(full.contains(x));
            assert!(full.is_subset_of(&part));
        }
    }

    #[test]
    fn wrong_model_is_rejected() {
        let data = small_data(4, 40);
        let a = train_forest(&data, &TrainConfig::new(Mode::Unsupervised, 3, 1)).unwrap();
        let b = train_forest(&data, &TrainConfig::new(Mode::Unsupervised, 3, 2)).unwrap();
        let m = encode_batch(&a, &data).unwrap();
        assert!(matches!(
            decode_batch(&b, &m, Strategy::Min, None),
            Err(Error::ModelMismatch { .. })
        ));
    }

    #[test]
    fn schema_mismatch_on_encode() {
        let data = small_data(5, 20);
        let f = train_forest(&data, &TrainConfig::new(Mode::Unsupervised, 2, 1)).unwrap();
        let other = Dataset::from_rows(Schema::numeric(3).unwrap(), &[vec![0.0; 3]], None).unwrap();
        assert!(matches!(encode_batch(&f, &other), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn corrupt_encoding_reports_leaf_index() {
        let data = small_data(6, 20);
        let f = train_forest(&data, &TrainConfig::new(Mode::Unsupervised, 2, 1)).unwrap();
        let bad = Encoding {
            leaf_ids: vec![0, 10_000],
        };
        assert!(matches!(
            decode(&f, &bad, Strategy::Min, None),
            Err(Error::LeafIndex { tree: 1, .. })
        ));
    }

    #[test]
    fn mask_construction() {
        assert!(TreeMask::new(Vec::<usize>::new(), 4).is_err());
        assert!(TreeMask::new([4], 4).is_err());
        assert!(TreeMask::random(100, 0.001, 0).is_err());
        assert!(TreeMask::random(100, 1.5, 0).is_err());
        assert_eq!(TreeMask::random(100, 0.25, 0).unwrap().len(), 25);
        assert_eq!(TreeMask::random(10, 0.25, 0).unwrap().len(), 3);
        assert_eq!(TreeMask::random(7, 1.0, 0).unwrap(), TreeMask::all(7));
        let small = TreeMask::random(40, 0.25, 5).unwrap();
        let large = TreeMask::random(40, 0.75, 5).unwrap();
        assert!(small.is_subset_of(&large));
    }
}
