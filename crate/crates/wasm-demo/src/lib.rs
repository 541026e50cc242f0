//! Browser bindings for the eforest demo page.
//!
//! Three views: a 2-D explorer that shows every tree's leaf box and their
//! intersection, MNIST reconstruction with a tree-damage slider, and
//! reconstruction of a digit drawn by hand.

use eforest::codec::{decode_mcr, path_rules, TreeMask};
use eforest::io::{idx_dataset, inflate_if_gz, parse_idx};
use eforest::metrics::{forest_stats, mse};
use eforest::rng::SplitMix64;
use eforest::rule::{calculate_mcr, representative, Constraint, Mcr};
use eforest::tree::forest_encode;
use eforest::{train_forest, Dataset, Error, Forest, Instance, Mode, Result, Schema, Strategy, TrainConfig};
use serde_json::json;
use wasm_bindgen::prelude::*;

const TRAIN_IMAGES: &[u8] = include_bytes!("../../../data/mnist-train-images-idx3-ubyte.gz");
const TRAIN_LABELS: &[u8] = include_bytes!("../../../data/mnist-train-labels-idx1-ubyte.gz");
const TEST_IMAGES: &[u8] = include_bytes!("../../../data/mnist-test-images-idx3-ubyte.gz");

pub const SIDE: usize = 28;
const PIXELS: usize = SIDE * SIDE;

fn mode(supervised: bool) -> Mode {
    if supervised {
        Mode::Supervised
    } else {
        Mode::Unsupervised
    }
}

fn load_embedded(images: &[u8], labels: Option<&[u8]>) -> Result<Dataset> {
    let inflate = |bytes: &[u8]| inflate_if_gz(bytes).map_err(|e| Error::Format(e.to_string()));
    let images = parse_idx(&inflate(images)?)?;
    let labels = labels.map(|b| inflate(b).and_then(|raw| parse_idx(&raw))).transpose()?;
    idx_dataset(&images, labels.as_ref())
}

/// `[lo, hi]` of a numeric constraint.
fn span(c: &Constraint) -> [f64; 2] {
    c.as_interval().map_or([f64::NAN, f64::NAN], |i| [i.lo(), i.hi()])
}

fn boxes(mcr: &Mcr) -> [f64; 4] {
    let [x0, x1] = span(mcr.get(0));
    let [y0, y1] = span(mcr.get(1));
    [x0, x1, y0, y1]
}

/// Labelled points in the unit square: two blobs and a ring, plus the two
/// corners so the training bounds are exactly `[0, 1]`.
pub fn toy_points(seed: u64) -> (Vec<Vec<f64>>, Vec<u32>) {
    let mut rng = SplitMix64::new(seed);
    let mut rows = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
    let mut labels = vec![0, 0];
    let gauss = |rng: &mut SplitMix64| (0..4).map(|_| rng.next_f64()).sum::<f64>() / 2.0 - 1.0;
    for i in 0..240 {
        let class = i % 3;
        let (x, y) = match class {
            0 => (0.25 + 0.12 * gauss(&mut rng), 0.3 + 0.12 * gauss(&mut rng)),
            1 => (0.72 + 0.1 * gauss(&mut rng), 0.7 + 0.1 * gauss(&mut rng)),
            _ => {
                let a = rng.next_f64() * std::f64::consts::TAU;
                let r = 0.42 + 0.04 * gauss(&mut rng);
                (0.5 + r * a.cos(), 0.5 + r * a.sin())
            }
        };
        rows.push(vec![x.clamp(0.0, 1.0), y.clamp(0.0, 1.0)]);
        labels.push(class as u32);
    }
    (rows, labels)
}

/// Forest over the 2-D toy set.
pub struct Toy {
    forest: Forest,
    rows: Vec<Vec<f64>>,
    labels: Vec<u32>,
}

/// Leaf boxes of one query point.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyQuery {
    pub leaves: Vec<u32>,
    /// Per tree `[x0, x1, y0, y1]`, clipped to the unit square.
    pub tree_boxes: Vec<[f64; 4]>,
    pub mcr: [f64; 4],
    pub representative: [f64; 2],
}

impl Toy {
    pub fn new(trees: usize, supervised: bool, seed: u64) -> Result<Toy> {
        let (rows, labels) = toy_points(7);
        let data = Dataset::from_rows(Schema::numeric(2)?, &rows, Some(labels.clone()))?;
        let forest = train_forest(&data, &TrainConfig::new(mode(supervised), trees, seed))?;
        Ok(Toy { forest, rows, labels })
    }

    pub fn query(&self, x: f64, y: f64, keep: f64, mask_seed: u64) -> Result<ToyQuery> {
        let schema = self.forest.schema();
        let point = Instance::numeric(schema, &[x.clamp(0.0, 1.0), y.clamp(0.0, 1.0)])?;
        let code = forest_encode(&self.forest, &point);
        let mask = TreeMask::random(self.forest.n_trees(), keep, mask_seed)?;
        let rules = path_rules(&self.forest, &code, Some(&mask))?;
        let tree_boxes = rules
            .iter()
            .map(|r| calculate_mcr([r], self.forest.bounds(), schema).map(|m| boxes(&m)))
            .collect::<Result<Vec<_>>>()?;
        let mcr = decode_mcr(&self.forest, &code, Some(&mask))?;
        let rep = representative(&mcr, Strategy::Mean, schema);
        let coords = rep.to_reals().unwrap_or_default();
        Ok(ToyQuery {
            leaves: mask.keep().iter().map(|&t| code.leaf_ids[t]).collect(),
            tree_boxes,
            mcr: boxes(&mcr),
            representative: [coords[0], coords[1]],
        })
    }
}

/// Forest over MNIST digits plus the embedded test images.
pub struct Digits {
    forest: Forest,
    test: Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DigitRecon {
    pub pixels: Vec<f64>,
    pub mse: f64,
    pub trees_used: usize,
    pub code: Vec<u32>,
}

impl Digits {
    pub fn new(trees: usize, supervised: bool, seed: u64, rows: usize) -> Result<Digits> {
        let train = load_embedded(TRAIN_IMAGES, Some(TRAIN_LABELS))?;
        let train = train.slice(0..rows.clamp(1, train.len()));
        let test = load_embedded(TEST_IMAGES, None)?;
        let forest = train_forest(&train, &TrainConfig::new(mode(supervised), trees, seed))?;
        Ok(Digits { forest, test })
    }

    pub fn test_count(&self) -> usize {
        self.test.len()
    }

    pub fn test_image(&self, i: usize) -> Vec<u8> {
        self.test
            .instances()
            .get(i)
            .and_then(Instance::to_reals)
            .map(|v| v.iter().map(|&p| p as u8).collect())
            .unwrap_or_default()
    }

    pub fn reconstruct(&self, pixels: &[u8], keep: f64, mask_seed: u64, strategy: Strategy) -> Result<DigitRecon> {
        if pixels.len() != PIXELS {
            return Err(Error::Shape(format!("expected {PIXELS} pixels, got {}", pixels.len())));
        }
        let values: Vec<f64> = pixels.iter().map(|&p| p as f64).collect();
        let x = Instance::numeric(self.forest.schema(), &values)?;
        let code = forest_encode(&self.forest, &x);
        let mask = TreeMask::random(self.forest.n_trees(), keep, mask_seed)?;
        let mcr = decode_mcr(&self.forest, &code, Some(&mask))?;
        let rep = representative(&mcr, strategy, self.forest.schema());
        Ok(DigitRecon {
            mse: mse(&x, &rep)?,
            pixels: rep.to_reals().unwrap_or_default(),
            trees_used: mask.len(),
            code: code.leaf_ids,
        })
    }

    pub fn stats_json(&self) -> String {
        serde_json::to_string(&forest_stats(&self.forest)).unwrap_or_default()
    }
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct ToyDemo(Toy);

#[wasm_bindgen]
impl ToyDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(trees: usize, supervised: bool, seed: u32) -> Result<ToyDemo, JsError> {
        Toy::new(trees, supervised, seed as u64).map(ToyDemo).map_err(js)
    }

    /// Flat `[x, y, label, ...]` of the training points.
    pub fn points(&self) -> Vec<f64> {
        self.0
            .rows
            .iter()
            .zip(&self.0.labels)
            .flat_map(|(r, &l)| [r[0], r[1], l as f64])
            .collect()
    }

    /// JSON with `leaves`, `tree_boxes`, `mcr` and `representative`.
    pub fn query(&self, x: f64, y: f64, keep: f64, mask_seed: u32) -> Result<String, JsError> {
        let q = self.0.query(x, y, keep, mask_seed as u64).map_err(js)?;
        Ok(json!({
            "leaves": q.leaves,
            "tree_boxes": q.tree_boxes,
            "mcr": q.mcr,
            "representative": q.representative,
        })
        .to_string())
    }
}

#[wasm_bindgen]
pub struct DigitDemo(Digits);

#[wasm_bindgen]
impl DigitDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(trees: usize, supervised: bool, seed: u32, rows: usize) -> Result<DigitDemo, JsError> {
        Digits::new(trees, supervised, seed as u64, rows)
            .map(DigitDemo)
            .map_err(js)
    }

    pub fn test_count(&self) -> usize {
        self.0.test_count()
    }

    pub fn test_image(&self, i: usize) -> Vec<u8> {
        self.0.test_image(i)
    }

    /// JSON with `pixels`, `mse`, `trees_used` and `code`.
    pub fn reconstruct(&self, pixels: &[u8], keep: f64, mask_seed: u32, strategy: &str) -> Result<String, JsError> {
        let strategy: Strategy = strategy.parse().map_err(js)?;
        let r = self
            .0
            .reconstruct(pixels, keep, mask_seed as u64, strategy)
            .map_err(js)?;
        Ok(json!({ "pixels": r.pixels, "mse": r.mse, "trees_used": r.trees_used, "code": r.code }).to_string())
    }

    pub fn stats(&self) -> String {
        self.0.stats_json()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inside(b: &[f64; 4], x: f64, y: f64) -> bool {
        b[0] <= x && x <= b[1] && b[2] <= y && y <= b[3]
    }

    #[test]
    fn toy_boxes_contain_the_query() {
        let toy = Toy::new(12, false, 3).unwrap();
        for (x, y) in [(0.1, 0.2), (0.5, 0.5), (0.93, 0.07)] {
            let q = toy.query(x, y, 1.0, 0).unwrap();
            assert_eq!(q.tree_boxes.len(), 12);
            assert!(q.tree_boxes.iter().all(|b| inside(b, x, y)));
            assert!(inside(&q.mcr, x, y));
            for b in &q.tree_boxes {
                assert!(b[0] <= q.mcr[0] && q.mcr[1] <= b[1] && b[2] <= q.mcr[2] && q.mcr[3] <= b[3]);
            }
            let half = toy.query(x, y, 0.5, 1).unwrap();
            assert_eq!(half.tree_boxes.len(), 6);
            assert!(half.mcr[0] <= q.mcr[0] && q.mcr[1] <= half.mcr[1]);
        }
    }

    #[test]
    fn digits_reconstruct_embedded_images() {
        let digits = Digits::new(30, false, 1, 500).unwrap();
        assert_eq!(digits.test_count(), 1000);
        let img = digits.test_image(0);
        assert_eq!(img.len(), PIXELS);
        let full = digits.reconstruct(&img, 1.0, 0, Strategy::Min).unwrap();
        let quarter = digits.reconstruct(&img, 0.25, 0, Strategy::Min).unwrap();
        assert_eq!((full.trees_used, quarter.trees_used), (30, 8));
        assert_eq!(full.pixels.len(), PIXELS);
        assert!(full.mse.is_finite() && full.mse <= quarter.mse);
        assert!(digits.reconstruct(&img[..10], 1.0, 0, Strategy::Min).is_err());
        assert!(digits.stats_json().contains("\"trees\":30"));
    }
}
