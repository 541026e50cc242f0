//! Reconstruction metrics and experiment aggregations.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::CHANNELS;
use crate::codec::{decode_batch, encode_batch, TreeMask};
use crate::error::{Error, Result};
use crate::rule::Strategy;
use crate::schema::{Dataset, Instance};
use crate::train::Mode;
use crate::tree::{depth_stats, Forest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Mse,
    Cosine,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::Cosine => "cosine",
        }
    }

    pub fn eval(self, a: &Instance, b: &Instance) -> Result<f64> {
        match self {
            Metric::Mse => mse(a, b),
            Metric::Cosine => cosine_distance(a, b),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(Metric::Mse),
            "cosine" => Ok(Metric::Cosine),
            _ => Err(Error::Config(format!("unknown metric {s:?} (expected mse or cosine)"))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn reals(metric: &'static str, a: &Instance, b: &Instance) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("instances of length {} and {}", a.len(), b.len())));
    }
    let domain = || Error::MetricDomain {
        metric,
        msg: "categorical attribute present".into(),
    };
    Ok((a.to_reals().ok_or_else(domain)?, b.to_reals().ok_or_else(domain)?))
}

/// Mean squared difference over attributes, in the data's own scale.
pub fn mse(a: &Instance, b: &Instance) -> Result<f64> {
    let (a, b) = reals("mse", a, b)?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.len() as f64)
}

/// `1 - cos(a, b)`. One zero vector gives 1, two give 0.
pub fn cosine_distance(a: &Instance, b: &Instance) -> Result<f64> {
    let (a, b) = reals("cosine", a, b)?;
    Ok(cosine_distance_slices(&a, &b))
}

pub fn cosine_distance_slices(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    match (na == 0.0, nb == 0.0) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        _ => (1.0 - dot / (na * nb)).clamp(0.0, 2.0),
    }
}

/// Settings echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub trees: usize,
    pub trees_used: usize,
    pub mode: Option<Mode>,
    pub strategy: Strategy,
    pub mask_fraction: Option<f64>,
    pub mask_seed: Option<u64>,
    pub reuse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconReport {
    pub metric: Metric,
    pub n: usize,
    pub mean: f64,
    pub values: Vec<f64>,
    pub config: ReportConfig,
    /// Mean MSE of each colour plane, when requested.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_channel: Option<[f64; CHANNELS]>,
}

impl ReconReport {
    pub fn new(metric: Metric, values: Vec<f64>, config: ReportConfig) -> Self {
        ReconReport {
            metric,
            n: values.len(),
            mean: mean(&values),
            values,
            config,
            per_channel: None,
        }
    }

    /// `sample_index,metric_value` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample_index,metric_value\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{i},{v}\n"));
        }
        out
    }
}

/// Sequential left-to-right mean, so reports are reproducible bit for bit.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Per-sample metric between two aligned datasets.
pub fn compare(original: &Dataset, reconstructed: &Dataset, metric: Metric) -> Result<Vec<f64>> {
    if original.len() != reconstructed.len() {
        return Err(Error::Shape(format!(
            "{} originals, {} reconstructions",
            original.len(),
            reconstructed.len()
        )));
    }
    original
        .instances()
        .par_iter()
        .zip(reconstructed.instances().par_iter())
        .map(|(a, b)| metric.eval(a, b))
        .collect()
}

/// Mean MSE of each channel plane (channel-planar layout, `d = 3k`).
pub fn per_channel_mse(original: &Dataset, reconstructed: &Dataset) -> Result<[f64; CHANNELS]> {
    let d = original.schema().len();
    if !d.is_multiple_of(CHANNELS) || d == 0 {
        return Err(Error::Shape(format!(
            "{d} attributes do not split into {CHANNELS} channels"
        )));
    }
    let k = d / CHANNELS;
    let per_sample: Vec<[f64; CHANNELS]> = original
        .instances()
        .par_iter()
        .zip(reconstructed.instances().par_iter())
        .map(|(a, b)| {
            let (a, b) = reals("mse", a, b)?;
            let mut out = [0.0; CHANNELS];
            for (c, slot) in out.iter_mut().enumerate() {
                let r = c * k..(c + 1) * k;
                *slot = a[r.clone()]
                    .iter()
                    .zip(&b[r])
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    / k as f64;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut out = [0.0; CHANNELS];
    for (c, slot) in out.iter_mut().enumerate() {
        let col: Vec<f64> = per_sample.iter().map(|v| v[c]).collect();
        *slot = mean(&col);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskSpec {
    pub fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconOptions {
    pub strategy: Strategy,
    pub metric: Metric,
    pub mask: Option<MaskSpec>,
    pub reuse: bool,
}

impl Default for ReconOptions {
    fn default() -> Self {
        ReconOptions {
            strategy: Strategy::Min,
            metric: Metric::Mse,
            mask: None,
            reuse: false,
        }
    }
}

/// Encodes and decodes `dataset` through `forest`, scoring every sample.
/// Returns the report and the reconstructed rows.
pub fn reconstruct(forest: &Forest, dataset: &Dataset, options: &ReconOptions) -> Result<(ReconReport, Dataset)> {
    if !dataset.schema().all_numeric() {
        return Err(Error::MetricDomain {
            metric: options.metric.name(),
            msg: "categorical attribute present".into(),
        });
    }
    let mask = options
        .mask
        .map(|m| TreeMask::random(forest.n_trees(), m.fraction, m.seed))
        .transpose()?;
    let encodings = encode_batch(forest, dataset)?;
    let recon = decode_batch(forest, &encodings, options.strategy, mask.as_ref())?;
    let values = compare(dataset, &recon, options.metric)?;
    let config = ReportConfig {
        trees: forest.n_trees(),
        trees_used: mask.as_ref().map_or(forest.n_trees(), TreeMask::len),
        mode: forest.mode(),
        strategy: options.strategy,
        mask_fraction: options.mask.map(|m| m.fraction),
        mask_seed: options.mask.map(|m| m.seed),
        reuse: options.reuse,
    };
    Ok((ReconReport::new(options.metric, values, config), recon))
}

/// One report per keep fraction; every mask comes from the same seed, so the
/// kept tree sets are nested.
pub fn damage_curve(
    forest: &Forest,
    dataset: &Dataset,
    keep_fractions: &[f64],
    strategy: Strategy,
    seed: u64,
    metric: Metric,
) -> Result<Vec<ReconReport>> {
    // Validate every fraction before doing any work.
    for &f in keep_fractions {
        TreeMask::random(forest.n_trees(), f, seed)?;
    }
    keep_fractions
        .iter()
        .map(|&fraction| {
            let options = ReconOptions {
                strategy,
                metric,
                mask: Some(MaskSpec { fraction, seed }),
                reuse: false,
            };
            reconstruct(forest, dataset, &options).map(|(report, _)| report)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestStats {
    pub trees: usize,
    pub mode: Option<Mode>,
    pub max_depth: u32,
    pub avg_depth: f64,
    pub min_leaves: u32,
    pub max_leaves: u32,
    pub mean_leaves: f64,
    pub bits_per_tree: u32,
    pub code_bits: u64,
    pub input_bits: u64,
    pub size_ratio: f64,
}

/// Bits needed to name one of `leaves` leaves, at least one.
pub fn bits_for(leaves: u32) -> u32 {
    if leaves <= 2 {
        1
    } else {
        32 - (leaves - 1).leading_zeros()
    }
}

/// Depth and leaf statistics plus the encoding size against 32-bit inputs.
pub fn forest_stats(forest: &Forest) -> ForestStats {
    let depth = depth_stats(forest);
    let leaves: Vec<u32> = forest.trees().iter().map(|t| t.leaf_count()).collect();
    let max_leaves = leaves.iter().copied().max().unwrap_or(1);
    let bits_per_tree = bits_for(max_leaves);
    let code_bits = forest.n_trees() as u64 * bits_per_tree as u64;
    let input_bits = forest.schema().len() as u64 * 32;
    ForestStats {
        trees: forest.n_trees(),
        mode: forest.mode(),
        max_depth: depth.max_depth,
        avg_depth: depth.mean_depth,
        min_leaves: leaves.iter().copied().min().unwrap_or(1),
        max_leaves,
        mean_leaves: leaves.iter().map(|&l| l as f64).sum::<f64>() / leaves.len() as f64,
        bits_per_tree,
        code_bits,
        input_bits,
        size_ratio: code_bits as f64 / input_bits as f64,
    }
}
