//! Seeded synthetic datasets.

use crate::error::Result;
use crate::rng::SplitMix64;
use crate::schema::{Attribute, Dataset, Instance, Schema, Value};

/// Parameters of the synthetic document collection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextSpec {
    pub docs: usize,
    pub vocab: usize,
    pub topics: usize,
    /// Words drawn per document, uniform in `min_len..=max_len`.
    pub min_len: usize,
    pub max_len: usize,
    /// Probability that a word comes from the document's topic rather than
    /// the shared background distribution.
    pub topic_weight: f64,
    pub seed: u64,
}

impl Default for TextSpec {
    fn default() -> Self {
        TextSpec {
            docs: 2000,
            vocab: 500,
            topics: 10,
            min_len: 40,
            max_len: 120,
            topic_weight: 0.7,
            seed: 42,
        }
    }
}

/// Index into a Zipf(1) distribution over `n` ranks.
fn zipf(rng: &mut SplitMix64, cdf: &[f64]) -> usize {
    let u = rng.next_f64() * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

fn zipf_cdf(n: usize) -> Vec<f64> {
    let mut acc = 0.0;
    (1..=n)
        .map(|r| {
            acc += 1.0 / r as f64;
            acc
        })
        .collect()
}

/// Topic-mixture documents as dense tf-idf rows (`tf * ln(N / df)`, raw
/// counts for tf), labelled by topic.
pub fn tfidf_corpus(spec: &TextSpec) -> Result<Dataset> {
    let mut rng = SplitMix64::new(spec.seed);
    let words_per_topic = (spec.vocab / spec.topics.max(1)).max(1);
    // Each topic favours its own shuffled slice of the vocabulary.
    let mut order: Vec<usize> = (0..spec.vocab).collect();
    rng.partial_shuffle(&mut order, spec.vocab);
    let topic_cdf = zipf_cdf(words_per_topic);
    let background_cdf = zipf_cdf(spec.vocab);

    let mut counts = vec![vec![0u32; spec.vocab]; spec.docs];
    let mut labels = Vec::with_capacity(spec.docs);
    for doc in counts.iter_mut() {
        let topic = rng.below(spec.topics);
        labels.push(topic as u32);
        let len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
        for _ in 0..len {
            let word = if rng.next_f64() < spec.topic_weight {
                order[(topic * words_per_topic + zipf(&mut rng, &topic_cdf)) % spec.vocab]
            } else {
                zipf(&mut rng, &background_cdf)
            };
            doc[word] += 1;
        }
    }

    let mut df = vec![0usize; spec.vocab];
    for doc in &counts {
        for (w, &c) in doc.iter().enumerate() {
            if c > 0 {
                df[w] += 1;
            }
        }
    }
    let n = spec.docs as f64;
    let idf: Vec<f64> = df
        .iter()
        .map(|&d| if d == 0 { 0.0 } else { (n / d as f64).ln() })
        .collect();
    let rows: Vec<Vec<f64>> = counts
        .iter()
        .map(|doc| doc.iter().zip(&idf).map(|(&c, &w)| c as f64 * w).collect())
        .collect();
    let schema = Schema::new((0..spec.vocab).map(|w| Attribute::numeric(format!("w{w}"))).collect())?;
    Dataset::from_rows(schema, &rows, Some(labels))
}

/// Random schema of `d` attributes, each categorical with probability
/// `p_categorical` (2 to 5 values).
pub fn random_schema(rng: &mut SplitMix64, d: usize, p_categorical: f64) -> Result<Schema> {
    let attrs = (0..d)
        .map(|j| {
            if rng.next_f64() < p_categorical {
                let k = 2 + rng.below(4);
                Attribute::categorical(format!("c{j}"), (0..k).map(|v| format!("v{v}")))
            } else {
                Attribute::numeric(format!("x{j}"))
            }
        })
        .collect();
    Schema::new(attrs)
}

/// `n` labelled instances over a random mixed schema. Numeric columns are
/// either continuous or drawn from a handful of levels so ties occur; labels
/// depend on the first attribute plus noise.
pub fn random_mixed(seed: u64, n: usize, d: usize, classes: u32) -> Result<Dataset> {
    let mut rng = SplitMix64::new(seed);
    let schema = random_schema(&mut rng, d, 0.3)?;
    let styles: Vec<(bool, f64, f64)> = (0..d)
        .map(|_| {
            (
                rng.below(2) == 0,
                rng.next_f64() * 20.0 - 10.0,
                0.5 + rng.next_f64() * 10.0,
            )
        })
        .collect();
    let mut instances = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let values: Vec<Value> = (0..d)
            .map(|j| match schema.kind(j).category_count() {
                Some(k) => Value::Category(rng.below(k) as u32),
                None => {
                    let (levels, offset, scale) = styles[j];
                    if levels {
                        Value::Number(offset + scale * rng.below(6) as f64)
                    } else {
                        Value::Number(offset + scale * rng.next_f64())
                    }
                }
            })
            .collect();
        let signal = match values[0] {
            Value::Number(v) => (v.abs() * 7.0) as u64,
            Value::Category(c) => c as u64,
        };
        let label = if rng.below(5) == 0 {
            rng.below(classes as usize)
        } else {
            signal as usize % classes as usize
        };
        labels.push(label as u32);
        instances.push(Instance::new(&schema, values)?);
    }
    Dataset::new(schema, instances, Some(labels))
}
