//! Channel-planar colour images: all red values, then green, then blue.

use crate::error::{Error, Result};
use crate::schema::{Attribute, Dataset, Instance, Schema};

pub const CHANNELS: usize = 3;

/// Splits a `3k`-attribute numeric dataset into its three `k`-attribute planes.
/// Labels are carried into every plane.
pub fn split_channels(dataset: &Dataset) -> Result<[Dataset; CHANNELS]> {
    let d = dataset.schema().len();
    if !d.is_multiple_of(CHANNELS) {
        return Err(Error::Shape(format!("d={d} is not divisible by {CHANNELS}")));
    }
    if !dataset.schema().all_numeric() {
        return Err(Error::Shape("channel split needs an all-numeric schema".into()));
    }
    let k = d / CHANNELS;
    let plane = |c: usize| -> Result<Dataset> {
        let attrs = dataset.schema().attributes()[c * k..(c + 1) * k].to_vec();
        let instances = dataset
            .instances()
            .iter()
            .map(|x| Instance::from_values_unchecked(x.values()[c * k..(c + 1) * k].to_vec()))
            .collect();
        Dataset::new(Schema::new(attrs)?, instances, dataset.labels().map(<[u32]>::to_vec))
    };
    Ok([plane(0)?, plane(1)?, plane(2)?])
}

/// Inverse of [`split_channels`]. Labels are taken from the first plane.
pub fn merge_channels(planes: &[Dataset; CHANNELS]) -> Result<Dataset> {
    let n = planes[0].len();
    let k = planes[0].schema().len();
    if planes.iter().any(|p| p.len() != n || p.schema().len() != k) {
        return Err(Error::Shape("channel planes differ in shape".into()));
    }
    let attrs: Vec<Attribute> = planes
        .iter()
        .flat_map(|p| p.schema().attributes().iter().cloned())
        .collect();
    let schema = match Schema::new(attrs) {
        Ok(s) => s,
        // Planes produced elsewhere may reuse names; fall back to positional ones.
        Err(_) => Schema::numeric(k * CHANNELS)?,
    };
    let instances = (0..n)
        .map(|i| {
            Instance::from_values_unchecked(
                planes
                    .iter()
                    .flat_map(|p| p.instances()[i].values().iter().copied())
                    .collect(),
            )
        })
        .collect();
    Dataset::new(schema, instances, planes[0].labels().map(<[u32]>::to_vec))
}
