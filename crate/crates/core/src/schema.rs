//! Attribute schemas, instances and datasets.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AttributeKind {
    Numeric,
    Categorical { values: Vec<String> },
}

impl AttributeKind {
    pub fn is_numeric(&self) -> bool {
        matches!(self, AttributeKind::Numeric)
    }

    /// Number of declared categories, `None` for numeric attributes.
    pub fn category_count(&self) -> Option<usize> {
        match self {
            AttributeKind::Numeric => None,
            AttributeKind::Categorical { values } => Some(values.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    #[serde(flatten)]
    pub kind: AttributeKind,
}

impl Attribute {
    pub fn numeric(name: impl Into<String>) -> Self {
        Attribute {
            name: name.into(),
            kind: AttributeKind::Numeric,
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, values: impl IntoIterator<Item = S>) -> Self {
        Attribute {
            name: name.into(),
            kind: AttributeKind::Categorical {
                values: values.into_iter().map(Into::into).collect(),
            },
        }
    }
}

/// Ordered, named attribute list. Always has at least one attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Schema {
    attributes: Vec<Attribute>,
}

impl Schema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self> {
        if attributes.is_empty() {
            return Err(Error::Schema("schema needs at least one attribute".into()));
        }
        let mut names = HashSet::new();
        for attr in &attributes {
            if !names.insert(attr.name.as_str()) {
                return Err(Error::Schema(format!("duplicate attribute name {:?}", attr.name)));
            }
            if let AttributeKind::Categorical { values } = &attr.kind {
                if values.is_empty() {
                    return Err(Error::Schema(format!("attribute {:?} has no categories", attr.name)));
                }
                let distinct: HashSet<_> = values.iter().collect();
                if distinct.len() != values.len() {
                    return Err(Error::Schema(format!(
                        "attribute {:?} has duplicate categories",
                        attr.name
                    )));
                }
            }
        }
        Ok(Schema { attributes })
    }

    /// `d` numeric attributes named `x0..x{d-1}`.
    pub fn numeric(d: usize) -> Result<Self> {
        Schema::new((0..d).map(|i| Attribute::numeric(format!("x{i}"))).collect())
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute(&self, index: usize) -> &Attribute {
        &self.attributes[index]
    }

    pub fn kind(&self, index: usize) -> &AttributeKind {
        &self.attributes[index].kind
    }

    pub fn all_numeric(&self) -> bool {
        self.attributes.iter().all(|a| a.kind.is_numeric())
    }

    /// Positional compatibility used for model reuse: same length, same kind
    /// per position and the same category count for categorical positions.
    /// Names are ignored.
    pub fn is_compatible(&self, other: &Schema) -> bool {
        self.len() == other.len()
            && self
                .attributes
                .iter()
                .zip(&other.attributes)
                .all(|(a, b)| a.kind.category_count() == b.kind.category_count())
    }

    pub fn check_compatible(&self, other: &Schema) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::SchemaMismatch(format!(
                "model expects d={}, data has d={}",
                self.len(),
                other.len()
            )));
        }
        if !self.is_compatible(other) {
            return Err(Error::SchemaMismatch("attribute kinds differ".into()));
        }
        Ok(())
    }
}

impl<'de> Deserialize<'de> for Schema {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            attributes: Vec<Attribute>,
        }
        let raw = Raw::deserialize(deserializer)?;
        Schema::new(raw.attributes).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Number(f64),
    Category(u32),
}

impl Value {
    pub fn as_number(&self) -> Option<f64> {
        match *self {
            Value::Number(v) => Some(v),
            Value::Category(_) => None,
        }
    }

    pub fn as_category(&self) -> Option<u32> {
        match *self {
            Value::Category(c) => Some(c),
            Value::Number(_) => None,
        }
    }
}

/// A value vector that conforms positionally to some schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    values: Vec<Value>,
}

impl Instance {
    pub fn new(schema: &Schema, values: Vec<Value>) -> Result<Self> {
        if values.len() != schema.len() {
            return Err(Error::Conformance(format!(
                "expected {} values, got {}",
                schema.len(),
                values.len()
            )));
        }
        for (j, (value, attr)) in values.iter().zip(schema.attributes()).enumerate() {
            match (value, &attr.kind) {
                (Value::Number(v), AttributeKind::Numeric) if v.is_finite() => {}
                (Value::Number(v), AttributeKind::Numeric) => {
                    return Err(Error::Conformance(format!("attribute {j}: non-finite value {v}")))
                }
                (Value::Category(c), AttributeKind::Categorical { values }) if (*c as usize) < values.len() => {}
                _ => {
                    return Err(Error::Conformance(format!(
                        "attribute {j}: value {value:?} does not match kind of {:?}",
                        attr.name
                    )))
                }
            }
        }
        Ok(Instance { values })
    }

    pub fn numeric(schema: &Schema, values: &[f64]) -> Result<Self> {
        Instance::new(schema, values.iter().map(|&v| Value::Number(v)).collect())
    }

    /// Builds an instance the caller guarantees to be conforming.
    pub(crate) fn from_values_unchecked(values: Vec<Value>) -> Self {
        Instance { values }
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }

    pub fn value(&self, index: usize) -> Value {
        self.values[index]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// All values as reals, or `None` when a categorical value is present.
    pub fn to_reals(&self) -> Option<Vec<f64>> {
        self.values.iter().map(Value::as_number).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Bounds {
    pub fn contains(&self, v: f64) -> bool {
        self.min <= v && v <= self.max
    }
}

/// Per-attribute observed bounds: `Some` for numeric attributes with at least
/// one observation, `None` otherwise.
pub fn compute_bounds(schema: &Schema, instances: &[Instance]) -> Vec<Option<Bounds>> {
    (0..schema.len())
        .map(|j| {
            if !schema.kind(j).is_numeric() {
                return None;
            }
            instances
                .iter()
                .filter_map(|x| x.value(j).as_number())
                .fold(None, |acc: Option<Bounds>, v| {
                    Some(match acc {
                        None => Bounds { min: v, max: v },
                        Some(b) => Bounds {
                            min: b.min.min(v),
                            max: b.max.max(v),
                        },
                    })
                })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    instances: Vec<Instance>,
    labels: Option<Vec<u32>>,
    bounds: Vec<Option<Bounds>>,
}

impl Dataset {
    /// Instances are assumed to conform to `schema`; bounds are computed here.
    pub fn new(schema: Schema, instances: Vec<Instance>, labels: Option<Vec<u32>>) -> Result<Self> {
        if let Some(labels) = &labels {
            if labels.len() != instances.len() {
                return Err(Error::Shape(format!(
                    "{} labels for {} instances",
                    labels.len(),
                    instances.len()
                )));
            }
        }
        if let Some(bad) = instances.iter().position(|x| x.len() != schema.len()) {
            return Err(Error::Shape(format!(
                "instance {bad} has {} values, schema has {}",
                instances[bad].len(),
                schema.len()
            )));
        }
        let bounds = compute_bounds(&schema, &instances);
        Ok(Dataset {
            schema,
            instances,
            labels,
            bounds,
        })
    }

    /// Numeric-only dataset from row-major reals.
    pub fn from_rows(schema: Schema, rows: &[Vec<f64>], labels: Option<Vec<u32>>) -> Result<Self> {
        let instances = rows
            .iter()
            .map(|r| Instance::numeric(&schema, r))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(schema, instances, labels)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn bounds(&self) -> &[Option<Bounds>] {
        &self.bounds
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Rows `range` as a new dataset (bounds recomputed over the subset).
    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        let instances = self.instances[range.clone()].to_vec();
        let labels = self.labels.as_ref().map(|l| l[range].to_vec());
        let bounds = compute_bounds(&self.schema, &instances);
        Dataset {
            schema: self.schema.clone(),
            instances,
            labels,
            bounds,
        }
    }
}
