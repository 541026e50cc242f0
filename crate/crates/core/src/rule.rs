//! Per-attribute constraints, path rules and the maximal-compatible rule.
//!
//! A numeric split `x[j] >= t` taken true contributes `[t, +inf)`, taken false
//! contributes `(-inf, t)`. A categorical split `x[j] == v` contributes `{v}`
//! or every other category. Conjunctions collapse by intersection, one
//! constraint per attribute. The maximal-compatible rule (MCR) intersects the
//! rules of all decision paths of an encoding and closes the remaining
//! infinite ends with the training bounds.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::schema::{AttributeKind, Bounds, Instance, Schema, Value};
use crate::tree::NodeTest;

/// Relative inset used to sample strictly inside an open endpoint.
pub const OPEN_INSET: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    lo_closed: bool,
    hi: f64,
    hi_closed: bool,
}

impl Interval {
    pub const UNBOUNDED: Interval = Interval {
        lo: f64::NEG_INFINITY,
        lo_closed: false,
        hi: f64::INFINITY,
        hi_closed: false,
    };

    /// `None` when the endpoints describe an empty set.
    pub fn new(lo: f64, lo_closed: bool, hi: f64, hi_closed: bool) -> Option<Interval> {
        let lo_closed = lo_closed && lo.is_finite();
        let hi_closed = hi_closed && hi.is_finite();
        let nonempty = lo < hi || (lo == hi && lo_closed && hi_closed);
        nonempty.then_some(Interval {
            lo,
            lo_closed,
            hi,
            hi_closed,
        })
    }

    /// `[t, +inf)`
    pub fn at_least(t: f64) -> Interval {
        Interval {
            lo: t,
            lo_closed: true,
            ..Interval::UNBOUNDED
        }
    }

    /// `(-inf, t)`
    pub fn below(t: f64) -> Interval {
        Interval {
            hi: t,
            hi_closed: false,
            ..Interval::UNBOUNDED
        }
    }

    /// `[a, b]`. Panics if `a > b`.
    pub fn closed(a: f64, b: f64) -> Interval {
        Interval::new(a, true, b, true).expect("closed interval with lo > hi")
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn lo_closed(&self) -> bool {
        self.lo_closed
    }

    pub fn hi_closed(&self) -> bool {
        self.hi_closed
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, v: f64) -> bool {
        let above = if self.lo_closed { v >= self.lo } else { v > self.lo };
        let below = if self.hi_closed { v <= self.hi } else { v < self.hi };
        above && below
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let (lo, lo_closed) = if self.lo > other.lo {
            (self.lo, self.lo_closed)
        } else if other.lo > self.lo {
            (other.lo, other.lo_closed)
        } else {
            (self.lo, self.lo_closed && other.lo_closed)
        };
        let (hi, hi_closed) = if self.hi < other.hi {
            (self.hi, self.hi_closed)
        } else if other.hi < self.hi {
            (other.hi, other.hi_closed)
        } else {
            (self.hi, self.hi_closed && other.hi_closed)
        };
        Interval::new(lo, lo_closed, hi, hi_closed)
    }

    /// `self ⊆ other`
    pub fn is_subset_of(&self, other: &Interval) -> bool {
        let lo_ok = self.lo > other.lo || (self.lo == other.lo && (other.lo_closed || !self.lo_closed));
        let hi_ok = self.hi < other.hi || (self.hi == other.hi && (other.hi_closed || !self.hi_closed));
        lo_ok && hi_ok
    }

    /// Intersection with the closed box `[min, max]`.
    pub fn clamp(&self, bounds: Bounds) -> Option<Interval> {
        self.intersect(&Interval::closed(bounds.min, bounds.max))
    }

    fn sample(&self, strategy: Strategy) -> f64 {
        let (lo, hi) = (self.lo, self.hi);
        if lo == hi {
            return lo;
        }
        let width = hi - lo;
        let candidate = match strategy {
            Strategy::Min if self.lo_closed => lo,
            Strategy::Min => lo + OPEN_INSET * width,
            Strategy::Max if self.hi_closed => hi,
            Strategy::Max => hi - OPEN_INSET * width,
            Strategy::Mean | Strategy::Median => lo + width / 2.0,
        };
        if self.contains(candidate) {
            return candidate;
        }
        // The inset vanished in rounding; step one ulp inwards instead.
        let stepped = match strategy {
            Strategy::Max => hi.next_down(),
            _ => lo.next_up(),
        };
        if self.contains(stepped) {
            stepped
        } else {
            lo + width / 2.0
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}, {}{}",
            if self.lo_closed { '[' } else { '(' },
            self.lo,
            self.hi,
            if self.hi_closed { ']' } else { ')' }
        )
    }
}

/// Allowed category indices of one categorical attribute, sorted and unique.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategorySet {
    allowed: Vec<u32>,
}

impl CategorySet {
    pub fn singleton(value: u32) -> CategorySet {
        CategorySet { allowed: vec![value] }
    }

    pub fn all(count: usize) -> CategorySet {
        CategorySet {
            allowed: (0..count as u32).collect(),
        }
    }

    pub fn all_except(value: u32, count: usize) -> CategorySet {
        CategorySet {
            allowed: (0..count as u32).filter(|&c| c != value).collect(),
        }
    }

    pub fn from_values(values: impl IntoIterator<Item = u32>) -> CategorySet {
        let mut allowed: Vec<u32> = values.into_iter().collect();
        allowed.sort_unstable();
        allowed.dedup();
        CategorySet { allowed }
    }

    pub fn allowed(&self) -> &[u32] {
        &self.allowed
    }

    pub fn is_empty(&self) -> bool {
        self.allowed.is_empty()
    }

    pub fn contains(&self, value: u32) -> bool {
        self.allowed.binary_search(&value).is_ok()
    }

    pub fn intersect(&self, other: &CategorySet) -> Option<CategorySet> {
        let allowed: Vec<u32> = self.allowed.iter().copied().filter(|c| other.contains(*c)).collect();
        (!allowed.is_empty()).then_some(CategorySet { allowed })
    }

    pub fn is_subset_of(&self, other: &CategorySet) -> bool {
        self.allowed.iter().all(|c| other.contains(*c))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    Interval(Interval),
    Categories(CategorySet),
}

impl Constraint {
    /// `None` for an empty intersection or mismatched kinds.
    pub fn intersect(&self, other: &Constraint) -> Option<Constraint> {
        match (self, other) {
            (Constraint::Interval(a), Constraint::Interval(b)) => a.intersect(b).map(Constraint::Interval),
            (Constraint::Categories(a), Constraint::Categories(b)) => a.intersect(b).map(Constraint::Categories),
            _ => None,
        }
    }

    pub fn admits(&self, value: Value) -> bool {
        match (self, value) {
            (Constraint::Interval(i), Value::Number(v)) => i.contains(v),
            (Constraint::Categories(s), Value::Category(c)) => s.contains(c),
            _ => false,
        }
    }

    pub fn is_subset_of(&self, other: &Constraint) -> bool {
        match (self, other) {
            (Constraint::Interval(a), Constraint::Interval(b)) => a.is_subset_of(b),
            (Constraint::Categories(a), Constraint::Categories(b)) => a.is_subset_of(b),
            _ => false,
        }
    }

    pub fn as_interval(&self) -> Option<&Interval> {
        match self {
            Constraint::Interval(i) => Some(i),
            Constraint::Categories(_) => None,
        }
    }

    pub fn as_categories(&self) -> Option<&CategorySet> {
        match self {
            Constraint::Categories(s) => Some(s),
            Constraint::Interval(_) => None,
        }
    }

    fn matches_kind(&self, kind: &AttributeKind) -> bool {
        match (self, kind) {
            (Constraint::Interval(_), AttributeKind::Numeric) => true,
            (Constraint::Categories(s), AttributeKind::Categorical { values }) => {
                s.allowed.iter().all(|&c| (c as usize) < values.len())
            }
            _ => false,
        }
    }
}

/// Conjunction of per-attribute constraints. Absent attributes are free.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Rule {
    constraints: BTreeMap<usize, Constraint>,
}

impl Rule {
    pub fn new() -> Rule {
        Rule::default()
    }

    pub fn get(&self, attr: usize) -> Option<&Constraint> {
        self.constraints.get(&attr)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Constraint)> {
        self.constraints.iter().map(|(&j, c)| (j, c))
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    /// Conjoins `constraint` into the rule; `false` leaves the rule unchanged
    /// and signals an empty intersection.
    pub fn conjoin(&mut self, attr: usize, constraint: Constraint) -> bool {
        match self.constraints.get(&attr) {
            None => {
                self.constraints.insert(attr, constraint);
                true
            }
            Some(existing) => match existing.intersect(&constraint) {
                Some(c) => {
                    self.constraints.insert(attr, c);
                    true
                }
                None => false,
            },
        }
    }

    pub fn contains(&self, instance: &Instance) -> bool {
        self.constraints
            .iter()
            .all(|(&j, c)| j < instance.len() && c.admits(instance.value(j)))
    }

    pub fn check_schema(&self, schema: &Schema) -> Result<()> {
        for (&j, c) in &self.constraints {
            if j >= schema.len() || !c.matches_kind(schema.kind(j)) {
                return Err(Error::SchemaMismatch(format!(
                    "rule constraint on attribute {j} does not fit the schema"
                )));
            }
        }
        Ok(())
    }
}

/// Constraint implied by taking `taken` at a node with `test`.
pub fn predicate_to_constraint(test: &NodeTest, taken: bool, schema: &Schema) -> (usize, Constraint) {
    match *test {
        NodeTest::Numeric { attr, threshold } => {
            let interval = if taken {
                Interval::at_least(threshold)
            } else {
                Interval::below(threshold)
            };
            (attr, Constraint::Interval(interval))
        }
        NodeTest::Categorical { attr, category } => {
            let set = if taken {
                CategorySet::singleton(category)
            } else {
                let count = schema.kind(attr).category_count().unwrap_or(0);
                CategorySet::all_except(category, count)
            };
            (attr, Constraint::Categories(set))
        }
    }
}

/// Collapses a predicate list into one constraint per attribute.
pub fn simplify(path_rule: &[(usize, Constraint)]) -> Result<Rule> {
    let mut rule = Rule::new();
    for (attr, constraint) in path_rule {
        if !rule.conjoin(*attr, constraint.clone()) {
            return Err(Error::Contradiction { attr: *attr });
        }
    }
    Ok(rule)
}

/// Intersection of rules over every attribute, closed by the bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Mcr {
    constraints: Vec<Constraint>,
}

impl Mcr {
    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn get(&self, attr: usize) -> &Constraint {
        &self.constraints[attr]
    }

    pub fn contains(&self, instance: &Instance) -> bool {
        instance.len() == self.constraints.len()
            && self
                .constraints
                .iter()
                .zip(instance.values())
                .all(|(c, &v)| c.admits(v))
    }

    /// `self ⊆ other`, componentwise.
    pub fn is_subset_of(&self, other: &Mcr) -> bool {
        self.constraints.len() == other.constraints.len()
            && self
                .constraints
                .iter()
                .zip(&other.constraints)
                .all(|(a, b)| a.is_subset_of(b))
    }

    pub fn to_rule(&self) -> Rule {
        Rule {
            constraints: self.constraints.iter().cloned().enumerate().collect(),
        }
    }

    /// Debug rendering, one object per attribute.
    pub fn to_json(&self, schema: &Schema) -> serde_json::Value {
        let items = self
            .constraints
            .iter()
            .enumerate()
            .map(|(j, c)| match c {
                Constraint::Interval(i) => json!({
                    "attr": j,
                    "lo": i.lo,
                    "lo_closed": i.lo_closed,
                    "hi": i.hi,
                    "hi_closed": i.hi_closed,
                }),
                Constraint::Categories(s) => {
                    let names: Vec<&str> = match schema.kind(j) {
                        AttributeKind::Categorical { values } => {
                            s.allowed.iter().map(|&c| values[c as usize].as_str()).collect()
                        }
                        AttributeKind::Numeric => Vec::new(),
                    };
                    json!({ "attr": j, "allowed": names })
                }
            })
            .collect();
        serde_json::Value::Array(items)
    }
}

/// Intersects `rules` attribute by attribute. Attributes no rule touches get
/// the full bounds or the full category set, and every numeric interval is
/// cut down to the closed bounds box.
pub fn calculate_mcr<'a>(
    rules: impl IntoIterator<Item = &'a Rule>,
    bounds: &[Option<Bounds>],
    schema: &Schema,
) -> Result<Mcr> {
    let d = schema.len();
    let mut acc: Vec<Option<Constraint>> = vec![None; d];
    for rule in rules {
        for (j, c) in rule.iter() {
            if j >= d {
                return Err(Error::SchemaMismatch(format!("rule references attribute {j} ≥ d={d}")));
            }
            acc[j] = Some(match acc[j].take() {
                None => c.clone(),
                Some(prev) => prev.intersect(c).ok_or(Error::EmptyMcr { attr: j })?,
            });
        }
    }
    let constraints = acc
        .into_iter()
        .enumerate()
        .map(|(j, c)| match schema.kind(j) {
            AttributeKind::Numeric => {
                let b = bounds
                    .get(j)
                    .copied()
                    .flatten()
                    .ok_or_else(|| Error::Config(format!("no bounds for numeric attribute {j}")))?;
                let interval = match c {
                    None => Interval::UNBOUNDED,
                    Some(Constraint::Interval(i)) => i,
                    Some(Constraint::Categories(_)) => {
                        return Err(Error::SchemaMismatch(format!("category set on numeric attribute {j}")))
                    }
                };
                interval
                    .clamp(b)
                    .map(Constraint::Interval)
                    .ok_or(Error::EmptyMcr { attr: j })
            }
            AttributeKind::Categorical { values } => match c {
                None => Ok(Constraint::Categories(CategorySet::all(values.len()))),
                Some(c @ Constraint::Categories(_)) => Ok(c),
                Some(Constraint::Interval(_)) => {
                    Err(Error::SchemaMismatch(format!("interval on categorical attribute {j}")))
                }
            },
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Mcr { constraints })
}

/// Which point of each numeric interval to reconstruct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Min,
    Mean,
    /// Midpoint of the interval bounds; same point as `Mean`.
    Median,
    Max,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(Strategy::Min),
            "mean" => Ok(Strategy::Mean),
            "median" | "median-of-bounds" => Ok(Strategy::Median),
            "max" => Ok(Strategy::Max),
            other => Err(Error::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Min => "min",
            Strategy::Mean => "mean",
            Strategy::Median => "median",
            Strategy::Max => "max",
        })
    }
}

/// A point inside `mcr`. Categorical attributes take their lowest allowed
/// category.
pub fn representative(mcr: &Mcr, strategy: Strategy, schema: &Schema) -> Instance {
    debug_assert_eq!(mcr.constraints.len(), schema.len());
    let values = mcr
        .constraints
        .iter()
        .map(|c| match c {
            Constraint::Interval(i) => Value::Number(i.sample(strategy)),
            Constraint::Categories(s) => Value::Category(s.allowed[0]),
        })
        .collect();
    Instance::from_values_unchecked(values)
}
