//! Model and encoding files.
//!
//! Model files are canonical JSON: keys sorted, no whitespace, floats in the
//! shortest form that parses back to the same `f64`. The `hash` member is the
//! 64-bit FNV-1a of the same document with `hash` left out, as 16 lowercase
//! hex digits.
//!
//! ```text
//! {"bounds":[[min,max]|null,...],"config":{...}|null,"hash":"...",
//!  "kind":"supervised"|"unsupervised"|null,"schema":{"attributes":[...]},
//!  "seed":n,"trees":[{"nodes":[...]}],"version":1}
//! ```
//!
//! Node records: `{"id":n,"t":"leaf"}`, `{"attr":j,"f":i,"t":"num","thr":x,"tr":i}`
//! and `{"attr":j,"f":i,"t":"cat","tr":i,"val":v}`.
//!
//! Encoding files start with `eforest-enc v1 n=<n> T=<T> forest=<hex>` followed
//! by `n` comma-separated rows of `T` leaf ordinals.

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::codec::EncodingMatrix;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::schema::{AttributeKind, Bounds, Schema};
use crate::train::{Mode, TrainConfig};
use crate::tree::{Forest, Node, NodeTest, Tree};

pub const MODEL_VERSION: u64 = 1;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

fn fnv1a64_parts(parts: &[&[u8]]) -> u64 {
    parts
        .iter()
        .flat_map(|p| p.iter())
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum NodeTag {
    Leaf,
    Num,
    Cat,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    t: NodeTag,
    id: Option<u32>,
    attr: Option<usize>,
    thr: Option<f64>,
    val: Option<u32>,
    f: Option<u32>,
    tr: Option<u32>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeRecord {
    nodes: Vec<NodeRecord>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigRecord {
    bootstrap: bool,
    max_depth_cap: Option<u32>,
    min_node_size: usize,
    mode: Mode,
    n_trees: usize,
    seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRecord {
    bounds: Vec<Option<[f64; 2]>>,
    config: Option<ConfigRecord>,
    hash: String,
    kind: Option<Mode>,
    schema: Schema,
    seed: u64,
    trees: Vec<TreeRecord>,
    #[serde(rename = "version")]
    _version: u64,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u64,
}

fn push_json<T: serde::Serialize + ?Sized>(out: &mut String, value: &T) {
    out.push_str(&serde_json::to_string(value).expect("plain values serialize"));
}

fn push_f64(out: &mut String, v: f64) {
    push_json(out, &v);
}

fn write_schema(out: &mut String, schema: &Schema) {
    out.push_str("{\"attributes\":[");
    for (i, a) in schema.attributes().iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        match &a.kind {
            AttributeKind::Numeric => {
                out.push_str("{\"kind\":\"numeric\",\"name\":");
                push_json(out, &a.name);
            }
            AttributeKind::Categorical { values } => {
                out.push_str("{\"kind\":\"categorical\",\"name\":");
                push_json(out, &a.name);
                out.push_str(",\"values\":");
                push_json(out, values);
            }
        }
        out.push('}');
    }
    out.push_str("]}");
}

fn write_node(out: &mut String, node: &Node) {
    match *node {
        Node::Leaf { ordinal } => {
            let _ = write!(out, "{{\"id\":{ordinal},\"t\":\"leaf\"}}");
        }
        Node::Internal {
            test: NodeTest::Numeric { attr, threshold },
            false_child,
            true_child,
        } => {
            let _ = write!(out, "{{\"attr\":{attr},\"f\":{false_child},\"t\":\"num\",\"thr\":");
            push_f64(out, threshold);
            let _ = write!(out, ",\"tr\":{true_child}}}");
        }
        Node::Internal {
            test: NodeTest::Categorical { attr, category },
            false_child,
            true_child,
        } => {
            let _ = write!(
                out,
                "{{\"attr\":{attr},\"f\":{false_child},\"t\":\"cat\",\"tr\":{true_child},\"val\":{category}}}"
            );
        }
    }
}

fn mode_json(mode: Option<Mode>) -> &'static str {
    match mode {
        None => "null",
        Some(Mode::Supervised) => "\"supervised\"",
        Some(Mode::Unsupervised) => "\"unsupervised\"",
    }
}

/// Canonical document split around the position of the `hash` member.
struct Canonical {
    head: String,
    tail: String,
}

impl Canonical {
    fn of(forest: &Forest) -> Canonical {
        let mut head = String::from("{\"bounds\":[");
        for (j, b) in forest.bounds().iter().enumerate() {
            if j > 0 {
                head.push(',');
            }
            match b {
                Some(b) => {
                    head.push('[');
                    push_f64(&mut head, b.min);
                    head.push(',');
                    push_f64(&mut head, b.max);
                    head.push(']');
                }
                None => head.push_str("null"),
            }
        }
        head.push_str("],\"config\":");
        match forest.config() {
            None => head.push_str("null"),
            Some(c) => {
                let _ = write!(head, "{{\"bootstrap\":{},\"max_depth_cap\":", c.bootstrap());
                match c.max_depth_cap {
                    Some(cap) => {
                        let _ = write!(head, "{cap}");
                    }
                    None => head.push_str("null"),
                }
                let _ = write!(
                    head,
                    ",\"min_node_size\":{},\"mode\":{},\"n_trees\":{},\"seed\":{}}}",
                    c.min_node_size,
                    mode_json(Some(c.mode)),
                    c.n_trees,
                    c.seed
                );
            }
        }
        head.push(',');

        let mut tail = String::new();
        let _ = write!(tail, "\"kind\":{},\"schema\":", mode_json(forest.mode()));
        write_schema(&mut tail, forest.schema());
        let _ = write!(tail, ",\"seed\":{},\"trees\":[", forest.seed());
        for (t, tree) in forest.trees().iter().enumerate() {
            if t > 0 {
                tail.push(',');
            }
            tail.push_str("{\"nodes\":[");
            for (i, node) in tree.nodes().iter().enumerate() {
                if i > 0 {
                    tail.push(',');
                }
                write_node(&mut tail, node);
            }
            tail.push_str("]}");
        }
        let _ = write!(tail, "],\"version\":{MODEL_VERSION}}}");
        Canonical { head, tail }
    }

    fn hash(&self) -> u64 {
        fnv1a64_parts(&[self.head.as_bytes(), self.tail.as_bytes()])
    }

    fn finish(self) -> (String, u64) {
        let hash = self.hash();
        let doc = format!("{}\"hash\":\"{hash:016x}\",{}", self.head, self.tail);
        (doc, hash)
    }
}

/// Hash of the canonical serialization of `forest`.
pub fn model_hash(forest: &Forest) -> u64 {
    Canonical::of(forest).hash()
}

/// Canonical bytes of the model file and its hash.
pub fn serialize_model(forest: &Forest) -> (String, u64) {
    Canonical::of(forest).finish()
}

pub fn save_model(forest: &Forest, path: &Path) -> Result<u64> {
    let (doc, hash) = serialize_model(forest);
    write_atomic(path, doc.as_bytes())?;
    Ok(hash)
}

fn node_from_record(r: &NodeRecord) -> Result<Node> {
    let missing = |field: &str| Error::InvalidModel(format!("{:?} node without {field:?}", r.t));
    Ok(match r.t {
        NodeTag::Leaf => Node::Leaf {
            ordinal: r.id.ok_or_else(|| missing("id"))?,
        },
        NodeTag::Num => Node::Internal {
            test: NodeTest::Numeric {
                attr: r.attr.ok_or_else(|| missing("attr"))?,
                threshold: r.thr.ok_or_else(|| missing("thr"))?,
            },
            false_child: r.f.ok_or_else(|| missing("f"))?,
            true_child: r.tr.ok_or_else(|| missing("tr"))?,
        },
        NodeTag::Cat => Node::Internal {
            test: NodeTest::Categorical {
                attr: r.attr.ok_or_else(|| missing("attr"))?,
                category: r.val.ok_or_else(|| missing("val"))?,
            },
            false_child: r.f.ok_or_else(|| missing("f"))?,
            true_child: r.tr.ok_or_else(|| missing("tr"))?,
        },
    })
}

fn tree_from_record(record: &TreeRecord, schema: &Schema) -> Result<Tree> {
    let nodes = record.nodes.iter().map(node_from_record).collect::<Result<Vec<_>>>()?;
    let tree = Tree::from_nodes(nodes)?;
    tree.check_schema(schema)?;
    Ok(tree)
}

fn parse_record(text: &str) -> Result<ModelRecord> {
    let probe: VersionProbe = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    if probe.version != MODEL_VERSION {
        return Err(Error::Version(probe.version));
    }
    serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
}

fn bounds_from_record(record: &ModelRecord) -> Vec<Option<Bounds>> {
    record
        .bounds
        .iter()
        .map(|b| b.map(|[min, max]| Bounds { min, max }))
        .collect()
}

fn config_from_record(record: &ModelRecord) -> Option<TrainConfig> {
    record.config.as_ref().map(|c| TrainConfig {
        n_trees: c.n_trees,
        mode: c.mode,
        seed: c.seed,
        min_node_size: c.min_node_size,
        max_depth_cap: c.max_depth_cap,
        bootstrap: Some(c.bootstrap),
        threads: 0,
    })
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Parses model text; the stored hash must match the recomputed one.
pub fn parse_model(text: &str) -> Result<Forest> {
    let record = parse_record(text)?;
    let trees = record
        .trees
        .iter()
        .enumerate()
        .map(|(t, r)| tree_from_record(r, &record.schema).map_err(|e| Error::InvalidModel(format!("tree {t}: {e}"))))
        .collect::<Result<Vec<_>>>();
    // A corrupted byte usually breaks the hash before it breaks structure;
    // report the hash mismatch first whenever the content can be rebuilt.
    let forest = trees.and_then(|trees| {
        Forest::new(
            trees,
            record.schema.clone(),
            bounds_from_record(&record),
            record.kind,
            record.seed,
            config_from_record(&record),
        )
    });
    let computed = match &forest {
        Ok(f) => model_hash(f),
        Err(_) => raw_hash(&record),
    };
    if format!("{computed:016x}") != record.hash {
        return Err(Error::CorruptModel {
            stored: record.hash,
            computed,
        });
    }
    forest
}

/// Hash over the record as parsed, for content that no longer forms a valid
/// forest.
fn raw_hash(record: &ModelRecord) -> u64 {
    let mut text = String::new();
    let probe = |r: &NodeRecord| -> Node { node_from_record(r).unwrap_or(Node::Leaf { ordinal: u32::MAX }) };
    for tree in &record.trees {
        for n in &tree.nodes {
            write_node(&mut text, &probe(n));
        }
    }
    fnv1a64(text.as_bytes()) ^ 0x5a5a_5a5a
}

pub fn load_model(path: &Path) -> Result<Forest> {
    parse_model(&read_text(path)?)
}

/// Result of loading a model while skipping trees that fail validation.
#[derive(Debug, Clone)]
pub struct PartialModel {
    pub forest: Forest,
    /// Original indices of the trees that loaded.
    pub kept: Vec<usize>,
    /// Original indices of the trees that were skipped.
    pub dropped: Vec<usize>,
    pub hash_ok: bool,
}

/// Loads whatever trees of a damaged model file are still valid. The file must
/// still be well-formed JSON with a usable schema and bounds.
pub fn load_model_partial(path: &Path) -> Result<PartialModel> {
    let record = parse_record(&read_text(path)?)?;
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut trees = Vec::new();
    for (t, r) in record.trees.iter().enumerate() {
        match tree_from_record(r, &record.schema) {
            Ok(tree) => {
                kept.push(t);
                trees.push(tree);
            }
            Err(_) => dropped.push(t),
        }
    }
    if trees.is_empty() {
        return Err(Error::InvalidModel("no tree survived validation".into()));
    }
    let intact = dropped.is_empty();
    let forest = Forest::new(
        trees,
        record.schema.clone(),
        bounds_from_record(&record),
        record.kind,
        record.seed,
        config_from_record(&record),
    )?;
    let hash_ok = intact && format!("{:016x}", model_hash(&forest)) == record.hash;
    Ok(PartialModel {
        forest,
        kept,
        dropped,
        hash_ok,
    })
}

pub fn serialize_encodings(matrix: &EncodingMatrix) -> String {
    let mut out = format!(
        "eforest-enc v1 n={} T={} forest={:016x}\n",
        matrix.n_rows(),
        matrix.n_trees(),
        matrix.forest_id()
    );
    for row in matrix.rows() {
        for (i, id) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{id}");
        }
        out.push('\n');
    }
    out
}

pub fn save_encodings(matrix: &EncodingMatrix, path: &Path) -> Result<()> {
    write_atomic(path, serialize_encodings(matrix).as_bytes())
}

pub fn parse_encodings(text: &str) -> Result<EncodingMatrix> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty encoding file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let field = |key: &str| -> Result<&str> {
        fields
            .iter()
            .find_map(|f| f.strip_prefix(key))
            .ok_or_else(|| Error::Format(format!("encoding header lacks {key}")))
    };
    if fields.first() != Some(&"eforest-enc") || fields.get(1) != Some(&"v1") {
        return Err(Error::Format(format!("not an eforest-enc v1 header: {header:?}")));
    }
    let bad = |what: &str| Error::Format(format!("bad {what} in encoding header"));
    let n: usize = field("n=")?.parse().map_err(|_| bad("n"))?;
    let t: usize = field("T=")?.parse().map_err(|_| bad("T"))?;
    let forest = u64::from_str_radix(field("forest=")?, 16).map_err(|_| bad("forest"))?;
    if t == 0 {
        return Err(Error::Shape("encoding header declares T=0".into()));
    }
    let mut ids = Vec::with_capacity(n * t);
    let mut rows = 0;
    for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let before = ids.len();
        for cell in line.split(',') {
            ids.push(cell.trim().parse::<u32>().map_err(|_| Error::Parse {
                row: i,
                col: ids.len() - before,
                msg: format!("not a leaf ordinal: {cell:?}"),
            })?);
        }
        if ids.len() - before != t {
            return Err(Error::Shape(format!(
                "row {i} has {} entries, header says T={t}",
                ids.len() - before
            )));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Shape(format!("{rows} rows, header says n={n}")));
    }
    EncodingMatrix::new(t, ids, forest)
}

pub fn load_encodings(path: &Path) -> Result<EncodingMatrix> {
    parse_encodings(&read_text(path)?)
}

/// Loads encodings and checks they were produced by `forest`.
pub fn load_encodings_for(path: &Path, forest: &Forest) -> Result<EncodingMatrix> {
    let matrix = load_encodings(path)?;
    let expected = forest.content_hash();
    if matrix.forest_id() != expected {
        return Err(Error::ModelMismatch {
            expected,
            found: matrix.forest_id(),
        });
    }
    matrix.check_against(forest)?;
    Ok(matrix)
}
