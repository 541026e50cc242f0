//! Comma-separated tabular data with declared column kinds.

use std::path::Path;

use crate::error::{Error, Result};
use crate::schema::{Attribute, AttributeKind, Dataset, Instance, Schema, Value};

pub type ColumnKind = AttributeKind;

#[derive(Debug, Clone)]
pub struct CsvOptions {
    /// Kinds of the feature columns, in file order, label column excluded.
    pub kinds: Vec<ColumnKind>,
    /// Raw column index holding non-negative integer class labels.
    pub label_column: Option<usize>,
    pub has_header: bool,
}

impl CsvOptions {
    pub fn new(kinds: Vec<ColumnKind>) -> Self {
        CsvOptions {
            kinds,
            label_column: None,
            has_header: false,
        }
    }

    pub fn with_header(mut self) -> Self {
        self.has_header = true;
        self
    }

    pub fn with_label_column(mut self, col: usize) -> Self {
        self.label_column = Some(col);
        self
    }

    /// Parses a compact kind list such as `num*784` or
    /// `num,cat:RED|GREEN|BLUE,num*3`.
    pub fn parse_kinds(spec: &str) -> Result<Vec<ColumnKind>> {
        let mut kinds = Vec::new();
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (body, repeat) = match item.rsplit_once('*') {
                Some((body, n)) => {
                    let n = n
                        .parse::<usize>()
                        .map_err(|_| Error::Config(format!("bad repeat count in {item:?}")))?;
                    (body, n)
                }
                None => (item, 1),
            };
            let kind = if body == "num" {
                AttributeKind::Numeric
            } else if let Some(values) = body.strip_prefix("cat:") {
                AttributeKind::Categorical {
                    values: values.split('|').map(str::to_owned).collect(),
                }
            } else {
                return Err(Error::Config(format!("unknown column kind {body:?}")));
            };
            kinds.extend(std::iter::repeat_n(kind, repeat));
        }
        Ok(kinds)
    }
}

pub fn load_csv(path: &Path, options: &CsvOptions) -> Result<Dataset> {
    let bytes = super::read_maybe_gz(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .flexible(true)
        .from_reader(bytes.as_slice());
    let n_cols = options.kinds.len() + usize::from(options.label_column.is_some());
    let feature_cols: Vec<usize> = (0..n_cols).filter(|&c| Some(c) != options.label_column).collect();

    let names: Vec<String> = if options.has_header {
        let header = reader
            .headers()
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if header.len() != n_cols {
            return Err(Error::Parse {
                row: 0,
                col: header.len(),
                msg: format!("header has {} fields, expected {n_cols}", header.len()),
            });
        }
        feature_cols.iter().map(|&c| header[c].trim().to_owned()).collect()
    } else {
        (0..options.kinds.len()).map(|i| format!("x{i}")).collect()
    };
    let schema = Schema::new(
        names
            .into_iter()
            .zip(&options.kinds)
            .map(|(name, kind)| Attribute {
                name,
                kind: kind.clone(),
            })
            .collect(),
    )?;

    let mut instances = Vec::new();
    let mut labels = options.label_column.map(|_| Vec::new());
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if record.len() != n_cols {
            return Err(Error::Parse {
                row,
                col: record.len(),
                msg: format!("expected {n_cols} fields, found {}", record.len()),
            });
        }
        let mut values = Vec::with_capacity(options.kinds.len());
        for (&col, kind) in feature_cols.iter().zip(&options.kinds) {
            let cell = record[col].trim();
            values.push(match kind {
                AttributeKind::Numeric => {
                    let v: f64 = cell.parse().map_err(|_| Error::Parse {
                        row,
                        col,
                        msg: format!("not a number: {cell:?}"),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Parse {
                            row,
                            col,
                            msg: format!("non-finite number {cell:?}"),
                        });
                    }
                    Value::Number(v)
                }
                AttributeKind::Categorical { values } => {
                    let idx = values
                        .iter()
                        .position(|v| v == cell)
                        .ok_or_else(|| Error::UnknownCategory {
                            col,
                            value: cell.to_owned(),
                        })?;
                    Value::Category(idx as u32)
                }
            });
        }
        if let (Some(labels), Some(col)) = (labels.as_mut(), options.label_column) {
            let cell = record[col].trim();
            labels.push(cell.parse::<u32>().map_err(|_| Error::Parse {
                row,
                col,
                msg: format!("label is not a class index: {cell:?}"),
            })?);
        }
        instances.push(Instance::from_values_unchecked(values));
    }
    Dataset::new(schema, instances, labels)
}

/// Writes a header row of attribute names (plus `label` when present, as the
/// last column). Numbers use the shortest representation that reads back to
/// the same value.
pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let schema = dataset.schema();
    let mut header: Vec<&str> = schema.attributes().iter().map(|a| a.name.as_str()).collect();
    if dataset.labels().is_some() {
        header.push("label");
    }
    let csv_err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    writer.write_record(&header).map_err(csv_err)?;
    for (i, x) in dataset.instances().iter().enumerate() {
        let mut fields: Vec<String> = x
            .values()
            .iter()
            .zip(schema.attributes())
            .map(|(v, a)| match (v, &a.kind) {
                (Value::Number(v), _) => format!("{v}"),
                (Value::Category(c), AttributeKind::Categorical { values }) => values[*c as usize].clone(),
                (Value::Category(c), AttributeKind::Numeric) => c.to_string(),
            })
            .collect();
        if let Some(labels) = dataset.labels() {
            fields.push(labels[i].to_string());
        }
        writer.write_record(&fields).map_err(csv_err)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    super::write_atomic(path, &bytes)
}
