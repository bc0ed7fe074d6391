//! Ingestion of delimited text and user-driven schema binding.
//!
//! A [`RawTable`] keeps every field as text. Binding a [`Schema`] produces a
//! [`BoundDataset`]: dimension columns are dictionary-encoded (dictionary sorted
//! by code point) and measure columns are parsed into `f64`.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, LazyLock};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value substituted for an empty dimension field.
pub const BLANK: &str = "(blank)";

static NEXT_INSTANCE: AtomicU64 = AtomicU64::new(1);

static DECIMAL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[+-]?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)$").unwrap());

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTable {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for name in &columns {
            if name.is_empty() {
                return Err(Error::Parse {
                    row: 1,
                    message: "empty column name".into(),
                });
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Parse {
                    row: 1,
                    message: format!("duplicate column name `{name}`"),
                });
            }
        }
        if let Some((i, row)) = rows
            .iter()
            .enumerate()
            .find(|(_, r)| r.len() != columns.len())
        {
            return Err(Error::Parse {
                row: i + 1,
                message: format!("expected {} fields, found {}", columns.len(), row.len()),
            });
        }
        Ok(RawTable { columns, rows })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// Writes the table back as delimited text with a header row.
    pub fn to_delimited(&self, delimiter: char) -> Result<String> {
        let delimiter = ascii_delimiter(delimiter)?;
        let mut writer = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_writer(Vec::new());
        let io = |e: csv::Error| Error::invalid(e.to_string());
        writer.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            writer.write_record(row).map_err(io)?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| Error::invalid(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
    }
}

fn ascii_delimiter(delimiter: char) -> Result<u8> {
    if delimiter.is_ascii() && delimiter != '"' && delimiter != '\n' && delimiter != '\r' {
        Ok(delimiter as u8)
    } else {
        Err(Error::invalid(format!(
            "delimiter must be a single ASCII character other than quote or newline, got {delimiter:?}"
        )))
    }
}

/// Parses RFC-4180 style delimited text.
///
/// Without a header, columns are named `column1`, `column2`, ... Row numbers in
/// errors are 1-based line numbers in the input.
pub fn parse_table(bytes: &[u8], delimiter: char, has_header: bool) -> Result<RawTable> {
    let delimiter = ascii_delimiter(delimiter)?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(Error::EmptyInput);
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);

    let mut columns: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            row: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let fields: Vec<String> = record.iter().map(str::to_string).collect();
        match &columns {
            None => {
                if has_header {
                    columns = Some(fields);
                    continue;
                }
                columns = Some((1..=fields.len()).map(|i| format!("column{i}")).collect());
            }
            Some(cols) if cols.len() != fields.len() => {
                return Err(Error::Parse {
                    row: line,
                    message: format!("expected {} fields, found {}", cols.len(), fields.len()),
                });
            }
            Some(_) => {}
        }
        rows.push(fields);
    }
    let columns = columns.ok_or(Error::EmptyInput)?;
    RawTable::new(columns, rows).map_err(|e| match e {
        // Header problems are reported against line 1.
        Error::Parse { message, .. } if has_header => Error::Parse { row: 1, message },
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub dimensions: Vec<String>,
    pub measures: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct DimensionColumn {
    pub name: String,
    /// Distinct values sorted by code point.
    pub dictionary: Vec<String>,
    /// Per-row index into `dictionary`.
    pub codes: Vec<u32>,
}

impl DimensionColumn {
    pub fn code_of(&self, value: &str) -> Option<u32> {
        self.dictionary
            .binary_search_by(|v| v.as_str().cmp(value))
            .ok()
            .map(|i| i as u32)
    }
}

#[derive(Debug, Clone)]
pub struct MeasureColumn {
    pub name: String,
    pub values: Vec<f64>,
}

/// A raw table together with a validated schema. Immutable once built.
#[derive(Debug, Clone)]
pub struct BoundDataset {
    id: String,
    instance: u64,
    table: Arc<RawTable>,
    schema: Schema,
    dimensions: Vec<DimensionColumn>,
    measures: Vec<MeasureColumn>,
}

impl BoundDataset {
    pub fn id(&self) -> &str {
        &self.id
    }

    /// Process-unique number of this binding; rebinding a table yields a new one.
    pub fn instance(&self) -> u64 {
        self.instance
    }

    pub fn table(&self) -> &RawTable {
        &self.table
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn fact_count(&self) -> usize {
        self.table.len()
    }

    pub fn dimensions(&self) -> &[DimensionColumn] {
        &self.dimensions
    }

    pub fn dimension(&self, name: &str) -> Result<&DimensionColumn> {
        self.dimensions
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::UnknownDimension(name.to_string()))
    }

    pub fn dimension_index(&self, name: &str) -> Result<usize> {
        self.dimensions
            .iter()
            .position(|d| d.name == name)
            .ok_or_else(|| Error::UnknownDimension(name.to_string()))
    }

    pub fn measure(&self, name: &str) -> Result<&MeasureColumn> {
        self.measures
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| Error::UnknownMeasure(name.to_string()))
    }

    /// Sorted distinct values of a dimension.
    pub fn distinct_values(&self, dimension: &str) -> Result<&[String]> {
        Ok(&self.dimension(dimension)?.dictionary)
    }
}

/// Parses a measure field. A single trailing `$` is tolerated.
pub fn parse_measure(text: &str) -> Option<f64> {
    let trimmed = text.trim();
    let trimmed = trimmed.strip_suffix('$').unwrap_or(trimmed).trim_end();
    if DECIMAL.is_match(trimmed) {
        trimmed.parse().ok()
    } else {
        None
    }
}

/// Binds dimension and measure columns of `table`, producing an immutable dataset.
pub fn bind_schema(
    id: impl Into<String>,
    table: Arc<RawTable>,
    dimension_cols: &[String],
    measure_cols: &[String],
) -> Result<BoundDataset> {
    if dimension_cols.is_empty() {
        return Err(Error::Schema("at least one dimension is required".into()));
    }
    let mut seen = BTreeSet::new();
    for name in dimension_cols.iter().chain(measure_cols) {
        if !seen.insert(name.as_str()) {
            return Err(Error::Schema(format!(
                "column `{name}` is listed more than once"
            )));
        }
    }
    let dim_idx = dimension_cols
        .iter()
        .map(|c| table.column_index(c))
        .collect::<Result<Vec<_>>>()?;
    let measure_idx = measure_cols
        .iter()
        .map(|c| table.column_index(c))
        .collect::<Result<Vec<_>>>()?;

    let dimensions = dim_idx
        .iter()
        .zip(dimension_cols)
        .map(|(&col, name)| {
            let value = |row: &Vec<String>| -> String {
                if row[col].is_empty() {
                    BLANK.to_string()
                } else {
                    row[col].clone()
                }
            };
            let dictionary: Vec<String> = table
                .rows()
                .iter()
                .map(value)
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let codes = table
                .rows()
                .iter()
                .map(|row| {
                    let v = value(row);
                    dictionary.binary_search(&v).expect("value in dictionary") as u32
                })
                .collect();
            DimensionColumn {
                name: name.clone(),
                dictionary,
                codes,
            }
        })
        .collect();

    let measures = measure_idx
        .iter()
        .zip(measure_cols)
        .map(|(&col, name)| {
            let values = table
                .rows()
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    parse_measure(&row[col]).ok_or_else(|| Error::NonNumeric {
                        // +1 for 1-based, +1 for the header line.
                        row: i + 2,
                        column: name.clone(),
                        value: row[col].clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(MeasureColumn {
                name: name.clone(),
                values,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(BoundDataset {
        id: id.into(),
        instance: NEXT_INSTANCE.fetch_add(1, Ordering::Relaxed),
        table,
        schema: Schema {
            dimensions: dimension_cols.to_vec(),
            measures: measure_cols.to_vec(),
        },
        dimensions,
        measures,
    })
}

/// Free-function form of [`BoundDataset::distinct_values`].
pub fn distinct_values<'a>(dataset: &'a BoundDataset, dimension: &str) -> Result<&'a [String]> {
    dataset.distinct_values(dimension)
}
