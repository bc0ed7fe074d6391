//! Batch front end for tagcube: synthetic data, benchmarks, text output.

pub mod bench;
pub mod render;
pub mod synth;

use std::path::Path;
use std::sync::Arc;

use anyhow::{Context, Result};
use tagcube_core::{bind_schema, parse_table, BoundDataset};

/// Reads a delimited file and binds it. With no explicit dimensions, every
/// column that is not a measure becomes a dimension.
pub fn load_dataset(
    path: &Path,
    id: &str,
    delimiter: char,
    header: bool,
    dimensions: &[String],
    measures: &[String],
) -> Result<BoundDataset> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let table = Arc::new(parse_table(&bytes, delimiter, header)?);
    let dimensions: Vec<String> = if dimensions.is_empty() {
        table
            .columns()
            .iter()
            .filter(|c| !measures.contains(c))
            .cloned()
            .collect()
    } else {
        dimensions.to_vec()
    };
    Ok(bind_schema(id, table, &dimensions, measures)?)
}
