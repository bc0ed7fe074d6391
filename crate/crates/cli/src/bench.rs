//! Benchmark harnesses: iceberg approximation quality and layout heuristics.
//!
//! Rows come out in parameter order. Only the `*_ms` columns vary between
//! runs with the same inputs.

use std::time::Instant;

use anyhow::{ensure, Result};
use serde::Serialize;
use tagcube_core::layout::{mla_cost, HeuristicSpec};
use tagcube_core::similarity::{similarity_matrix, CellSource};
use tagcube_core::tagcloud::{fn_index, fp_index, relative_entropy};
use tagcube_core::{
    build_iceberg, topk_exact, topk_iceberg, Aggregator, BoundDataset, CuboidQuery, LayoutRegistry,
    SimilarityRegistry,
};

/// Iceberg limits and cloud sizes of the reference sweep.
pub const LIMITS: [usize; 5] = [150, 600, 1200, 4800, 19600];
pub const SIZES: [usize; 4] = [50, 100, 150, 200];

fn millis(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

#[derive(Debug, Clone, Serialize)]
pub struct IcebergRow {
    pub dataset: String,
    pub dims: String,
    pub limit: usize,
    pub size: usize,
    /// Tags in the exact cloud.
    pub tags: usize,
    /// Of the exact cloud; empty when it has fewer than two tags.
    pub relative_entropy: Option<f64>,
    pub fp_index: f64,
    pub fn_index: f64,
    pub iceberg_ms: f64,
    pub exact_ms: f64,
    pub build_ms: f64,
}

pub struct IcebergBench<'a> {
    pub dataset: &'a BoundDataset,
    /// Dimensions the iceberg materializes.
    pub base_dims: Vec<String>,
    /// One 1-tag cloud per display dimension.
    pub display_dims: Vec<String>,
    pub aggregator: Aggregator,
    pub measure: Option<String>,
    pub limits: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl IcebergBench<'_> {
    pub fn run(&self) -> Result<Vec<IcebergRow>> {
        ensure!(!self.limits.is_empty() && !self.sizes.is_empty(), "limits and sizes must be non-empty");
        for d in &self.display_dims {
            ensure!(self.base_dims.contains(d), "display dimension `{d}` is not in the iceberg");
        }
        let mut rows = Vec::new();
        for display in &self.display_dims {
            let query = CuboidQuery::new(vec![display.clone()], self.aggregator, self.measure.clone());
            for &limit in &self.limits {
                let start = Instant::now();
                let ice = build_iceberg(
                    self.dataset,
                    &self.base_dims,
                    self.aggregator,
                    self.measure.as_deref(),
                    limit,
                )?;
                let build_ms = millis(start);
                for &size in &self.sizes {
                    let start = Instant::now();
                    let approx = topk_iceberg(&ice, &query, size)?;
                    let iceberg_ms = millis(start);
                    let start = Instant::now();
                    let exact = topk_exact(self.dataset, &query, size)?;
                    let exact_ms = millis(start);
                    rows.push(IcebergRow {
                        dataset: self.dataset.id().to_string(),
                        dims: display.clone(),
                        limit,
                        size,
                        tags: exact.len(),
                        relative_entropy: relative_entropy(&exact).ok(),
                        fp_index: fp_index(&approx, &exact)?,
                        fn_index: fn_index(&approx, &exact)?,
                        iceberg_ms,
                        exact_ms,
                        build_ms,
                    });
                }
            }
        }
        Ok(rows)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LayoutRow {
    /// `display/cluster`.
    pub instance: String,
    pub similarity: String,
    pub heuristic: String,
    pub parameter: Option<u64>,
    pub tags: usize,
    pub mla_cost: f64,
    pub time_ms: f64,
}

pub struct LayoutBench<'a> {
    pub dataset: &'a BoundDataset,
    pub dims: Vec<String>,
    pub aggregator: Aggregator,
    pub measure: Option<String>,
    pub similarities: Vec<String>,
    pub heuristics: Vec<HeuristicSpec>,
    pub limit: usize,
    pub k: usize,
    pub seed: u64,
}

impl LayoutBench<'_> {
    /// Every ordered (display, cluster) pair of distinct dimensions, for each
    /// similarity measure and heuristic.
    pub fn run(&self, similarities: &SimilarityRegistry, layouts: &LayoutRegistry) -> Result<Vec<LayoutRow>> {
        let measures = self
            .similarities
            .iter()
            .map(|s| similarities.get(s))
            .collect::<Result<Vec<_>, _>>()?;
        let arrangers = self
            .heuristics
            .iter()
            .map(|h| layouts.build(h))
            .collect::<Result<Vec<_>, _>>()?;
        let mut rows = Vec::new();
        for display in &self.dims {
            for cluster in self.dims.iter().filter(|c| *c != display) {
                let dims = [display.clone(), cluster.clone()];
                let ice = build_iceberg(self.dataset, &dims, self.aggregator, self.measure.as_deref(), self.limit)?;
                let query = CuboidQuery::new(vec![display.clone()], self.aggregator, self.measure.clone());
                let cloud = topk_iceberg(&ice, &query, self.k)?;
                for measure in &measures {
                    let matrix = similarity_matrix(
                        CellSource::Iceberg(&ice),
                        &query,
                        &cloud,
                        std::slice::from_ref(cluster),
                        measure.as_ref(),
                    )?;
                    for arranger in &arrangers {
                        let start = Instant::now();
                        let arrangement = arranger.arrange(&matrix, self.seed)?;
                        let time_ms = millis(start);
                        let spec = arranger.spec();
                        rows.push(LayoutRow {
                            instance: format!("{display}/{cluster}"),
                            similarity: measure.name().to_string(),
                            heuristic: spec.name.clone(),
                            parameter: spec.parameter,
                            tags: matrix.len(),
                            mla_cost: mla_cost(&arrangement, &matrix)?.value(),
                            time_ms,
                        });
                    }
                }
            }
        }
        Ok(rows)
    }
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row)?;
    }
    Ok(String::from_utf8(writer.into_inner()?)?)
}
