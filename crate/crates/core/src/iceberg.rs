//! Iceberg cuboids: the `limit` largest cells of a cuboid, kept in memory and
//! used in place of the base facts to answer top-k tag-cloud queries.
//!
//! Queries against an iceberg may project away dimensions, filter, and roll up.
//! All of that happens over retained cells only, so a query that needs cells
//! below the truncation point sees under-aggregated weights. This is the
//! approximation measured by the false-positive and false-negative indexes.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cube::{self, Accum, Address, Aggregator, CuboidQuery};
use crate::error::{Error, Result};
use crate::fact_store::BoundDataset;
use crate::tagcloud::TagCloud;

/// Identity of the full cuboid an iceberg was cut from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IcebergKey {
    pub dataset: String,
    pub dimensions: Vec<String>,
    pub aggregator: Aggregator,
    /// Always `None` for COUNT.
    pub measure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcebergCell {
    pub address: Address,
    pub measure: f64,
    pub state: Accum,
}

#[derive(Debug, Clone)]
pub struct IcebergCuboid {
    key: IcebergKey,
    limit: usize,
    full_cell_count: usize,
    /// Sorted by measure descending, then address ascending.
    cells: Vec<IcebergCell>,
}

impl IcebergCuboid {
    pub fn key(&self) -> &IcebergKey {
        &self.key
    }

    pub fn dimensions(&self) -> &[String] {
        &self.key.dimensions
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    /// Number of cells in the untruncated cuboid.
    pub fn full_cell_count(&self) -> usize {
        self.full_cell_count
    }

    pub fn cells(&self) -> &[IcebergCell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.cells.len() == self.full_cell_count
    }

    /// The unfiltered query over all of the iceberg's dimensions.
    pub fn base_query(&self) -> CuboidQuery {
        CuboidQuery::new(
            self.key.dimensions.clone(),
            self.key.aggregator,
            self.key.measure.clone(),
        )
    }

    fn position(&self, dimension: &str) -> Result<usize> {
        self.key
            .dimensions
            .iter()
            .position(|d| d == dimension)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "dimension `{dimension}` is not materialized in the iceberg"
                ))
            })
    }

    /// Re-aggregates the retained cells that pass `query`'s filter onto
    /// `query`'s dimensions, with its groupings applied.
    pub fn reaggregate(&self, query: &CuboidQuery) -> Result<HashMap<Address, Accum>> {
        if query.aggregator != self.key.aggregator
            || (query.aggregator.needs_measure() && query.measure != self.key.measure)
        {
            return Err(Error::invalid(
                "query aggregator or measure differs from the iceberg's",
            ));
        }
        let out_pos = query
            .dimensions
            .iter()
            .map(|d| self.position(d))
            .collect::<Result<Vec<_>>>()?;
        let filters = query
            .filter
            .0
            .iter()
            .map(|(d, set)| Ok((self.position(d)?, set)))
            .collect::<Result<Vec<_>>>()?;
        let groupings = query
            .dimensions
            .iter()
            .map(|d| query.grouping(d))
            .collect::<Vec<_>>();
        for g in &query.groupings {
            self.position(&g.dimension)?;
        }

        let mut out: HashMap<Address, Accum> = HashMap::new();
        for cell in &self.cells {
            if !filters.iter().all(|(p, set)| set.contains(&cell.address[*p])) {
                continue;
            }
            let address: Address = out_pos
                .iter()
                .zip(&groupings)
                .map(|(&p, g)| {
                    let v = &cell.address[p];
                    g.map_or_else(|| v.clone(), |g| g.apply(v).to_string())
                })
                .collect();
            out.entry(address).or_default().merge(&cell.state);
        }
        Ok(out)
    }
}

fn descending(a: f64, b: f64) -> std::cmp::Ordering {
    b.total_cmp(&a)
}

pub fn build_iceberg(
    dataset: &BoundDataset,
    dimensions: &[String],
    aggregator: Aggregator,
    measure: Option<&str>,
    limit: usize,
) -> Result<IcebergCuboid> {
    if limit < 1 {
        return Err(Error::invalid("iceberg limit must be at least 1"));
    }
    if dimensions.is_empty() {
        return Err(Error::invalid("iceberg needs at least one dimension"));
    }
    let measure = measure.filter(|_| aggregator.needs_measure());
    let query = CuboidQuery::new(dimensions.to_vec(), aggregator, measure.map(str::to_string));
    let (labels, coded) = cube::aggregate_coded(dataset, &query)?;
    let full_cell_count = coded.len();

    let mut cells: Vec<(Vec<u32>, Accum, f64)> = coded
        .into_iter()
        .map(|(k, acc)| {
            let m = acc.finish(aggregator);
            (k, acc, m)
        })
        .collect();
    // Code order equals address order, so ties break lexicographically by address.
    let order = |a: &(Vec<u32>, Accum, f64), b: &(Vec<u32>, Accum, f64)| {
        descending(a.2, b.2).then_with(|| a.0.cmp(&b.0))
    };
    if cells.len() > limit {
        cells.select_nth_unstable_by(limit - 1, order);
        cells.truncate(limit);
    }
    cells.sort_unstable_by(order);

    Ok(IcebergCuboid {
        key: IcebergKey {
            dataset: dataset.id().to_string(),
            dimensions: dimensions.to_vec(),
            aggregator,
            measure: measure.map(str::to_string),
        },
        limit,
        full_cell_count,
        cells: cells
            .into_iter()
            .map(|(k, state, measure)| IcebergCell {
                address: cube::decode(&labels, &k),
                measure,
                state,
            })
            .collect(),
    })
}

/// Approximate top-k tag cloud answered from retained cells only.
///
/// `query.dimensions`, filter dimensions, and grouping dimensions must all be
/// materialized in the iceberg. May return fewer than `k` tags.
pub fn topk_iceberg(iceberg: &IcebergCuboid, query: &CuboidQuery, k: usize) -> Result<TagCloud> {
    let aggregator = query.aggregator;
    let cells = iceberg.reaggregate(query)?;
    TagCloud::from_cells(
        query.dimension_labels(),
        cells.into_iter().map(|(a, acc)| (a, acc.finish(aggregator))),
        k,
    )
}

/// Ground-truth top-k over the full restricted cuboid, with the same ranking
/// as [`topk_iceberg`].
pub fn topk_exact(dataset: &BoundDataset, query: &CuboidQuery, k: usize) -> Result<TagCloud> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let (labels, coded) = cube::aggregate_coded(dataset, query)?;
    let mut cells: Vec<(Vec<u32>, f64)> = coded
        .into_iter()
        .map(|(key, acc)| (key, acc.finish(query.aggregator)))
        .collect();
    if let Some((key, w)) = cells.iter().find(|(_, w)| w.is_nan() || *w < 0.0) {
        return Err(Error::NegativeWeight {
            term: cube::decode(&labels, key).join(crate::tagcloud::TERM_SEPARATOR),
            weight: *w,
        });
    }
    // Only cells at or above the k-th largest weight can make the cut; ties
    // there are resolved by term after decoding.
    if cells.len() > k {
        let mut weights: Vec<f64> = cells.iter().map(|c| c.1).collect();
        let (_, kth, _) = weights.select_nth_unstable_by(k - 1, |a, b| descending(*a, *b));
        let threshold = *kth;
        cells.retain(|c| c.1 >= threshold);
    }
    TagCloud::from_cells(
        query.dimension_labels(),
        cells
            .into_iter()
            .map(|(key, w)| (cube::decode(&labels, &key), w)),
        k,
    )
}
