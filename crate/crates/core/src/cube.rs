//! Cuboids and the OLAP operations over them.
//!
//! Every operation produces a new [`CuboidQuery`] and re-aggregates from the
//! base facts of the dataset, so AVERAGE, MIN and MAX stay exact no matter how
//! long the operation chain is. The chain itself is kept on the cuboid as
//! provenance.
//!
//! Filter values are stored against base (un-grouped) attribute values. A value
//! named through a roll-up level, e.g. `Canada`, is expanded to its preimage
//! when the filter is built.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fact_store::BoundDataset;

/// Ordered attribute values, one per cuboid dimension.
pub type Address = Vec<String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    Count,
    Sum,
    Average,
    Min,
    Max,
}

impl Aggregator {
    pub const ALL: [Aggregator; 5] = [
        Aggregator::Count,
        Aggregator::Sum,
        Aggregator::Average,
        Aggregator::Min,
        Aggregator::Max,
    ];

    pub fn needs_measure(self) -> bool {
        self != Aggregator::Count
    }

    pub fn name(self) -> &'static str {
        match self {
            Aggregator::Count => "count",
            Aggregator::Sum => "sum",
            Aggregator::Average => "average",
            Aggregator::Min => "min",
            Aggregator::Max => "max",
        }
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Aggregator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "count" => Ok(Aggregator::Count),
            "sum" => Ok(Aggregator::Sum),
            "average" | "avg" | "mean" => Ok(Aggregator::Average),
            "min" => Ok(Aggregator::Min),
            "max" => Ok(Aggregator::Max),
            _ => Err(Error::UnknownStrategy {
                kind: "aggregator",
                name: s.to_string(),
            }),
        }
    }
}

/// Running aggregate state; enough to finish any of the five aggregators and
/// to merge partial results.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accum {
    pub count: u64,
    pub sum: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for Accum {
    fn default() -> Self {
        Accum {
            count: 0,
            sum: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }
}

impl Accum {
    pub fn push(&mut self, value: f64) {
        self.count += 1;
        self.sum += value;
        self.min = self.min.min(value);
        self.max = self.max.max(value);
    }

    pub fn merge(&mut self, other: &Accum) {
        self.count += other.count;
        self.sum += other.sum;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
    }

    pub fn finish(&self, aggregator: Aggregator) -> f64 {
        match aggregator {
            Aggregator::Count => self.count as f64,
            Aggregator::Sum => self.sum,
            Aggregator::Average => self.sum / self.count as f64,
            Aggregator::Min => self.min,
            Aggregator::Max => self.max,
        }
    }
}

/// User-supplied mapping from attribute values to a coarser level.
/// Values absent from `map` map to themselves.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupingMap {
    pub dimension: String,
    pub level: String,
    pub map: BTreeMap<String, String>,
}

impl GroupingMap {
    pub fn new(
        dimension: impl Into<String>,
        level: impl Into<String>,
        pairs: impl IntoIterator<Item = (impl Into<String>, impl Into<String>)>,
    ) -> Self {
        GroupingMap {
            dimension: dimension.into(),
            level: level.into(),
            map: pairs
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        }
    }

    pub fn apply<'a>(&'a self, value: &'a str) -> &'a str {
        self.map.get(value).map_or(value, String::as_str)
    }
}

/// Per-dimension sets of admissible base values. A fact passes when, for every
/// filtered dimension, its value is in the set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Filter(pub BTreeMap<String, BTreeSet<String>>);

impl Filter {
    pub fn new() -> Self {
        Filter::default()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dimensions(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn get(&self, dimension: &str) -> Option<&BTreeSet<String>> {
        self.0.get(dimension)
    }

    /// Intersects the admissible set of `dimension` with `values`.
    pub fn restrict(&mut self, dimension: &str, values: BTreeSet<String>) {
        match self.0.get_mut(dimension) {
            Some(existing) => existing.retain(|v| values.contains(v)),
            None => {
                self.0.insert(dimension.to_string(), values);
            }
        }
    }

    pub fn admits(&self, dimension: &str, value: &str) -> bool {
        self.0.get(dimension).is_none_or(|set| set.contains(value))
    }
}

/// One step of a cuboid's provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum CubeOp {
    Materialize {
        dimensions: Vec<String>,
        aggregator: Aggregator,
        measure: Option<String>,
    },
    Slice {
        dimension: String,
        value: String,
    },
    Dice {
        dimension: String,
        values: BTreeSet<String>,
    },
    Project {
        dimension: String,
    },
    Rollup {
        dimension: String,
        level: String,
    },
    Drilldown {
        dimension: String,
        level: String,
    },
}

/// The effective state of a cuboid: what to group by, how, and over which facts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuboidQuery {
    pub dimensions: Vec<String>,
    pub aggregator: Aggregator,
    pub measure: Option<String>,
    pub filter: Filter,
    pub groupings: Vec<GroupingMap>,
}

impl CuboidQuery {
    pub fn new(dimensions: Vec<String>, aggregator: Aggregator, measure: Option<String>) -> Self {
        CuboidQuery {
            dimensions,
            aggregator,
            measure,
            filter: Filter::new(),
            groupings: Vec::new(),
        }
    }

    pub fn grouping(&self, dimension: &str) -> Option<&GroupingMap> {
        self.groupings.iter().find(|g| g.dimension == dimension)
    }

    /// Attribute values visible for `dimension` under the current groupings.
    pub fn visible_values(
        &self,
        dataset: &BoundDataset,
        dimension: &str,
    ) -> Result<BTreeSet<String>> {
        let dict = &dataset.dimension(dimension)?.dictionary;
        Ok(match self.grouping(dimension) {
            Some(g) => dict.iter().map(|v| g.apply(v).to_string()).collect(),
            None => dict.iter().cloned().collect(),
        })
    }

    /// Base values that appear as `visible` for `dimension`.
    pub fn preimage(
        &self,
        dataset: &BoundDataset,
        dimension: &str,
        visible: &str,
    ) -> Result<BTreeSet<String>> {
        let dict = &dataset.dimension(dimension)?.dictionary;
        let out: BTreeSet<String> = match self.grouping(dimension) {
            Some(g) => dict
                .iter()
                .filter(|v| g.apply(v) == visible)
                .cloned()
                .collect(),
            None => dict.iter().filter(|v| *v == visible).cloned().collect(),
        };
        if out.is_empty() {
            return Err(Error::UnknownValue {
                dimension: dimension.to_string(),
                value: visible.to_string(),
            });
        }
        Ok(out)
    }

    /// Expands visible values (possibly roll-up levels) into a base-value set.
    pub fn base_values(
        &self,
        dataset: &BoundDataset,
        dimension: &str,
        visible: &BTreeSet<String>,
    ) -> Result<BTreeSet<String>> {
        if visible.is_empty() {
            return Err(Error::invalid(format!(
                "empty value set for dimension `{dimension}`"
            )));
        }
        let mut out = BTreeSet::new();
        for v in visible {
            out.extend(self.preimage(dataset, dimension, v)?);
        }
        Ok(out)
    }

    pub fn validate(&self, dataset: &BoundDataset) -> Result<()> {
        let mut seen = BTreeSet::new();
        for d in &self.dimensions {
            dataset.dimension(d)?;
            if !seen.insert(d) {
                return Err(Error::invalid(format!("dimension `{d}` listed twice")));
            }
        }
        match (&self.measure, self.aggregator.needs_measure()) {
            (Some(m), _) => {
                if !dataset.schema().measures.contains(m) {
                    return Err(Error::UnknownMeasure(m.clone()));
                }
            }
            (None, true) => {
                return Err(Error::invalid(format!(
                    "aggregator {} requires a measure",
                    self.aggregator
                )))
            }
            (None, false) => {}
        }
        for (d, values) in &self.filter.0 {
            let dim = dataset.dimension(d)?;
            for v in values {
                if dim.code_of(v).is_none() {
                    return Err(Error::UnknownValue {
                        dimension: d.clone(),
                        value: v.clone(),
                    });
                }
            }
        }
        let mut grouped = BTreeSet::new();
        for g in &self.groupings {
            dataset.dimension(&g.dimension)?;
            if !grouped.insert(&g.dimension) {
                return Err(Error::invalid(format!(
                    "dimension `{}` rolled up twice",
                    g.dimension
                )));
            }
        }
        Ok(())
    }

    pub fn dimension_labels(&self) -> Vec<String> {
        self.dimensions
            .iter()
            .map(|d| match self.grouping(d) {
                Some(g) => g.level.clone(),
                None => d.clone(),
            })
            .collect()
    }

    /// Runs the group-by over the base facts.
    pub fn evaluate(&self, dataset: &BoundDataset) -> Result<BTreeMap<Address, Accum>> {
        let (labels, coded) = aggregate_coded(dataset, self)?;
        Ok(coded
            .into_iter()
            .map(|(key, acc)| (decode(&labels, &key), acc))
            .collect())
    }
}

/// Maps base dictionary codes of one dimension onto visible codes.
pub(crate) struct DimensionView {
    pub column: usize,
    pub raw_to_visible: Vec<u32>,
    /// Visible labels in code-point order; visible codes index this list.
    pub labels: Vec<String>,
}

fn dimension_view(
    dataset: &BoundDataset,
    query: &CuboidQuery,
    dimension: &str,
) -> Result<DimensionView> {
    let column = dataset.dimension_index(dimension)?;
    let dict = &dataset.dimensions()[column].dictionary;
    Ok(match query.grouping(dimension) {
        None => DimensionView {
            column,
            raw_to_visible: (0..dict.len() as u32).collect(),
            labels: dict.clone(),
        },
        Some(g) => {
            let labels: Vec<String> = dict
                .iter()
                .map(|v| g.apply(v).to_string())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let raw_to_visible = dict
                .iter()
                .map(|v| labels.binary_search_by(|l| l.as_str().cmp(g.apply(v))).unwrap() as u32)
                .collect();
            DimensionView {
                column,
                raw_to_visible,
                labels,
            }
        }
    })
}

pub(crate) fn decode(labels: &[Vec<String>], key: &[u32]) -> Address {
    key.iter()
        .zip(labels)
        .map(|(&c, l)| l[c as usize].clone())
        .collect()
}

/// Visible labels per query dimension, and accumulators keyed by label codes.
pub(crate) type CodedCells = (Vec<Vec<String>>, HashMap<Vec<u32>, Accum>);

/// Group-by over dictionary codes. Keys are visible codes per query dimension,
/// so their lexicographic order equals the order of the decoded addresses.
pub(crate) fn aggregate_coded(
    dataset: &BoundDataset,
    query: &CuboidQuery,
) -> Result<CodedCells> {
    query.validate(dataset)?;
    let views = query
        .dimensions
        .iter()
        .map(|d| dimension_view(dataset, query, d))
        .collect::<Result<Vec<_>>>()?;

    let mut admitted: Vec<(usize, Vec<bool>)> = Vec::new();
    for (d, values) in &query.filter.0 {
        let column = dataset.dimension_index(d)?;
        let dim = &dataset.dimensions()[column];
        let mut mask = vec![false; dim.dictionary.len()];
        for v in values {
            if let Some(c) = dim.code_of(v) {
                mask[c as usize] = true;
            }
        }
        admitted.push((column, mask));
    }

    let measure = match (&query.measure, query.aggregator.needs_measure()) {
        (Some(m), true) => Some(dataset.measure(m)?.values.as_slice()),
        _ => None,
    };
    let columns = dataset.dimensions();
    let rows = (0..dataset.fact_count()).filter(|&r| {
        admitted
            .iter()
            .all(|(col, mask)| mask[columns[*col].codes[r] as usize])
    });
    let value = |r: usize| measure.map_or(1.0, |m| m[r]);

    // Mixed-radix u64 keys when they fit; otherwise plain vectors.
    let radices: Vec<u64> = views.iter().map(|v| v.labels.len().max(1) as u64).collect();
    let fits = radices
        .iter()
        .try_fold(1u64, |acc, &r| acc.checked_mul(r))
        .is_some();
    let code = |v: &DimensionView, r: usize| v.raw_to_visible[columns[v.column].codes[r] as usize];

    let cells: HashMap<Vec<u32>, Accum> = if fits {
        let packed: HashMap<u64, Accum> = group(rows, value, |r| {
            views
                .iter()
                .zip(&radices)
                .fold(0u64, |acc, (v, &radix)| acc * radix + code(v, r) as u64)
        });
        packed
            .into_iter()
            .map(|(mut k, acc)| {
                let mut key = vec![0u32; views.len()];
                for (slot, &radix) in key.iter_mut().zip(&radices).rev() {
                    *slot = (k % radix) as u32;
                    k /= radix;
                }
                (key, acc)
            })
            .collect()
    } else {
        group(rows, value, |r| views.iter().map(|v| code(v, r)).collect())
    };
    Ok((views.into_iter().map(|v| v.labels).collect(), cells))
}

fn group<K: Hash + Eq>(
    rows: impl Iterator<Item = usize>,
    value: impl Fn(usize) -> f64,
    key: impl Fn(usize) -> K,
) -> HashMap<K, Accum> {
    let mut out: HashMap<K, Accum> = HashMap::new();
    for r in rows {
        out.entry(key(r)).or_default().push(value(r));
    }
    out
}

/// A single cell of a cuboid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub address: Address,
    pub measure: f64,
}

/// A materialized group-by together with the chain of operations that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Cuboid {
    dataset: String,
    query: CuboidQuery,
    operations: Vec<CubeOp>,
    cells: BTreeMap<Address, f64>,
}

impl Cuboid {
    fn evaluate(dataset: &BoundDataset, query: CuboidQuery, operations: Vec<CubeOp>) -> Result<Self> {
        let cells = query
            .evaluate(dataset)?
            .into_iter()
            .map(|(a, acc)| (a, acc.finish(query.aggregator)))
            .collect();
        Ok(Cuboid {
            dataset: dataset.id().to_string(),
            query,
            operations,
            cells,
        })
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset
    }

    pub fn query(&self) -> &CuboidQuery {
        &self.query
    }

    pub fn dimensions(&self) -> &[String] {
        &self.query.dimensions
    }

    pub fn aggregator(&self) -> Aggregator {
        self.query.aggregator
    }

    pub fn measure(&self) -> Option<&str> {
        self.query.measure.as_deref()
    }

    pub fn operations(&self) -> &[CubeOp] {
        &self.operations
    }

    pub fn cells(&self) -> &BTreeMap<Address, f64> {
        &self.cells
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.cells.iter().map(|(a, &m)| Cell {
            address: a.clone(),
            measure: m,
        })
    }

    pub fn get(&self, address: &[&str]) -> Option<f64> {
        let key: Address = address.iter().map(|s| s.to_string()).collect();
        self.cells.get(&key).copied()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    fn check_dataset(&self, dataset: &BoundDataset) -> Result<()> {
        if dataset.id() != self.dataset {
            return Err(Error::invalid(format!(
                "cuboid belongs to dataset `{}`, not `{}`",
                self.dataset,
                dataset.id()
            )));
        }
        Ok(())
    }

    fn derive(&self, dataset: &BoundDataset, query: CuboidQuery, op: CubeOp) -> Result<Cuboid> {
        self.check_dataset(dataset)?;
        let mut ops = self.operations.clone();
        ops.push(op);
        Cuboid::evaluate(dataset, query, ops)
    }
}

pub fn materialize(
    dataset: &BoundDataset,
    dimensions: &[String],
    aggregator: Aggregator,
    measure: Option<&str>,
) -> Result<Cuboid> {
    if dimensions.is_empty() {
        return Err(Error::invalid("materialize needs at least one dimension"));
    }
    let query = CuboidQuery::new(dimensions.to_vec(), aggregator, measure.map(str::to_string));
    let op = CubeOp::Materialize {
        dimensions: dimensions.to_vec(),
        aggregator,
        measure: measure.map(str::to_string),
    };
    Cuboid::evaluate(dataset, query, vec![op])
}

/// Fixes `dimension` to `value`; the dimension leaves the cuboid if present.
pub fn slice(dataset: &BoundDataset, cuboid: &Cuboid, dimension: &str, value: &str) -> Result<Cuboid> {
    let mut query = cuboid.query.clone();
    let base = query.preimage(dataset, dimension, value)?;
    query.filter.restrict(dimension, base);
    query.dimensions.retain(|d| d != dimension);
    cuboid.derive(
        dataset,
        query,
        CubeOp::Slice {
            dimension: dimension.to_string(),
            value: value.to_string(),
        },
    )
}

/// Restricts facts to the given per-dimension value sets. Dimensionality is kept.
pub fn dice(
    dataset: &BoundDataset,
    cuboid: &Cuboid,
    filter: &BTreeMap<String, BTreeSet<String>>,
) -> Result<Cuboid> {
    if filter.is_empty() {
        return Err(Error::invalid("dice needs at least one dimension"));
    }
    cuboid.check_dataset(dataset)?;
    let mut query = cuboid.query.clone();
    let mut ops = cuboid.operations.clone();
    for (dimension, values) in filter {
        let base = query.base_values(dataset, dimension, values)?;
        query.filter.restrict(dimension, base);
        ops.push(CubeOp::Dice {
            dimension: dimension.clone(),
            values: values.clone(),
        });
    }
    Cuboid::evaluate(dataset, query, ops)
}

/// Expands a numeric range on a dimension to the dictionary values inside it.
pub fn range_values(dataset: &BoundDataset, dimension: &str, low: f64, high: f64) -> Result<BTreeSet<String>> {
    Ok(dataset
        .distinct_values(dimension)?
        .iter()
        .filter(|v| {
            v.trim()
                .parse::<f64>()
                .is_ok_and(|x| x >= low && x <= high)
        })
        .cloned()
        .collect())
}

/// Aggregates a dimension away entirely.
pub fn project(dataset: &BoundDataset, cuboid: &Cuboid, dimension: &str) -> Result<Cuboid> {
    if !cuboid.query.dimensions.iter().any(|d| d == dimension) {
        return Err(Error::UnknownDimension(dimension.to_string()));
    }
    let mut query = cuboid.query.clone();
    query.dimensions.retain(|d| d != dimension);
    cuboid.derive(
        dataset,
        query,
        CubeOp::Project {
            dimension: dimension.to_string(),
        },
    )
}

pub fn rollup(dataset: &BoundDataset, cuboid: &Cuboid, grouping: &GroupingMap) -> Result<Cuboid> {
    if !cuboid.query.dimensions.contains(&grouping.dimension) {
        return Err(Error::UnknownDimension(grouping.dimension.clone()));
    }
    if cuboid.query.grouping(&grouping.dimension).is_some() {
        return Err(Error::invalid(format!(
            "dimension `{}` is already rolled up",
            grouping.dimension
        )));
    }
    let mut query = cuboid.query.clone();
    query.groupings.push(grouping.clone());
    cuboid.derive(
        dataset,
        query,
        CubeOp::Rollup {
            dimension: grouping.dimension.clone(),
            level: grouping.level.clone(),
        },
    )
}

/// Reverses a roll-up that is part of the cuboid's provenance.
pub fn drilldown(dataset: &BoundDataset, cuboid: &Cuboid, grouping: &GroupingMap) -> Result<Cuboid> {
    let mut query = cuboid.query.clone();
    let before = query.groupings.len();
    query.groupings.retain(|g| g != grouping);
    if query.groupings.len() == before {
        return Err(Error::UnknownGrouping(grouping.dimension.clone()));
    }
    cuboid.derive(
        dataset,
        query,
        CubeOp::Drilldown {
            dimension: grouping.dimension.clone(),
            level: grouping.level.clone(),
        },
    )
}
