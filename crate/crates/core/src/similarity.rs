//! Similarity between tags, measured on their subcuboids.
//!
//! Each tag of a cloud is sliced out of the cuboid over tag and clustering
//! dimensions; the remaining clustering cells form a vector on an axis shared
//! by every tag of the cloud. Measures are pluggable through
//! [`SimilarityRegistry`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use crate::cube::{Accum, Address, Aggregator, CuboidQuery};
use crate::error::{Error, Result};
use crate::fact_store::BoundDataset;
use crate::iceberg::IcebergCuboid;
use crate::tagcloud::{Tag, TagCloud};

pub trait SimilarityMeasure: Send + Sync {
    fn name(&self) -> &'static str;

    /// Similarity of two vectors on the same axis, in `[-1, 1]`.
    fn similarity(&self, u: &[f64], v: &[f64]) -> f64;
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn is_zero(u: &[f64]) -> bool {
    u.iter().all(|&x| x == 0.0)
}

/// `u·v / (|u| |v|)`; 0 when either vector is all zeros.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let norms = dot(u, u) * dot(v, v);
    if norms == 0.0 {
        return 0.0;
    }
    (dot(u, v) / norms.sqrt()).clamp(-1.0, 1.0)
}

/// `u·v / (|u|² + |v|² - u·v)`; 0 when both vectors are all zeros.
pub fn tanimoto(u: &[f64], v: &[f64]) -> f64 {
    let uv = dot(u, v);
    let denom = dot(u, u) + dot(v, v) - uv;
    if denom == 0.0 {
        return 0.0;
    }
    (uv / denom).clamp(-1.0, 1.0)
}

/// Maps every positive entry to 1 and everything else to 0.
pub fn binarize(u: &[f64]) -> Vec<f64> {
    u.iter().map(|&x| if x > 0.0 { 1.0 } else { 0.0 }).collect()
}

/// `|support(u) ∩ support(v)| / |support(u) ∪ support(v)|`; 1 when both supports are empty.
pub fn jaccard(u: &[f64], v: &[f64]) -> f64 {
    let (mut both, mut either) = (0usize, 0usize);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a > 0.0, b > 0.0);
        both += (a && b) as usize;
        either += (a || b) as usize;
    }
    if either == 0 {
        1.0
    } else {
        both as f64 / either as f64
    }
}

pub struct Cosine;
pub struct Tanimoto;
pub struct Jaccard;

impl SimilarityMeasure for Cosine {
    fn name(&self) -> &'static str {
        "cosine"
    }
    fn similarity(&self, u: &[f64], v: &[f64]) -> f64 {
        cosine(u, v)
    }
}

impl SimilarityMeasure for Tanimoto {
    fn name(&self) -> &'static str {
        "tanimoto"
    }
    fn similarity(&self, u: &[f64], v: &[f64]) -> f64 {
        tanimoto(u, v)
    }
}

impl SimilarityMeasure for Jaccard {
    fn name(&self) -> &'static str {
        "jaccard"
    }
    fn similarity(&self, u: &[f64], v: &[f64]) -> f64 {
        jaccard(u, v)
    }
}

/// Similarity measures by name.
#[derive(Clone)]
pub struct SimilarityRegistry {
    measures: BTreeMap<&'static str, Arc<dyn SimilarityMeasure>>,
}

impl Default for SimilarityRegistry {
    fn default() -> Self {
        let mut r = SimilarityRegistry {
            measures: BTreeMap::new(),
        };
        r.register(Arc::new(Cosine));
        r.register(Arc::new(Tanimoto));
        r.register(Arc::new(Jaccard));
        r
    }
}

impl fmt::Debug for SimilarityRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.measures.keys()).finish()
    }
}

impl SimilarityRegistry {
    pub fn register(&mut self, measure: Arc<dyn SimilarityMeasure>) {
        self.measures.insert(measure.name(), measure);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn SimilarityMeasure>> {
        self.measures
            .get(name.to_ascii_lowercase().as_str())
            .cloned()
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "similarity measure",
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.measures.keys().copied()
    }
}

/// A tag's subcuboid flattened onto an axis of clustering-dimension addresses.
#[derive(Debug, Clone, PartialEq)]
pub struct SubcuboidVector {
    pub term: String,
    pub axis: Arc<Vec<Address>>,
    pub values: Vec<f64>,
}

fn check_disjoint(tag_dims: &[String], cluster_dims: &[String]) -> Result<()> {
    if cluster_dims.is_empty() {
        return Err(Error::invalid("at least one clustering dimension is required"));
    }
    if let Some(d) = cluster_dims.iter().find(|d| tag_dims.contains(d)) {
        return Err(Error::invalid(format!(
            "`{d}` is both a tag dimension and a clustering dimension"
        )));
    }
    Ok(())
}

fn finish_nonnegative(term: &str, acc: &Accum, aggregator: Aggregator) -> Result<f64> {
    let v = acc.finish(aggregator);
    if v.is_nan() || v < 0.0 {
        return Err(Error::NegativeWeight {
            term: term.to_string(),
            weight: v,
        });
    }
    Ok(v)
}

/// Vector of one tag against every clustering cell present in the dataset.
pub fn subcuboid_vector(
    dataset: &BoundDataset,
    tag_dims: &[String],
    tag: &Tag,
    cluster_dims: &[String],
    aggregator: Aggregator,
    measure: Option<&str>,
) -> Result<SubcuboidVector> {
    check_disjoint(tag_dims, cluster_dims)?;
    if tag.object.len() != tag_dims.len() {
        return Err(Error::invalid(format!(
            "tag `{}` has {} values for {} dimensions",
            tag.term,
            tag.object.len(),
            tag_dims.len()
        )));
    }
    let measure = measure.map(str::to_string);
    let axis: Vec<Address> = CuboidQuery::new(cluster_dims.to_vec(), aggregator, measure.clone())
        .evaluate(dataset)?
        .into_keys()
        .collect();

    let mut query = CuboidQuery::new(cluster_dims.to_vec(), aggregator, measure);
    for (d, v) in tag_dims.iter().zip(&tag.object) {
        if dataset.dimension(d)?.code_of(v).is_none() {
            return Err(Error::UnknownValue {
                dimension: d.clone(),
                value: v.clone(),
            });
        }
        query.filter.restrict(d, BTreeSet::from([v.clone()]));
    }
    let cells = query.evaluate(dataset)?;
    let values = axis
        .iter()
        .map(|a| {
            cells
                .get(a)
                .map_or(Ok(0.0), |acc| finish_nonnegative(&tag.term, acc, aggregator))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SubcuboidVector {
        term: tag.term.clone(),
        axis: Arc::new(axis),
        values,
    })
}

/// Where subcuboid cells come from.
#[derive(Clone, Copy)]
pub enum CellSource<'a> {
    Facts(&'a BoundDataset),
    Iceberg(&'a IcebergCuboid),
}

/// Builds the vectors of every tag of `cloud` on one shared axis.
///
/// `base` carries the cloud's tag dimensions, aggregator, filter and groupings;
/// its dimensions must line up with the objects of the cloud's tags. The axis
/// is the sorted union of clustering cells reached by any tag.
pub fn subcuboid_vectors(
    source: CellSource<'_>,
    base: &CuboidQuery,
    tags: &[Tag],
    cluster_dims: &[String],
) -> Result<Vec<SubcuboidVector>> {
    check_disjoint(&base.dimensions, cluster_dims)?;
    let mut query = base.clone();
    query.dimensions.extend(cluster_dims.iter().cloned());
    let cells: Vec<(Address, Accum)> = match source {
        CellSource::Facts(ds) => query.evaluate(ds)?.into_iter().collect(),
        CellSource::Iceberg(ice) => ice.reaggregate(&query)?.into_iter().collect(),
    };

    let split = base.dimensions.len();
    let index: HashMap<&[String], usize> = tags
        .iter()
        .enumerate()
        .map(|(i, t)| (t.object.as_slice(), i))
        .collect();
    let mut per_tag: Vec<BTreeMap<Address, f64>> = vec![BTreeMap::new(); tags.len()];
    let mut axis_set = BTreeSet::new();
    for (address, acc) in cells {
        let (head, tail) = address.split_at(split);
        if let Some(&i) = index.get(head) {
            let v = finish_nonnegative(&tags[i].term, &acc, query.aggregator)?;
            axis_set.insert(tail.to_vec());
            per_tag[i].insert(tail.to_vec(), v);
        }
    }
    let axis: Arc<Vec<Address>> = Arc::new(axis_set.into_iter().collect());
    Ok(tags
        .iter()
        .zip(per_tag)
        .map(|(t, cells)| SubcuboidVector {
            term: t.term.clone(),
            axis: axis.clone(),
            values: axis
                .iter()
                .map(|a| cells.get(a).copied().unwrap_or(0.0))
                .collect(),
        })
        .collect())
}

/// Pairwise similarities between the tags of a cloud, kept alongside the
/// terms and weights the layout heuristics need.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    terms: Vec<String>,
    weights: Vec<f64>,
    kind: String,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    /// Wraps a dense row-major matrix, checking shape, symmetry and range.
    pub fn from_values(
        terms: Vec<String>,
        weights: Vec<f64>,
        kind: impl Into<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let n = terms.len();
        if weights.len() != n || values.len() != n * n {
            return Err(Error::invalid("similarity matrix shape mismatch"));
        }
        if terms.iter().collect::<BTreeSet<_>>().len() != n {
            return Err(Error::invalid("similarity matrix terms must be unique"));
        }
        for i in 0..n {
            for j in 0..n {
                let x = values[i * n + j];
                if !(-1.0..=1.0).contains(&x) {
                    return Err(Error::invalid(format!("similarity {x} outside [-1, 1]")));
                }
                if x != values[j * n + i] {
                    return Err(Error::invalid("similarity matrix is not symmetric"));
                }
            }
        }
        Ok(SimilarityMatrix {
            terms,
            weights,
            kind: kind.into(),
            values,
        })
    }

    pub fn from_vectors(
        vectors: &[SubcuboidVector],
        weights: Vec<f64>,
        measure: &dyn SimilarityMeasure,
    ) -> Result<Self> {
        let n = vectors.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let s = if i == j && !is_zero(&vectors[i].values) {
                    1.0
                } else {
                    measure.similarity(&vectors[i].values, &vectors[j].values)
                };
                values[i * n + j] = s;
                values[j * n + i] = s;
            }
        }
        SimilarityMatrix::from_values(
            vectors.iter().map(|v| v.term.clone()).collect(),
            weights,
            measure.name(),
            values,
        )
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kind(&self) -> &str {
        &self.kind
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.terms.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.terms.len();
        &self.values[i * n..(i + 1) * n]
    }
}

/// Similarity matrix over the tags of `cloud`, computed from `source`.
pub fn similarity_matrix(
    source: CellSource<'_>,
    base: &CuboidQuery,
    cloud: &TagCloud,
    cluster_dims: &[String],
    measure: &dyn SimilarityMeasure,
) -> Result<SimilarityMatrix> {
    if cloud.is_empty() {
        return Err(Error::invalid("similarity of an empty cloud"));
    }
    let vectors = subcuboid_vectors(source, base, cloud.tags(), cluster_dims)?;
    SimilarityMatrix::from_vectors(&vectors, cloud.weights(), measure)
}
