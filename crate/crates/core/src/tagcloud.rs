//! Tags, tag clouds, and the measures used to judge them.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::cube::{Address, Cuboid};
use crate::error::{Error, Result};

/// Joins the attribute values of a k-tag into its display term.
pub const TERM_SEPARATOR: &str = "\u{2013}";

/// Default maximum number of tags in a cloud.
pub const DEFAULT_CLOUD_SIZE: usize = 150;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tag {
    pub term: String,
    /// Cell address described by the tag.
    pub object: Vec<String>,
    pub weight: f64,
}

impl Tag {
    pub fn new(object: Vec<String>, weight: f64) -> Result<Tag> {
        let term = object.join(TERM_SEPARATOR);
        if !weight.is_finite() || weight < 0.0 {
            return Err(Error::NegativeWeight { term, weight });
        }
        Ok(Tag {
            term,
            object,
            weight,
        })
    }

    /// Number of attribute values in the tag (the k of a k-tag).
    pub fn arity(&self) -> usize {
        self.object.len()
    }
}

/// Ranking used everywhere a cloud is truncated: heaviest first, then by term.
pub fn rank_order(a: &Tag, b: &Tag) -> Ordering {
    b.weight
        .total_cmp(&a.weight)
        .then_with(|| a.term.cmp(&b.term))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagCloud {
    dimensions: Vec<String>,
    tags: Vec<Tag>,
    bound: usize,
}

impl TagCloud {
    pub fn new(dimensions: Vec<String>, tags: Vec<Tag>, bound: usize) -> Result<TagCloud> {
        if tags.len() > bound {
            return Err(Error::invalid(format!(
                "{} tags exceed the cloud bound of {bound}",
                tags.len()
            )));
        }
        let mut terms = BTreeSet::new();
        for t in &tags {
            if !terms.insert(t.term.as_str()) {
                return Err(Error::invalid(format!("duplicate term `{}`", t.term)));
            }
        }
        Ok(TagCloud {
            dimensions,
            tags,
            bound,
        })
    }

    /// Builds a cloud from the `k` best cells under [`rank_order`].
    pub fn from_cells(
        dimensions: Vec<String>,
        cells: impl IntoIterator<Item = (Address, f64)>,
        k: usize,
    ) -> Result<TagCloud> {
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        let mut tags = cells
            .into_iter()
            .map(|(a, w)| Tag::new(a, w))
            .collect::<Result<Vec<_>>>()?;
        tags.sort_by(rank_order);
        tags.truncate(k);
        TagCloud::new(dimensions, tags, k)
    }

    pub fn dimensions(&self) -> &[String] {
        &self.dimensions
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn into_tags(self) -> Vec<Tag> {
        self.tags
    }

    pub fn bound(&self) -> usize {
        self.bound
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn get(&self, term: &str) -> Option<&Tag> {
        self.tags.iter().find(|t| t.term == term)
    }

    pub fn weights(&self) -> Vec<f64> {
        self.tags.iter().map(|t| t.weight).collect()
    }

    fn with_tags(&self, tags: Vec<Tag>) -> TagCloud {
        TagCloud {
            dimensions: self.dimensions.clone(),
            tags,
            bound: self.bound,
        }
    }
}

pub fn from_cuboid(cuboid: &Cuboid, k: usize) -> Result<TagCloud> {
    TagCloud::from_cells(
        cuboid.query().dimension_labels(),
        cuboid.cells().iter().map(|(a, &m)| (a.clone(), m)),
        k,
    )
}

/// Shannon entropy (natural log) of the normalized weights.
pub fn entropy(cloud: &TagCloud) -> Result<f64> {
    entropy_of(&cloud.weights())
}

pub fn entropy_of(weights: &[f64]) -> Result<f64> {
    let total: f64 = weights.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::invalid("entropy needs a positive total weight"));
    }
    Ok(-weights
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| {
            let p = w / total;
            p * p.ln()
        })
        .sum::<f64>())
}

/// Entropy divided by its maximum, `ln(|tags|)`.
pub fn relative_entropy(cloud: &TagCloud) -> Result<f64> {
    if cloud.len() < 2 {
        return Err(Error::invalid("relative entropy needs at least two tags"));
    }
    Ok(entropy(cloud)? / (cloud.len() as f64).ln())
}

fn max_weight<'a>(tags: impl Iterator<Item = &'a Tag>) -> f64 {
    tags.map(|t| t.weight).fold(0.0, f64::max)
}

/// Heaviest tag of `a` that is missing from `b`, relative to the heaviest of `a`.
fn missing_index(a: &TagCloud, b: &TagCloud) -> f64 {
    let present: BTreeSet<&str> = b.tags.iter().map(|t| t.term.as_str()).collect();
    let top = max_weight(a.tags.iter());
    if top == 0.0 {
        return 0.0;
    }
    max_weight(a.tags.iter().filter(|t| !present.contains(t.term.as_str()))) / top
}

/// False-positive index of an approximate cloud against the exact one.
pub fn fp_index(approx: &TagCloud, exact: &TagCloud) -> Result<f64> {
    if approx.is_empty() {
        return Err(Error::invalid("false-positive index of an empty cloud"));
    }
    Ok(missing_index(approx, exact))
}

/// False-negative index of an approximate cloud against the exact one.
pub fn fn_index(approx: &TagCloud, exact: &TagCloud) -> Result<f64> {
    if exact.is_empty() {
        return Err(Error::invalid("false-negative index against an empty cloud"));
    }
    Ok(missing_index(exact, approx))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortKey {
    Weight,
    Term,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ascending,
    Descending,
}

/// Stable sort; ties on the primary key are broken by the other key ascending.
pub fn sort_cloud(cloud: &TagCloud, key: SortKey, direction: Direction) -> TagCloud {
    let mut tags = cloud.tags.clone();
    tags.sort_by(|a, b| {
        let (primary, secondary) = match key {
            SortKey::Weight => (a.weight.total_cmp(&b.weight), a.term.cmp(&b.term)),
            SortKey::Term => (a.term.cmp(&b.term), a.weight.total_cmp(&b.weight)),
        };
        let primary = match direction {
            Direction::Ascending => primary,
            Direction::Descending => primary.reverse(),
        };
        primary.then(secondary)
    });
    cloud.with_tags(tags)
}

/// Drops tags below `min_weight`, then keeps the `top_n` best.
pub fn prune(cloud: &TagCloud, min_weight: Option<f64>, top_n: Option<usize>) -> Result<TagCloud> {
    if min_weight.is_none() && top_n.is_none() {
        return Err(Error::invalid("prune needs min_weight or top_n"));
    }
    let mut tags: Vec<Tag> = cloud
        .tags
        .iter()
        .filter(|t| min_weight.is_none_or(|m| t.weight >= m))
        .cloned()
        .collect();
    if let Some(n) = top_n {
        if n < tags.len() {
            tags.sort_by(rank_order);
            tags.truncate(n);
        }
    }
    Ok(cloud.with_tags(tags))
}

/// Maps each tag's weight linearly onto font buckets `1..=buckets`.
pub fn font_buckets(cloud: &TagCloud, buckets: u32) -> Result<Vec<u32>> {
    bucketize(&cloud.weights(), buckets)
}

pub fn bucketize(weights: &[f64], buckets: u32) -> Result<Vec<u32>> {
    if buckets == 0 {
        return Err(Error::invalid("bucket count must be at least 1"));
    }
    let lo = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let k = buckets as f64;
    Ok(weights
        .iter()
        .map(|&w| {
            if hi <= lo {
                buckets.div_ceil(2)
            } else {
                (k * (w - lo) / (hi - lo)).ceil().clamp(1.0, k) as u32
            }
        })
        .collect())
}
