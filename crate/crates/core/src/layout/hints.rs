use super::{mla_cost, weight, Arrangement, COST_EPSILON};
use crate::error::{Error, Result};
use crate::similarity::SimilarityMatrix;
use crate::tagcloud::{bucketize, Tag};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HintThresholds {
    /// Neighbours at least this similar are glued.
    pub glue: f64,
    /// Cost-neutral neighbours at most this similar may be permuted.
    pub permute: f64,
}

impl Default for HintThresholds {
    fn default() -> Self {
        HintThresholds {
            glue: 0.95,
            permute: 0.05,
        }
    }
}

impl HintThresholds {
    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.glue) || !unit.contains(&self.permute) || self.glue <= self.permute {
            return Err(Error::invalid(format!(
                "hint thresholds must satisfy 0 <= permute < glue <= 1, got glue={} permute={}",
                self.glue, self.permute
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayoutEntry {
    Tag { term: String, weight: f64, bucket: u32 },
    Glued,
    Permutable,
}

impl LayoutEntry {
    pub fn is_token(&self) -> bool {
        !matches!(self, LayoutEntry::Tag { .. })
    }
}

/// Ordered tags interleaved with display hints. A token always sits between
/// two tags.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HintedLayout {
    entries: Vec<LayoutEntry>,
}

impl HintedLayout {
    pub fn new(entries: Vec<LayoutEntry>) -> Result<Self> {
        let misplaced = entries.first().is_some_and(LayoutEntry::is_token)
            || entries.last().is_some_and(LayoutEntry::is_token)
            || entries
                .windows(2)
                .any(|w| w[0].is_token() && w[1].is_token());
        if misplaced {
            return Err(Error::invalid("hint tokens must sit between two tags"));
        }
        Ok(HintedLayout { entries })
    }

    /// Tags in the given order with no hints.
    pub fn plain(tags: &[Tag], bucket_count: u32) -> Result<Self> {
        let weights: Vec<f64> = tags.iter().map(|t| t.weight).collect();
        let buckets = bucketize(&weights, bucket_count)?;
        HintedLayout::new(
            tags.iter()
                .zip(buckets)
                .map(|(t, bucket)| LayoutEntry::Tag {
                    term: t.term.clone(),
                    weight: t.weight,
                    bucket,
                })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[LayoutEntry] {
        &self.entries
    }

    pub fn terms(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                LayoutEntry::Tag { term, .. } => Some(term.as_str()),
                _ => None,
            })
            .collect()
    }
}

/// Cost change from swapping the adjacent tags at positions `i` and `i + 1`.
fn adjacent_swap_delta(order: &[usize], m: &SimilarityMatrix, i: usize) -> f64 {
    let (a, b) = (order[i], order[i + 1]);
    let left: f64 = order[..i].iter().map(|&k| weight(m, a, k) - weight(m, b, k)).sum();
    let right: f64 = order[i + 2..].iter().map(|&k| weight(m, b, k) - weight(m, a, k)).sum();
    left + right
}

/// Interleaves GLUED and PERMUTABLE tokens into an arrangement.
///
/// GLUED goes between neighbours with similarity at or above `glue`. PERMUTABLE
/// goes between neighbours whose transposition leaves the MLA cost unchanged
/// and whose similarity is at or below `permute`. GLUED wins when both apply.
pub fn insert_hints(
    arrangement: &Arrangement,
    matrix: &SimilarityMatrix,
    thresholds: HintThresholds,
    bucket_count: u32,
) -> Result<HintedLayout> {
    thresholds.validate()?;
    mla_cost(arrangement, matrix)?;
    let buckets = bucketize(matrix.weights(), bucket_count)?;
    let order = arrangement.order();
    let tag = |i: usize| LayoutEntry::Tag {
        term: matrix.terms()[i].clone(),
        weight: matrix.weights()[i],
        bucket: buckets[i],
    };

    let mut entries = Vec::with_capacity(order.len() * 2);
    for (p, &t) in order.iter().enumerate() {
        if p > 0 {
            let s = matrix.get(order[p - 1], t);
            if s >= thresholds.glue {
                entries.push(LayoutEntry::Glued);
            } else if s <= thresholds.permute
                && adjacent_swap_delta(order, matrix, p - 1).abs() <= COST_EPSILON
            {
                entries.push(LayoutEntry::Permutable);
            }
        }
        entries.push(tag(t));
    }
    HintedLayout::new(entries)
}
