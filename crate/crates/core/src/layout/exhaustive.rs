use itertools::Itertools;

use super::{cost_of, Arrangement, Arranger, HeuristicSpec};
use crate::error::{Error, Result};
use crate::similarity::SimilarityMatrix;

pub const MAX_BRUTE_FORCE_TAGS: usize = 9;

/// Exact minimum by enumeration. Among optimal orders, returns the one whose
/// term sequence is lexicographically smallest.
#[derive(Debug, Clone, Copy, Default)]
pub struct BruteForce;

impl Arranger for BruteForce {
    fn spec(&self) -> HeuristicSpec {
        HeuristicSpec::new("brute", None)
    }

    fn arrange(&self, matrix: &SimilarityMatrix, _seed: u64) -> Result<Arrangement> {
        let n = matrix.len();
        if n > MAX_BRUTE_FORCE_TAGS {
            return Err(Error::invalid(format!(
                "brute force is limited to {MAX_BRUTE_FORCE_TAGS} tags, got {n}"
            )));
        }
        let mut by_term: Vec<usize> = (0..n).collect();
        by_term.sort_by(|&a, &b| matrix.terms()[a].cmp(&matrix.terms()[b]));

        // Permutations come out in lexicographic order of `by_term`, so the
        // first strict minimum is also the lexicographically smallest.
        let mut best: Option<(f64, Vec<usize>)> = None;
        for perm in by_term.iter().copied().permutations(n) {
            let c = cost_of(&perm, matrix);
            if best.as_ref().is_none_or(|(b, _)| c < *b - 1e-12) {
                best = Some((c, perm));
            }
        }
        Arrangement::new(best.map(|(_, p)| p).unwrap_or_default())
    }
}
