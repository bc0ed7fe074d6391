use super::{Arrangement, Arranger, HeuristicSpec};
use crate::error::Result;
use crate::similarity::SimilarityMatrix;

/// Greedy chaining: start from the heaviest tag, then keep appending the
/// unplaced tag most similar to the last one. Ties go to the smaller term.
#[derive(Debug, Clone, Copy, Default)]
pub struct NearestNeighbor;

/// True when candidate `(score, term)` beats the incumbent.
fn better(score: f64, term: &str, best: Option<(f64, &str)>) -> bool {
    match best {
        None => true,
        Some((s, t)) => score > s || (score == s && term < t),
    }
}

pub(crate) fn nearest_neighbor_order(m: &SimilarityMatrix) -> Vec<usize> {
    let n = m.len();
    if n == 0 {
        return Vec::new();
    }
    let terms = m.terms();
    let mut start: Option<(f64, &str, usize)> = None;
    for (i, (&w, term)) in m.weights().iter().zip(terms).enumerate() {
        if better(w, term, start.map(|(s, t, _)| (s, t))) {
            start = Some((w, term, i));
        }
    }
    let mut placed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut last = start.unwrap().2;
    placed[last] = true;
    order.push(last);
    while order.len() < n {
        let mut next: Option<(f64, &str, usize)> = None;
        for (j, &done) in placed.iter().enumerate() {
            if done {
                continue;
            }
            let s = m.get(last, j);
            if better(s, &terms[j], next.map(|(s, t, _)| (s, t))) {
                next = Some((s, &terms[j], j));
            }
        }
        last = next.unwrap().2;
        placed[last] = true;
        order.push(last);
    }
    order
}

impl Arranger for NearestNeighbor {
    fn spec(&self) -> HeuristicSpec {
        HeuristicSpec::new("nn", None)
    }

    fn arrange(&self, matrix: &SimilarityMatrix, _seed: u64) -> Result<Arrangement> {
        Arrangement::new(nearest_neighbor_order(matrix))
    }
}
