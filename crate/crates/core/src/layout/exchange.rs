use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::nearest::nearest_neighbor_order;
use super::{weight, Arrangement, Arranger, HeuristicSpec, COST_EPSILON};
use crate::error::Result;
use crate::similarity::SimilarityMatrix;

/// Pairwise-exchange Monte Carlo: starting from the nearest-neighbour order,
/// try swapping two random positions and keep the swap only when the cost
/// strictly drops.
#[derive(Debug, Clone, Copy)]
pub struct PairwiseExchange {
    pub exchanges: u64,
}

impl PairwiseExchange {
    pub const DEFAULT_EXCHANGES: u64 = 1000;
}

/// Cost change from swapping the tags at positions `i` and `j`.
fn swap_delta(order: &[usize], m: &SimilarityMatrix, i: usize, j: usize) -> f64 {
    let (a, b) = (order[i], order[j]);
    let mut delta = 0.0;
    for (p, &k) in order.iter().enumerate() {
        if p == i || p == j {
            continue;
        }
        let moved = p.abs_diff(j) as f64 - p.abs_diff(i) as f64;
        delta += (weight(m, a, k) - weight(m, b, k)) * moved;
    }
    delta
}

impl Arranger for PairwiseExchange {
    fn spec(&self) -> HeuristicSpec {
        HeuristicSpec::new("pwmc", Some(self.exchanges))
    }

    fn arrange(&self, matrix: &SimilarityMatrix, seed: u64) -> Result<Arrangement> {
        let mut order = nearest_neighbor_order(matrix);
        let n = order.len();
        if n >= 2 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..self.exchanges {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                if swap_delta(&order, matrix, i, j) < -COST_EPSILON {
                    order.swap(i, j);
                }
            }
        }
        Arrangement::new(order)
    }
}

/// Block-swap Monte Carlo: starting from the nearest-neighbour order, cut the
/// list at a random point and exchange the two blocks when that strictly
/// lowers the cost.
#[derive(Debug, Clone, Copy)]
pub struct BlockSwap {
    pub iterations: u64,
}

impl BlockSwap {
    pub const DEFAULT_ITERATIONS: u64 = 1000;
}

/// Cost change from turning `A ++ B` into `B ++ A` where `A = order[..cut]`.
/// Only cross pairs move: distance `d` becomes `n - d`.
fn block_delta(order: &[usize], m: &SimilarityMatrix, cut: usize) -> f64 {
    let n = order.len();
    let mut delta = 0.0;
    for i in 0..cut {
        for j in cut..n {
            let d = (j - i) as f64;
            delta += weight(m, order[i], order[j]) * (n as f64 - 2.0 * d);
        }
    }
    delta
}

impl Arranger for BlockSwap {
    fn spec(&self) -> HeuristicSpec {
        HeuristicSpec::new("mc", Some(self.iterations))
    }

    fn arrange(&self, matrix: &SimilarityMatrix, seed: u64) -> Result<Arrangement> {
        let mut order = nearest_neighbor_order(matrix);
        let n = order.len();
        if n >= 2 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..self.iterations {
                let cut = rng.random_range(1..n);
                if block_delta(&order, matrix, cut) < -COST_EPSILON {
                    order.rotate_left(cut);
                }
            }
        }
        Arrangement::new(order)
    }
}
