//! Linear arrangement of tags.
//!
//! Tags are sent to clients as an ordered list in which neighbours should be
//! similar. The quality of an order is its MLA cost: the sum over tag pairs of
//! similarity times index distance. Heuristics implement [`Arranger`] and are
//! looked up by name in a [`LayoutRegistry`], using specs such as `nn`,
//! `pwmc:1000` or `mc:100`.

mod exchange;
mod exhaustive;
mod hints;
mod nearest;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::similarity::SimilarityMatrix;

pub use exchange::{BlockSwap, PairwiseExchange};
pub use exhaustive::{BruteForce, MAX_BRUTE_FORCE_TAGS};
pub use hints::{insert_hints, HintThresholds, HintedLayout, LayoutEntry};
pub use nearest::NearestNeighbor;

/// Cost changes smaller than this are treated as no change.
pub(crate) const COST_EPSILON: f64 = 1e-9;

/// A permutation of the tags of a similarity matrix. `order[p]` is the tag
/// index placed at position `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arrangement {
    order: Vec<usize>,
}

impl Arrangement {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &i in &order {
            if i >= order.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid("arrangement is not a permutation"));
            }
        }
        Ok(Arrangement { order })
    }

    pub fn identity(n: usize) -> Self {
        Arrangement {
            order: (0..n).collect(),
        }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Inverse permutation: `positions()[tag]` is the 0-based position of `tag`.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.order.len()];
        for (p, &t) in self.order.iter().enumerate() {
            pos[t] = p;
        }
        pos
    }

    pub fn terms<'a>(&self, matrix: &'a SimilarityMatrix) -> Vec<&'a str> {
        self.order.iter().map(|&i| matrix.terms()[i].as_str()).collect()
    }

    pub fn reversed(&self) -> Self {
        let mut order = self.order.clone();
        order.reverse();
        Arrangement { order }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct MlaCost(pub f64);

impl MlaCost {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Similarity used as a cost weight; negative similarities count as 0.
#[inline]
pub(crate) fn weight(m: &SimilarityMatrix, i: usize, j: usize) -> f64 {
    m.get(i, j).max(0.0)
}

pub(crate) fn cost_of(order: &[usize], m: &SimilarityMatrix) -> f64 {
    let mut total = 0.0;
    for a in 0..order.len() {
        for b in a + 1..order.len() {
            total += weight(m, order[a], order[b]) * (b - a) as f64;
        }
    }
    total
}

pub fn mla_cost(arrangement: &Arrangement, matrix: &SimilarityMatrix) -> Result<MlaCost> {
    if arrangement.len() != matrix.len() {
        return Err(Error::invalid(format!(
            "arrangement has {} tags, matrix has {}",
            arrangement.len(),
            matrix.len()
        )));
    }
    Ok(MlaCost(cost_of(&arrangement.order, matrix)))
}

pub trait Arranger: Send + Sync {
    /// Canonical spec string, e.g. `pwmc:1000`.
    fn spec(&self) -> HeuristicSpec;

    fn arrange(&self, matrix: &SimilarityMatrix, seed: u64) -> Result<Arrangement>;
}

/// A heuristic name with its optional integer parameter.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HeuristicSpec {
    pub name: String,
    pub parameter: Option<u64>,
}

impl HeuristicSpec {
    pub fn new(name: impl Into<String>, parameter: Option<u64>) -> Self {
        HeuristicSpec {
            name: name.into(),
            parameter,
        }
    }
}

impl fmt::Display for HeuristicSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.parameter {
            Some(p) => write!(f, "{}:{p}", self.name),
            None => f.write_str(&self.name),
        }
    }
}

impl FromStr for HeuristicSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownStrategy {
            kind: "layout heuristic",
            name: s.to_string(),
        };
        let (name, parameter) = match s.split_once(':') {
            Some((n, p)) => (n, Some(p.trim().parse::<u64>().map_err(|_| bad())?)),
            None => (s, None),
        };
        let name = name.trim().to_ascii_lowercase();
        if name.is_empty() {
            return Err(bad());
        }
        Ok(HeuristicSpec { name, parameter })
    }
}

type Factory = fn(Option<u64>) -> Result<Box<dyn Arranger>>;

/// Layout heuristics by name.
#[derive(Clone)]
pub struct LayoutRegistry {
    factories: BTreeMap<&'static str, Factory>,
}

impl fmt::Debug for LayoutRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}

fn no_parameter(name: &str, p: Option<u64>) -> Result<()> {
    match p {
        Some(_) => Err(Error::invalid(format!("heuristic `{name}` takes no parameter"))),
        None => Ok(()),
    }
}

impl Default for LayoutRegistry {
    fn default() -> Self {
        let mut r = LayoutRegistry {
            factories: BTreeMap::new(),
        };
        r.register("nn", |p| {
            no_parameter("nn", p)?;
            Ok(Box::new(NearestNeighbor))
        });
        r.register("pwmc", |p| {
            Ok(Box::new(PairwiseExchange {
                exchanges: p.unwrap_or(PairwiseExchange::DEFAULT_EXCHANGES),
            }))
        });
        r.register("mc", |p| {
            Ok(Box::new(BlockSwap {
                iterations: p.unwrap_or(BlockSwap::DEFAULT_ITERATIONS),
            }))
        });
        r.register("brute", |p| {
            no_parameter("brute", p)?;
            Ok(Box::new(BruteForce))
        });
        r
    }
}

impl LayoutRegistry {
    pub fn register(&mut self, name: &'static str, factory: Factory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn build(&self, spec: &HeuristicSpec) -> Result<Box<dyn Arranger>> {
        let factory = self
            .factories
            .get(spec.name.as_str())
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "layout heuristic",
                name: spec.to_string(),
            })?;
        factory(spec.parameter)
    }

    pub fn parse(&self, spec: &str) -> Result<Box<dyn Arranger>> {
        self.build(&spec.parse()?)
    }
}

pub fn nn_arrange(matrix: &SimilarityMatrix) -> Result<Arrangement> {
    NearestNeighbor.arrange(matrix, 0)
}

pub fn pwmc_arrange(matrix: &SimilarityMatrix, exchanges: u64, seed: u64) -> Result<Arrangement> {
    PairwiseExchange { exchanges }.arrange(matrix, seed)
}

pub fn mc_block_arrange(matrix: &SimilarityMatrix, iterations: u64, seed: u64) -> Result<Arrangement> {
    BlockSwap { iterations }.arrange(matrix, seed)
}

pub fn brute_force_arrange(matrix: &SimilarityMatrix) -> Result<Arrangement> {
    BruteForce.arrange(matrix, 0)
}
