//! Seeded synthetic fact tables with Zipf-distributed dimension values.

use anyhow::{bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use tagcube_core::RawTable;

/// Name of the integer measure column.
pub const MEASURE: &str = "amount";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    /// One entry per dimension.
    pub cardinalities: Vec<usize>,
    pub facts: usize,
    /// Zipf exponent; 0 draws uniformly.
    pub zipf_s: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn uniform_cards(dims: usize, cardinality: usize, facts: usize, zipf_s: f64, seed: u64) -> Self {
        SynthSpec {
            cardinalities: vec![cardinality; dims],
            facts,
            zipf_s,
            seed,
        }
    }

    pub fn dimension_names(&self) -> Vec<String> {
        (1..=self.cardinalities.len()).map(|i| format!("d{i}")).collect()
    }
}

/// Value `rank` (1-based, 1 most frequent) of dimension `dim`, zero-padded so
/// that lexicographic and rank order agree.
pub fn value_label(dim: usize, rank: usize, cardinality: usize) -> String {
    let width = cardinality.to_string().len();
    format!("d{dim}v{rank:0width$}")
}

/// Columns `d1..dN` followed by the integer measure `amount` in 1..=100.
pub fn generate(spec: &SynthSpec) -> Result<RawTable> {
    if spec.cardinalities.is_empty() {
        bail!("at least one dimension is required");
    }
    if spec.facts == 0 || spec.cardinalities.contains(&0) {
        bail!("fact count and cardinalities must be positive");
    }
    if !spec.zipf_s.is_finite() || spec.zipf_s < 0.0 {
        bail!("zipf exponent must be a finite non-negative number");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let samplers = spec
        .cardinalities
        .iter()
        .map(|&c| Zipf::new(c as f64, spec.zipf_s))
        .collect::<Result<Vec<_>, _>>()?;
    let labels: Vec<Vec<String>> = spec
        .cardinalities
        .iter()
        .enumerate()
        .map(|(i, &c)| (1..=c).map(|r| value_label(i + 1, r, c)).collect())
        .collect();

    let mut rows = Vec::with_capacity(spec.facts);
    for _ in 0..spec.facts {
        let mut row: Vec<String> = samplers
            .iter()
            .zip(&labels)
            .map(|(z, values)| {
                let rank = z.sample(&mut rng) as usize;
                values[rank.clamp(1, values.len()) - 1].clone()
            })
            .collect();
        row.push(rng.random_range(1..=100u32).to_string());
        rows.push(row);
    }
    let mut columns = spec.dimension_names();
    columns.push(MEASURE.to_string());
    Ok(RawTable::new(columns, rows)?)
}
