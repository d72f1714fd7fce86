use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::data::{RoadGraph, SnapshotSeries};

/// Pooled correlations of year-over-year PCI changes between node pairs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContagionStats {
    pub adjacent: f64,
    pub non_adjacent: f64,
    pub adjacent_pairs: usize,
    pub non_adjacent_pairs: usize,
}

impl ContagionStats {
    pub fn difference(&self) -> f64 {
        self.adjacent - self.non_adjacent
    }
}

/// Year-over-year changes with the network-wide mean of each year removed.
fn centered_changes(series: &SnapshotSeries) -> Vec<Vec<f64>> {
    let y = series.target_vectors();
    let n = series.num_nodes();
    (1..y.len())
        .map(|t| {
            let d: Vec<f64> = (0..n).map(|i| y[t][i] - y[t - 1][i]).collect();
            let mean = d.iter().sum::<f64>() / n as f64;
            d.into_iter().map(|v| v - mean).collect()
        })
        .collect()
}

fn pooled_correlation(changes: &[Vec<f64>], pairs: &[(usize, usize)]) -> f64 {
    let (mut sa, mut sb, mut saa, mut sbb, mut sab, mut k) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for d in changes {
        for &(i, j) in pairs {
            // both orientations so the statistic is symmetric in the pair
            for (a, b) in [(d[i], d[j]), (d[j], d[i])] {
                sa += a;
                sb += b;
                saa += a * a;
                sbb += b * b;
                sab += a * b;
                k += 1.0;
            }
        }
    }
    let cov = sab / k - (sa / k) * (sb / k);
    let va = saa / k - (sa / k).powi(2);
    let vb = sbb / k - (sb / k).powi(2);
    if va <= 0.0 || vb <= 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Compares change correlations across edges with those of random
/// non-adjacent pairs (`random_pairs` of them, drawn from `seed`).
pub fn contagion_statistic(
    series: &SnapshotSeries,
    graph: &RoadGraph,
    random_pairs: usize,
    seed: u64,
) -> Result<ContagionStats, SynthError> {
    let n = graph.num_nodes();
    if series.num_nodes() != n {
        return Err(SynthError::InvalidConfig(format!(
            "series has {} nodes, graph {n}",
            series.num_nodes()
        )));
    }
    if series.num_years() < 2 || graph.num_edges() == 0 || n < 3 || random_pairs == 0 {
        return Err(SynthError::TooFewPairs);
    }
    let max_non_adjacent = n * (n - 1) / 2 - graph.num_edges();
    if random_pairs > max_non_adjacent {
        return Err(SynthError::TooFewPairs);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = BTreeSet::new();
    let mut others = Vec::with_capacity(random_pairs);
    while others.len() < random_pairs {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        let key = (i.min(j), i.max(j));
        if i != j && !graph.has_edge(i, j) && chosen.insert(key) {
            others.push(key);
        }
    }
    let changes = centered_changes(series);
    Ok(ContagionStats {
        adjacent: pooled_correlation(&changes, graph.edges()),
        non_adjacent: pooled_correlation(&changes, &others),
        adjacent_pairs: graph.num_edges(),
        non_adjacent_pairs: random_pairs,
    })
}

/// Contagion check for a series generated with coefficient `gamma > 0`,
/// using 1000 random non-adjacent pairs.
pub fn contagion_strength_probe(
    series: &SnapshotSeries,
    graph: &RoadGraph,
    gamma: f64,
    seed: u64,
) -> Result<ContagionStats, SynthError> {
    if !(gamma > 0.0) {
        return Err(SynthError::ZeroContagion);
    }
    contagion_statistic(series, graph, 1000, seed)
}
