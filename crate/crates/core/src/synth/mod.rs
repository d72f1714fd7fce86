//! Synthetic road networks with yearly condition surveys.
//!
//! Every node draws its attributes and its yearly noise from its own random
//! stream, and standardization inside the deterioration model uses fixed
//! reference statistics. With `gamma = 0` nodes therefore evolve fully
//! independently; with `gamma > 0` a node's decline also depends on the
//! condition of its neighbours.

mod probe;
mod topology;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Exp, Gamma, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use probe::{contagion_statistic, contagion_strength_probe, ContagionStats};
pub use topology::{lattice_graph, segment_ids};

use crate::autodiff::Tensor;
use crate::data::{DataError, Dataset, RoadGraph, SnapshotSeries, FEATURE_NAMES, NUM_FEATURES};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("arc count {0} is odd; every undirected edge yields two arcs")]
    OddArcCount(usize),
    #[error("{requested} arcs requested but the lattice offers at most {max}")]
    UnreachableArcCount { requested: usize, max: usize },
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("contagion probe needs gamma > 0")]
    ZeroContagion,
    #[error("not enough node pairs for the probe")]
    TooFewPairs,
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Observed range and moments of one column.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

const fn stats(min: f64, max: f64, mean: f64, std: f64) -> ColumnStats {
    ColumnStats { min, max, mean, std }
}

/// Reference statistics of the feature columns (in [`FEATURE_NAMES`] order).
pub const FEATURE_STATS: [ColumnStats; NUM_FEATURES] = [
    stats(0.0, 1.0, 0.74, 0.44),
    stats(0.0, 1.0, 0.87, 0.34),
    stats(0.0, 2.0, 0.93, 0.86),
    stats(0.0, 1.0, 0.26, 0.44),
    stats(2.0, 11.0, 6.56, 2.28),
    stats(5004.0, 19977.0, 9481.24, 4039.14),
    stats(1.0, 11.99, 5.77, 3.09),
    stats(120.6, 320.0, 253.8, 58.69),
    stats(150.8, 499.6, 349.56, 103.09),
    stats(0.0, 21.92, 4.32, 3.95),
    stats(1.0, 5.66, 2.65, 0.69),
];

/// Reference statistics of PCI.
pub const PCI_STATS: ColumnStats = stats(36.65, 97.05, 80.99, 9.13);

mod col {
    pub const MATERIAL: usize = 0;
    pub const AGG: usize = 1;
    pub const FLOOD: usize = 2;
    pub const QUARRY: usize = 3;
    pub const AGE: usize = 4;
    pub const AADT: usize = 5;
    pub const TRUCK: usize = 6;
    pub const EPT: usize = 7;
    pub const BASE: usize = 8;
    pub const CRACK: usize = 9;
    pub const IRI: usize = 10;
}

fn z(value: f64, column: usize) -> f64 {
    let s = FEATURE_STATS[column];
    (value - s.mean) / s.std
}

/// Sampling parameters of the first-year attributes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    pub material_p: f64,
    pub agg_type_p: f64,
    pub quarry_p: f64,
    /// Probabilities of flood risk levels 1 and 2; level 0 takes the rest.
    pub flood_p: [f64; 2],
    pub age_range: (u32, u32),
    /// AADT = offset + Gamma(shape, scale).
    pub aadt_offset: f64,
    pub aadt_shape: f64,
    pub aadt_scale: f64,
    pub aadt_growth: f64,
    pub truck_range: (f64, f64),
    /// EPT = ceiling - Gamma(shape, scale).
    pub ept_ceiling: f64,
    pub ept_shape: f64,
    pub ept_scale: f64,
    pub base_range: (f64, f64),
    /// Initial deficit below the PCI ceiling: Gamma(shape, scale) plus an age term.
    pub deficit_shape: f64,
    pub deficit_scale: f64,
    pub deficit_per_age_year: f64,
}

impl Default for Marginals {
    fn default() -> Self {
        Self {
            material_p: 0.74,
            agg_type_p: 0.87,
            quarry_p: 0.26,
            flood_p: [0.2555, 0.33725],
            age_range: (2, 8),
            aadt_offset: 5004.0,
            aadt_shape: 1.23,
            aadt_scale: 3644.0,
            aadt_growth: 0.01,
            truck_range: (1.0, 11.99),
            ept_ceiling: 320.0,
            ept_shape: 1.27,
            ept_scale: 52.0,
            base_range: (150.8, 499.6),
            deficit_shape: 3.0,
            deficit_scale: 4.0,
            deficit_per_age_year: 0.8,
        }
    }
}

/// Coefficients of the yearly PCI decline.
///
/// `decline = base + traffic * z(aadt) + truck * z(truck)
///   - structure * (z(ept) + z(base_modulus)) / 2 + age * (age - mean_age)
///   + asphalt * [material = 0] + flood shock + feedback * (deficit - reference)
///   + gamma * contagion * (mean neighbour deficit - reference) + drift + noise`,
/// clamped at zero. `deficit` is the distance of PCI below its ceiling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeteriorationModel {
    pub base: f64,
    pub traffic: f64,
    pub truck: f64,
    pub structure: f64,
    pub age: f64,
    pub asphalt: f64,
    /// Shock probability per flood risk level.
    pub flood_shock_p: [f64; 3],
    pub flood_shock_mean: f64,
    pub feedback: f64,
    pub contagion: f64,
    pub reference_deficit: f64,
    /// Std of the persistent per-node decline rate used when drift is enabled.
    pub drift_std: f64,
    pub noise_std: f64,
    /// Crack area per unit deficit above `crack_onset`.
    pub crack_slope: f64,
    pub crack_onset: f64,
    pub crack_noise: f64,
    pub iri_intercept: f64,
    pub iri_slope: f64,
    pub iri_noise: f64,
}

impl Default for DeteriorationModel {
    fn default() -> Self {
        Self {
            base: 1.8,
            traffic: 0.8,
            truck: 0.6,
            structure: 0.6,
            age: 0.2,
            asphalt: 0.4,
            flood_shock_p: [0.05, 0.15, 0.3],
            flood_shock_mean: 2.0,
            feedback: 0.06,
            contagion: 1.0,
            reference_deficit: 19.0,
            drift_std: 1.5,
            noise_std: 1.0,
            crack_slope: 0.3,
            crack_onset: 3.0,
            crack_noise: 1.5,
            iri_intercept: 1.2,
            iri_slope: 0.075,
            iri_noise: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_segments: usize,
    pub start_year: i32,
    pub num_years: usize,
    /// Directed arc count; each undirected edge counts twice.
    pub target_arcs: usize,
    /// Strength of neighbour contagion; zero makes nodes independent.
    pub gamma: f64,
    /// Adds a persistent per-node decline rate that only shows up over time.
    pub temporal_drift: bool,
    pub seed: u64,
    pub marginals: Marginals,
    pub model: DeteriorationModel,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_segments: 750,
            start_year: 2021,
            num_years: 4,
            target_arcs: 1498,
            gamma: 0.5,
            temporal_drift: true,
            seed: 0,
            marginals: Marginals::default(),
            model: DeteriorationModel::default(),
        }
    }
}

impl SynthConfig {
    /// Default dynamics on `n` segments with a spanning-tree road network.
    pub fn with_segments(n: usize) -> Self {
        Self {
            num_segments: n,
            target_arcs: 2 * n.saturating_sub(1),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_owned()));
        if self.num_segments == 0 {
            return bad("num_segments must be positive");
        }
        if self.num_years == 0 {
            return bad("num_years must be positive");
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return bad("gamma must be a non-negative number");
        }
        let m = &self.marginals;
        let probs = [m.material_p, m.agg_type_p, m.quarry_p, m.flood_p[0], m.flood_p[1]];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || m.flood_p[0] + m.flood_p[1] > 1.0 {
            return bad("marginal probabilities must lie in [0, 1]");
        }
        if m.age_range.0 > m.age_range.1 {
            return bad("age_range is reversed");
        }
        Ok(())
    }
}

/// First-year state of every node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    /// `N x F` attributes of the first year (crack and IRI are filled by [`evolve`]).
    pub features: Vec<[f64; NUM_FEATURES]>,
    pub pci: Vec<f64>,
    /// Persistent decline rate per node.
    pub drift: Vec<f64>,
}

fn node_rng(seed: u64, node: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * node as u64 + purpose);
    rng
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    (v * s).round() / s
}

fn clamp_col(v: f64, column: usize) -> f64 {
    let s = FEATURE_STATS[column];
    v.clamp(s.min, s.max)
}

/// Draws every node's first-year attributes, condition and drift rate.
pub fn sample_initial(config: &SynthConfig) -> Result<InitialState, SynthError> {
    config.validate()?;
    let m = &config.marginals;
    let dist_err = |e: String| SynthError::InvalidConfig(e);
    let material = Bernoulli::new(m.material_p).map_err(|e| dist_err(e.to_string()))?;
    let agg = Bernoulli::new(m.agg_type_p).map_err(|e| dist_err(e.to_string()))?;
    let quarry = Bernoulli::new(m.quarry_p).map_err(|e| dist_err(e.to_string()))?;
    let aadt = Gamma::new(m.aadt_shape, m.aadt_scale).map_err(|e| dist_err(e.to_string()))?;
    let ept = Gamma::new(m.ept_shape, m.ept_scale).map_err(|e| dist_err(e.to_string()))?;
    let deficit = Gamma::new(m.deficit_shape, m.deficit_scale).map_err(|e| dist_err(e.to_string()))?;
    let drift = Normal::new(0.0, config.model.drift_std.max(0.0)).map_err(|e| dist_err(e.to_string()))?;

    let n = config.num_segments;
    let mut state = InitialState {
        features: Vec::with_capacity(n),
        pci: Vec::with_capacity(n),
        drift: Vec::with_capacity(n),
    };
    for i in 0..n {
        let mut rng = node_rng(config.seed, i, 0);
        let mut x = [0.0; NUM_FEATURES];
        x[col::MATERIAL] = f64::from(u8::from(material.sample(&mut rng)));
        x[col::AGG] = f64::from(u8::from(agg.sample(&mut rng)));
        let u: f64 = rng.random();
        x[col::FLOOD] = if u < m.flood_p[1] {
            2.0
        } else if u < m.flood_p[1] + m.flood_p[0] {
            1.0
        } else {
            0.0
        };
        x[col::QUARRY] = f64::from(u8::from(quarry.sample(&mut rng)));
        x[col::AGE] = f64::from(rng.random_range(m.age_range.0..=m.age_range.1));
        x[col::AADT] = clamp_col((m.aadt_offset + aadt.sample(&mut rng)).round(), col::AADT);
        x[col::TRUCK] = round_to(rng.random_range(m.truck_range.0..=m.truck_range.1), 2);
        x[col::EPT] = clamp_col(round_to(m.ept_ceiling - ept.sample(&mut rng), 1), col::EPT);
        x[col::BASE] = round_to(rng.random_range(m.base_range.0..=m.base_range.1), 1);
        let d0 = deficit.sample(&mut rng) + m.deficit_per_age_year * (x[col::AGE] - f64::from(m.age_range.0));
        let rho = drift.sample(&mut rng);
        state.features.push(x);
        state.pci.push((PCI_STATS.max - d0).clamp(PCI_STATS.min, PCI_STATS.max));
        state.drift.push(if config.temporal_drift { rho } else { 0.0 });
    }
    Ok(state)
}

/// Runs the yearly dynamics from `initial` over `graph`.
pub fn evolve(
    config: &SynthConfig,
    graph: &RoadGraph,
    initial: &InitialState,
) -> Result<SnapshotSeries, SynthError> {
    config.validate()?;
    let n = config.num_segments;
    if graph.num_nodes() != n || initial.pci.len() != n || initial.features.len() != n {
        return Err(SynthError::InvalidConfig(format!(
            "graph has {} nodes, initial state {}, config {n}",
            graph.num_nodes(),
            initial.pci.len()
        )));
    }
    let dm = &config.model;
    let noise = Normal::new(0.0, dm.noise_std.max(0.0)).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    let shock = Exp::new(1.0 / dm.flood_shock_mean.max(1e-12)).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|i| node_rng(config.seed, i, 1)).collect();
    let mut attrs = initial.features.clone();
    let mut pci = initial.pci.clone();
    let mut features = Vec::with_capacity(config.num_years);
    let mut targets = Vec::with_capacity(config.num_years);

    for t in 0..config.num_years {
        // observe the current year
        let mut x = Vec::with_capacity(n * NUM_FEATURES);
        for i in 0..n {
            let rng = &mut rngs[i];
            let deficit = PCI_STATS.max - pci[i];
            let crack = dm.crack_slope * (deficit - dm.crack_onset) + dm.crack_noise * std_normal.sample(rng);
            let iri = dm.iri_intercept + dm.iri_slope * deficit + dm.iri_noise * std_normal.sample(rng);
            attrs[i][col::CRACK] = clamp_col(round_to(crack, 2), col::CRACK);
            attrs[i][col::IRI] = clamp_col(round_to(iri, 2), col::IRI);
            x.extend_from_slice(&attrs[i]);
        }
        features.push(Tensor::matrix(n, NUM_FEATURES, x));
        targets.push(pci.iter().map(|&v| round_to(v, 2)).collect::<Vec<f64>>());
        if t + 1 == config.num_years {
            break;
        }

        // advance to the next year
        let deficits: Vec<f64> = pci.iter().map(|&p| PCI_STATS.max - p).collect();
        let mut next = pci.clone();
        for i in 0..n {
            let rng = &mut rngs[i];
            let a = &attrs[i];
            let mut decline = dm.base
                + dm.traffic * z(a[col::AADT], col::AADT)
                + dm.truck * z(a[col::TRUCK], col::TRUCK)
                - dm.structure * 0.5 * (z(a[col::EPT], col::EPT) + z(a[col::BASE], col::BASE))
                + dm.age * (a[col::AGE] - FEATURE_STATS[col::AGE].mean)
                + dm.asphalt * (1.0 - a[col::MATERIAL])
                + dm.feedback * (deficits[i] - dm.reference_deficit)
                + initial.drift[i];
            let p_shock = dm.flood_shock_p[a[col::FLOOD] as usize];
            let hit = rng.random::<f64>() < p_shock;
            let size = shock.sample(rng);
            if hit {
                decline += size;
            }
            decline += noise.sample(rng);
            if config.gamma > 0.0 {
                let nb = graph.neighbors(i);
                if !nb.is_empty() {
                    let mean_nb = nb.iter().map(|&j| deficits[j]).sum::<f64>() / nb.len() as f64;
                    decline += config.gamma * dm.contagion * (mean_nb - dm.reference_deficit);
                }
            }
            next[i] = (pci[i] - decline.max(0.0)).clamp(PCI_STATS.min, PCI_STATS.max);
        }
        pci = next;
        for a in &mut attrs {
            a[col::AGE] = clamp_col(a[col::AGE] + 1.0, col::AGE);
            a[col::AADT] = clamp_col((a[col::AADT] * (1.0 + config.marginals.aadt_growth)).round(), col::AADT);
        }
    }

    let years = (0..config.num_years as i32).map(|k| config.start_year + k).collect();
    Ok(SnapshotSeries::new(
        graph.node_ids().to_vec(),
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        years,
        features,
        targets,
    )?)
}

/// Builds the road network and the yearly snapshots for `config`.
pub fn generate(config: &SynthConfig) -> Result<Dataset, SynthError> {
    config.validate()?;
    let graph = lattice_graph(config.num_segments, config.target_arcs, &mut topology::topology_rng(config.seed))?;
    let initial = sample_initial(config)?;
    let series = evolve(config, &graph, &initial)?;
    Ok(Dataset { graph, series })
}
