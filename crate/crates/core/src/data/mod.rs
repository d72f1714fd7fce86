//! Road graph, yearly snapshots, temporal windows and standardization.

mod graph;
mod io;
mod scaler;
mod series;

pub use graph::{AttentionEdges, RoadGraph};
pub use io::{
    dataset_from_records, parse_edges, parse_observations, read_dataset, read_edges,
    read_observations, write_edges, write_observations, Dataset, ObservationRecord, EDGE_HEADER,
    OBSERVATION_HEADER,
};
pub use scaler::Standardizer;
pub use series::{build_windows, load_snapshots, SnapshotSeries, SplitSpec, TemporalSample, WindowSplit};

use thiserror::Error;

/// Input feature columns, in file and tensor order.
pub const FEATURE_NAMES: [&str; 11] = [
    "material",
    "agg_type",
    "flood_risk",
    "proximity_quarry",
    "age_yrs",
    "traffic_aadt",
    "truck_factor",
    "ept_mm",
    "base_modulus",
    "crack_area_pct",
    "iri",
];

pub const NUM_FEATURES: usize = FEATURE_NAMES.len();

#[derive(Debug, Error)]
pub enum DataError {
    #[error("duplicate segment id {0:?}")]
    DuplicateNode(String),
    #[error("edge endpoint {0:?} is not a known segment")]
    DanglingEdge(String),
    #[error("self-loop on segment {0:?}")]
    SelfLoop(String),
    #[error("unknown segment id {0:?}")]
    UnknownSegment(String),
    #[error("missing observation for segment {segment:?} in year {year}")]
    MissingObservation { segment: String, year: i32 },
    #[error("duplicate observation for segment {segment:?} in year {year}")]
    DuplicateObservation { segment: String, year: i32 },
    #[error("PCI {value} for segment {segment:?} in year {year} is outside [0, 100]")]
    PciOutOfRange { segment: String, year: i32, value: f64 },
    #[error("years must be consecutive, found {0:?}")]
    NonConsecutiveYears(Vec<i32>),
    #[error("no observations")]
    Empty,
    #[error("window length {t0} needs at least {} years, series has {available}", t0 + 1)]
    InsufficientHistory { t0: usize, available: usize },
    #[error("window length must be at least 1")]
    ZeroWindow,
    #[error("training year set is empty")]
    EmptyTrainingSet,
    #[error("year {0} is not in the series")]
    UnknownYear(i32),
    #[error("expected {expected} feature columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
    #[error("{path}: expected header {expected:?}")]
    Header { path: String, expected: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{}: {source}", path.display())]
    File {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}
