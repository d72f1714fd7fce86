use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use super::{load_snapshots, DataError, RoadGraph, SnapshotSeries, FEATURE_NAMES};

pub const OBSERVATION_HEADER: &str = "segment_id,year,material,agg_type,flood_risk,proximity_quarry,age_yrs,traffic_aadt,truck_factor,ept_mm,base_modulus,crack_area_pct,iri,pci";
pub const EDGE_HEADER: &str = "src_segment_id,dst_segment_id";

/// One row of the node observation file.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationRecord {
    pub segment_id: String,
    pub year: i32,
    /// The eleven feature values in [`FEATURE_NAMES`] order.
    pub features: Vec<f64>,
    pub pci: f64,
}

/// Graph plus aligned snapshots, as read from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub graph: RoadGraph,
    pub series: SnapshotSeries,
}

fn header_matches(found: &csv::StringRecord, expected: &str) -> bool {
    found.iter().map(str::trim).eq(expected.split(','))
}

fn parse_err(path: &str, rec: &csv::StringRecord, message: String) -> DataError {
    DataError::Parse {
        path: path.to_owned(),
        line: rec.position().map_or(0, |p| p.line()),
        message,
    }
}

pub fn parse_observations<R: Read>(reader: R, label: &str) -> Result<Vec<ObservationRecord>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    if !header_matches(rdr.headers()?, OBSERVATION_HEADER) {
        return Err(DataError::Header {
            path: label.to_owned(),
            expected: OBSERVATION_HEADER.to_owned(),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let year: i32 = rec[1]
            .parse()
            .map_err(|_| parse_err(label, &rec, format!("year {:?} is not an integer", &rec[1])))?;
        let mut nums = Vec::with_capacity(FEATURE_NAMES.len() + 1);
        for (k, field) in rec.iter().enumerate().skip(2) {
            let v: f64 = field.parse().map_err(|_| {
                parse_err(label, &rec, format!("column {k} value {field:?} is not numeric"))
            })?;
            if !v.is_finite() {
                return Err(parse_err(label, &rec, format!("column {k} is not finite")));
            }
            nums.push(v);
        }
        let pci = nums.pop().expect("header guarantees a pci column");
        out.push(ObservationRecord {
            segment_id: rec[0].to_owned(),
            year,
            features: nums,
            pci,
        });
    }
    Ok(out)
}

pub fn parse_edges<R: Read>(reader: R, label: &str) -> Result<Vec<(String, String)>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    if !header_matches(rdr.headers()?, EDGE_HEADER) {
        return Err(DataError::Header {
            path: label.to_owned(),
            expected: EDGE_HEADER.to_owned(),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push((rec[0].to_owned(), rec[1].to_owned()));
    }
    Ok(out)
}

fn open(path: &Path) -> Result<std::fs::File, DataError> {
    std::fs::File::open(path).map_err(|source| DataError::File {
        path: path.to_owned(),
        source,
    })
}

pub fn read_observations(path: &Path) -> Result<Vec<ObservationRecord>, DataError> {
    parse_observations(open(path)?, &path.display().to_string())
}

pub fn read_edges(path: &Path) -> Result<Vec<(String, String)>, DataError> {
    parse_edges(open(path)?, &path.display().to_string())
}

/// Reads both files; the node set is the set of segment ids in the observation file.
pub fn read_dataset(observations: &Path, edges: &Path) -> Result<Dataset, DataError> {
    let records = read_observations(observations)?;
    let pairs = read_edges(edges)?;
    dataset_from_records(&records, &pairs)
}

pub fn dataset_from_records(
    records: &[ObservationRecord],
    pairs: &[(String, String)],
) -> Result<Dataset, DataError> {
    let ids: Vec<String> = records
        .iter()
        .map(|r| r.segment_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let graph = RoadGraph::load(&ids, pairs)?;
    let series = load_snapshots(records, &graph)?;
    Ok(Dataset { graph, series })
}

pub fn write_observations<W: Write>(out: W, records: &[ObservationRecord]) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(OBSERVATION_HEADER.split(','))?;
    for r in records {
        let mut row = vec![r.segment_id.clone(), r.year.to_string()];
        row.extend(r.features.iter().map(|v| v.to_string()));
        row.push(r.pci.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes each undirected edge in both directions.
pub fn write_edges<W: Write>(out: W, graph: &RoadGraph) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EDGE_HEADER.split(','))?;
    let ids = graph.node_ids();
    for &(a, b) in graph.edges() {
        w.write_record([&ids[a], &ids[b]])?;
        w.write_record([&ids[b], &ids[a]])?;
    }
    w.flush()?;
    Ok(())
}
