use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{DataError, ObservationRecord, RoadGraph, FEATURE_NAMES};
use crate::autodiff::Tensor;

/// Per-year feature matrices (`N x F`) and PCI targets in canonical node order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSeries {
    node_ids: Vec<String>,
    feature_names: Vec<String>,
    years: Vec<i32>,
    features: Vec<Tensor>,
    targets: Vec<Vec<f64>>,
}

/// One model input: `T0` consecutive yearly feature matrices and the next year's PCI.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalSample {
    /// Time slices, oldest first, each `N x F`.
    pub inputs: Vec<Tensor>,
    pub target: Vec<f64>,
    pub input_years: Vec<i32>,
    pub target_year: i32,
}

impl TemporalSample {
    pub fn num_nodes(&self) -> usize {
        self.target.len()
    }

    pub fn num_features(&self) -> usize {
        self.inputs.first().map_or(0, Tensor::cols)
    }

    pub fn window(&self) -> usize {
        self.inputs.len()
    }
}

impl SnapshotSeries {
    /// Assembles a series from matrices already in canonical node order.
    pub fn new(
        node_ids: Vec<String>,
        feature_names: Vec<String>,
        years: Vec<i32>,
        features: Vec<Tensor>,
        targets: Vec<Vec<f64>>,
    ) -> Result<Self, DataError> {
        if years.is_empty() {
            return Err(DataError::Empty);
        }
        if years.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(DataError::NonConsecutiveYears(years));
        }
        let n = node_ids.len();
        let f = feature_names.len();
        if features.len() != years.len() || targets.len() != years.len() {
            return Err(DataError::InvalidSplit(
                "one feature matrix and target vector per year required".into(),
            ));
        }
        for (k, (x, y)) in features.iter().zip(&targets).enumerate() {
            if x.shape() != [n, f] {
                return Err(DataError::DimensionMismatch {
                    expected: f,
                    got: x.cols(),
                });
            }
            if y.len() != n {
                return Err(DataError::DimensionMismatch {
                    expected: n,
                    got: y.len(),
                });
            }
            if let Some((i, &v)) = y
                .iter()
                .enumerate()
                .find(|(_, &v)| !(0.0..=100.0).contains(&v))
            {
                return Err(DataError::PciOutOfRange {
                    segment: node_ids[i].clone(),
                    year: years[k],
                    value: v,
                });
            }
        }
        Ok(Self {
            node_ids,
            feature_names,
            years,
            features,
            targets,
        })
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn num_years(&self) -> usize {
        self.years.len()
    }

    pub fn year_index(&self, year: i32) -> Option<usize> {
        self.years.iter().position(|&y| y == year)
    }

    pub fn features(&self, year: i32) -> Option<&Tensor> {
        self.year_index(year).map(|k| &self.features[k])
    }

    pub fn targets(&self, year: i32) -> Option<&[f64]> {
        self.year_index(year).map(|k| self.targets[k].as_slice())
    }

    pub fn feature_matrices(&self) -> &[Tensor] {
        &self.features
    }

    pub fn target_vectors(&self) -> &[Vec<f64>] {
        &self.targets
    }

    /// Flattens back into one record per (segment, year).
    pub fn to_records(&self) -> Vec<ObservationRecord> {
        let mut out = Vec::with_capacity(self.num_nodes() * self.num_years());
        for (k, &year) in self.years.iter().enumerate() {
            for (i, id) in self.node_ids.iter().enumerate() {
                out.push(ObservationRecord {
                    segment_id: id.clone(),
                    year,
                    features: self.features[k].row_slice(i).to_vec(),
                    pci: self.targets[k][i],
                });
            }
        }
        out
    }

    /// Copy without the named feature columns.
    pub fn drop_features<S: AsRef<str>>(&self, names: &[S]) -> Result<Self, DataError> {
        let mut keep = vec![true; self.num_features()];
        for name in names {
            let name = name.as_ref();
            let pos = self
                .feature_names
                .iter()
                .position(|f| f == name)
                .ok_or_else(|| DataError::UnknownFeature(name.to_owned()))?;
            keep[pos] = false;
        }
        let cols: Vec<usize> = (0..keep.len()).filter(|&c| keep[c]).collect();
        let features = self
            .features
            .iter()
            .map(|x| {
                let mut data = Vec::with_capacity(x.rows() * cols.len());
                for r in 0..x.rows() {
                    let row = x.row_slice(r);
                    data.extend(cols.iter().map(|&c| row[c]));
                }
                Tensor::matrix(x.rows(), cols.len(), data)
            })
            .collect();
        Ok(Self {
            node_ids: self.node_ids.clone(),
            feature_names: cols.iter().map(|&c| self.feature_names[c].clone()).collect(),
            years: self.years.clone(),
            features,
            targets: self.targets.clone(),
        })
    }
}

/// Arranges observation records into a series aligned with `graph`'s node order.
///
/// Every (segment, year) pair must be present exactly once; nothing is imputed.
pub fn load_snapshots(
    records: &[ObservationRecord],
    graph: &RoadGraph,
) -> Result<SnapshotSeries, DataError> {
    if records.is_empty() {
        return Err(DataError::Empty);
    }
    let f = FEATURE_NAMES.len();
    let years: Vec<i32> = records
        .iter()
        .map(|r| r.year)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if years.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(DataError::NonConsecutiveYears(years));
    }
    let year_pos: HashMap<i32, usize> = years.iter().enumerate().map(|(k, &y)| (y, k)).collect();
    let n = graph.num_nodes();
    let mut features = vec![Tensor::zeros(&[n, f]); years.len()];
    let mut targets = vec![vec![0.0; n]; years.len()];
    let mut seen = vec![vec![false; n]; years.len()];
    for r in records {
        let i = graph
            .index_of(&r.segment_id)
            .ok_or_else(|| DataError::UnknownSegment(r.segment_id.clone()))?;
        let k = year_pos[&r.year];
        if r.features.len() != f {
            return Err(DataError::DimensionMismatch {
                expected: f,
                got: r.features.len(),
            });
        }
        if !(0.0..=100.0).contains(&r.pci) {
            return Err(DataError::PciOutOfRange {
                segment: r.segment_id.clone(),
                year: r.year,
                value: r.pci,
            });
        }
        if seen[k][i] {
            return Err(DataError::DuplicateObservation {
                segment: r.segment_id.clone(),
                year: r.year,
            });
        }
        seen[k][i] = true;
        for (c, &v) in r.features.iter().enumerate() {
            features[k].set(i, c, v);
        }
        targets[k][i] = r.pci;
    }
    for (k, row) in seen.iter().enumerate() {
        if let Some(i) = row.iter().position(|s| !s) {
            return Err(DataError::MissingObservation {
                segment: graph.node_ids()[i].clone(),
                year: years[k],
            });
        }
    }
    SnapshotSeries::new(
        graph.node_ids().to_vec(),
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        years,
        features,
        targets,
    )
}

/// Sliding windows of `t0` input years predicting the following year.
pub fn build_windows(series: &SnapshotSeries, t0: usize) -> Result<Vec<TemporalSample>, DataError> {
    if t0 == 0 {
        return Err(DataError::ZeroWindow);
    }
    let available = series.num_years();
    if available < t0 + 1 {
        return Err(DataError::InsufficientHistory { t0, available });
    }
    Ok((0..available - t0)
        .map(|k| TemporalSample {
            inputs: series.features[k..k + t0].to_vec(),
            target: series.targets[k + t0].clone(),
            input_years: series.years[k..k + t0].to_vec(),
            target_year: series.years[k + t0],
        })
        .collect())
}

/// Chronological partition of years into train / validation / test.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_years: Vec<i32>,
    pub val_years: Vec<i32>,
    pub test_years: Vec<i32>,
}

/// Windows assigned to each role by [`SplitSpec::partition`].
#[derive(Clone, Debug)]
pub struct WindowSplit {
    pub train: Vec<TemporalSample>,
    pub val: Vec<TemporalSample>,
    pub test: Vec<TemporalSample>,
}

impl SplitSpec {
    pub fn new(train: Vec<i32>, val: Vec<i32>, test: Vec<i32>) -> Result<Self, DataError> {
        if train.is_empty() {
            return Err(DataError::EmptyTrainingSet);
        }
        let max = |v: &[i32]| v.iter().copied().max();
        let min = |v: &[i32]| v.iter().copied().min();
        let ordered = |a: &[i32], b: &[i32]| match (max(a), min(b)) {
            (Some(x), Some(y)) => x < y,
            _ => true,
        };
        if !ordered(&train, &val) || !ordered(&val, &test) || !ordered(&train, &test) {
            return Err(DataError::InvalidSplit(format!(
                "years must be chronological and disjoint: train {train:?}, val {val:?}, test {test:?}"
            )));
        }
        Ok(Self {
            train_years: train,
            val_years: val,
            test_years: test,
        })
    }

    /// Last year is test, the one before it validation, everything earlier training.
    pub fn chronological(years: &[i32]) -> Result<Self, DataError> {
        if years.len() < 3 {
            return Err(DataError::InvalidSplit(format!(
                "need at least three years, got {years:?}"
            )));
        }
        let n = years.len();
        Self::new(years[..n - 2].to_vec(), vec![years[n - 2]], vec![years[n - 1]])
    }

    /// Assigns windows by target year.
    ///
    /// Test windows predict a test year and validation windows a validation year.
    /// Training windows predict a training year; when the window is too long for
    /// any such window to exist, the validation windows are also used for
    /// training (with `T0 = 2` over four years, the single window predicting the
    /// validation year is both the training and validation window).
    pub fn partition(&self, samples: &[TemporalSample]) -> Result<WindowSplit, DataError> {
        let pick = |years: &[i32]| -> Vec<TemporalSample> {
            samples
                .iter()
                .filter(|s| years.contains(&s.target_year))
                .cloned()
                .collect()
        };
        let mut train = pick(&self.train_years);
        let val = pick(&self.val_years);
        let test = pick(&self.test_years);
        if train.is_empty() {
            train = val.clone();
        }
        if train.is_empty() {
            return Err(DataError::EmptyTrainingSet);
        }
        Ok(WindowSplit { train, val, test })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_series(years: &[i32], n: usize) -> SnapshotSeries {
        let features = years
            .iter()
            .map(|&y| Tensor::matrix(n, 2, (0..2 * n).map(|v| v as f64 + y as f64).collect()))
            .collect();
        let targets = years.iter().map(|_| vec![50.0; n]).collect();
        SnapshotSeries::new(
            (0..n).map(|i| format!("S{i}")).collect(),
            vec!["a".into(), "b".into()],
            years.to_vec(),
            features,
            targets,
        )
        .unwrap()
    }

    #[test]
    fn windows_t0_2_over_four_years() {
        let s = toy_series(&[2021, 2022, 2023, 2024], 3);
        let w = build_windows(&s, 2).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].input_years, vec![2021, 2022]);
        assert_eq!(w[0].target_year, 2023);
        assert_eq!(w[1].input_years, vec![2022, 2023]);
        assert_eq!(w[1].target_year, 2024);
    }

    #[test]
    fn windows_t0_1_gives_three() {
        let s = toy_series(&[2021, 2022, 2023, 2024], 3);
        assert_eq!(build_windows(&s, 1).unwrap().len(), 3);
    }

    #[test]
    fn window_longer_than_history_fails() {
        let s = toy_series(&[2021, 2022, 2023, 2024], 3);
        assert!(matches!(
            build_windows(&s, 4),
            Err(DataError::InsufficientHistory { .. })
        ));
        assert!(matches!(build_windows(&s, 0), Err(DataError::ZeroWindow)));
    }

    #[test]
    fn windows_reconstruct_snapshots() {
        let s = toy_series(&[2020, 2021, 2022, 2023, 2024], 4);
        let w = build_windows(&s, 2).unwrap();
        for sample in &w {
            for (x, y) in sample.inputs.iter().zip(&sample.input_years) {
                assert_eq!(x, s.features(*y).unwrap());
            }
        }
    }

    #[test]
    fn partition_default_split_reuses_validation_window() {
        let s = toy_series(&[2021, 2022, 2023, 2024], 3);
        let split = SplitSpec::chronological(s.years()).unwrap();
        assert_eq!(split.train_years, vec![2021, 2022]);
        let w = split.partition(&build_windows(&s, 2).unwrap()).unwrap();
        assert_eq!(w.train.len(), 1);
        assert_eq!(w.train[0].target_year, 2023);
        assert_eq!(w.val[0].target_year, 2023);
        assert_eq!(w.test[0].target_year, 2024);

        let w1 = split.partition(&build_windows(&s, 1).unwrap()).unwrap();
        assert_eq!(w1.train[0].target_year, 2022);
        assert_eq!(w1.val[0].target_year, 2023);
        assert_eq!(w1.test[0].target_year, 2024);
    }

    #[test]
    fn split_must_be_chronological() {
        assert!(SplitSpec::new(vec![2023], vec![2022], vec![2024]).is_err());
        assert!(SplitSpec::new(vec![], vec![2022], vec![2024]).is_err());
    }

    #[test]
    fn drop_features_removes_columns() {
        let s = toy_series(&[2021, 2022], 2);
        let d = s.drop_features(&["a"]).unwrap();
        assert_eq!(d.feature_names(), &["b".to_string()]);
        assert_eq!(d.features(2021).unwrap().get(1, 0), s.features(2021).unwrap().get(1, 1));
        assert!(s.drop_features(&["zzz"]).is_err());
    }
}
