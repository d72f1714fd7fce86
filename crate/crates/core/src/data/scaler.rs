use serde::{Deserialize, Serialize};

use super::{DataError, SnapshotSeries, TemporalSample};
use crate::autodiff::Tensor;

/// Per-column z-scoring fitted on training years only.
///
/// Uses the population standard deviation. Columns with zero variance keep a
/// scale of 1.0 so they map to all zeros instead of dividing by zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 0.0 { std } else { 1.0 })
}

impl Standardizer {
    pub fn fit(series: &SnapshotSeries, train_years: &[i32]) -> Result<Self, DataError> {
        if train_years.is_empty() {
            return Err(DataError::EmptyTrainingSet);
        }
        let mut mats = Vec::new();
        let mut targets = Vec::new();
        for &y in train_years {
            mats.push(series.features(y).ok_or(DataError::UnknownYear(y))?);
            targets.extend_from_slice(series.targets(y).ok_or(DataError::UnknownYear(y))?);
        }
        let f = series.num_features();
        let (mut feature_means, mut feature_stds) = (Vec::with_capacity(f), Vec::with_capacity(f));
        for c in 0..f {
            let col = mats
                .iter()
                .flat_map(|m| (0..m.rows()).map(move |r| m.get(r, c)));
            let (m, s) = mean_std(col);
            feature_means.push(m);
            feature_stds.push(s);
        }
        let (target_mean, target_std) = mean_std(targets.iter().copied());
        Ok(Self {
            feature_means,
            feature_stds,
            target_mean,
            target_std,
        })
    }

    pub fn num_features(&self) -> usize {
        self.feature_means.len()
    }

    fn check(&self, x: &Tensor) -> Result<(), DataError> {
        if x.cols() != self.num_features() {
            return Err(DataError::DimensionMismatch {
                expected: self.num_features(),
                got: x.cols(),
            });
        }
        Ok(())
    }

    pub fn transform(&self, x: &Tensor) -> Result<Tensor, DataError> {
        self.check(x)?;
        let f = self.num_features();
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let c = i % f;
            *v = (*v - self.feature_means[c]) / self.feature_stds[c];
        }
        Ok(out)
    }

    pub fn inverse_transform(&self, x: &Tensor) -> Result<Tensor, DataError> {
        self.check(x)?;
        let f = self.num_features();
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let c = i % f;
            *v = *v * self.feature_stds[c] + self.feature_means[c];
        }
        Ok(out)
    }

    pub fn transform_target(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .map(|v| (v - self.target_mean) / self.target_std)
            .collect()
    }

    pub fn inverse_target(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .map(|v| v * self.target_std + self.target_mean)
            .collect()
    }

    /// Standardizes every time slice and the target of a sample.
    pub fn apply(&self, sample: &TemporalSample) -> Result<TemporalSample, DataError> {
        Ok(TemporalSample {
            inputs: sample
                .inputs
                .iter()
                .map(|x| self.transform(x))
                .collect::<Result<_, _>>()?,
            target: self.transform_target(&sample.target),
            input_years: sample.input_years.clone(),
            target_year: sample.target_year,
        })
    }
}
