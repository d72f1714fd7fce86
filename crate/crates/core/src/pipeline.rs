//! In-memory fit / predict / evaluate helpers shared by the workflows,
//! examples and tests.

use serde::{Deserialize, Serialize};

use crate::data::{build_windows, Dataset, RoadGraph, SnapshotSeries, SplitSpec, Standardizer, TemporalSample, WindowSplit};
use crate::metrics::{regression_report, RegressionReport};
use crate::model::{predict, ModelConfig, ModelParams, Variant};
use crate::train::{train, TrainConfig, TrainReport};
use crate::Result;

/// Windows of a series split chronologically, in raw and standardized form.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub split: SplitSpec,
    pub standardizer: Standardizer,
    pub raw: WindowSplit,
    pub scaled: WindowSplit,
}

fn scale_all(s: &Standardizer, windows: &[TemporalSample]) -> Result<Vec<TemporalSample>> {
    Ok(windows.iter().map(|w| s.apply(w)).collect::<Result<_, _>>()?)
}

/// Builds `t0`-year windows, splits them by target year and fits the
/// standardizer on the training years.
pub fn prepare(series: &SnapshotSeries, t0: usize, split: Option<SplitSpec>) -> Result<PreparedData> {
    let split = match split {
        Some(s) => s,
        None => SplitSpec::chronological(series.years())?,
    };
    let raw = split.partition(&build_windows(series, t0)?)?;
    let standardizer = Standardizer::fit(series, &split.train_years)?;
    let scaled = WindowSplit {
        train: scale_all(&standardizer, &raw.train)?,
        val: scale_all(&standardizer, &raw.val)?,
        test: scale_all(&standardizer, &raw.test)?,
    };
    Ok(PreparedData {
        split,
        standardizer,
        raw,
        scaled,
    })
}

/// A trained model together with everything needed to use it on raw data.
#[derive(Clone, Debug)]
pub struct FittedModel {
    pub params: ModelParams,
    pub standardizer: Standardizer,
    pub report: TrainReport,
}

impl FittedModel {
    /// PCI predictions in original units for one raw window.
    pub fn predict_raw(&self, sample: &TemporalSample, graph: &RoadGraph) -> Result<Vec<f64>> {
        predict_pci(&self.params, &self.standardizer, sample, graph)
    }
}

/// Standardizes a raw window, runs the model and maps the output back to PCI units.
pub fn predict_pci(
    params: &ModelParams,
    standardizer: &Standardizer,
    sample: &TemporalSample,
    graph: &RoadGraph,
) -> Result<Vec<f64>> {
    let scaled = standardizer.apply(sample)?;
    Ok(standardizer.inverse_target(&predict(params, &scaled, graph)?))
}

/// Initializes `variant` with `model` dimensions (input width and window
/// taken from the data and `train.t0`) and trains it on `prepared`.
pub fn fit(
    prepared: &PreparedData,
    graph: &RoadGraph,
    variant: Variant,
    model: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<FittedModel> {
    let mut config = model.clone();
    config.f_in = prepared.standardizer.num_features();
    config.t0 = train_config.t0;
    let init = ModelParams::init(config, variant, train_config.seed)?;
    let (params, report) = train(init, &prepared.scaled.train, &prepared.scaled.val, graph, train_config)?;
    Ok(FittedModel {
        params,
        standardizer: prepared.standardizer.clone(),
        report,
    })
}

/// Test-set predictions in original units, all test windows concatenated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub target_years: Vec<i32>,
    pub predicted: Vec<f64>,
    pub actual: Vec<f64>,
    pub report: RegressionReport,
}

pub fn evaluate(fitted: &FittedModel, windows: &[TemporalSample], graph: &RoadGraph) -> Result<Evaluation> {
    evaluate_with(&fitted.params, &fitted.standardizer, windows, graph)
}

pub fn evaluate_with(
    params: &ModelParams,
    standardizer: &Standardizer,
    windows: &[TemporalSample],
    graph: &RoadGraph,
) -> Result<Evaluation> {
    let mut predicted = Vec::new();
    let mut actual = Vec::new();
    for w in windows {
        predicted.extend(predict_pci(params, standardizer, w, graph)?);
        actual.extend_from_slice(&w.target);
    }
    let report = regression_report(&predicted, &actual)?;
    Ok(Evaluation {
        target_years: windows.iter().map(|w| w.target_year).collect(),
        predicted,
        actual,
        report,
    })
}

/// One variant trained and scored on the test windows of `dataset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantScore {
    pub variant: Variant,
    pub seed: u64,
    pub test: RegressionReport,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

pub fn score_variant(
    dataset: &Dataset,
    variant: Variant,
    model: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<VariantScore> {
    let prepared = prepare(&dataset.series, train_config.t0, None)?;
    let fitted = fit(&prepared, &dataset.graph, variant, model, train_config)?;
    let eval = evaluate(&fitted, &prepared.raw.test, &dataset.graph)?;
    Ok(VariantScore {
        variant,
        seed: train_config.seed,
        test: eval.report,
        best_epoch: fitted.report.best_epoch,
        epochs_run: fitted.report.epochs.len(),
    })
}
