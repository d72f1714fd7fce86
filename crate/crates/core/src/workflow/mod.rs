//! File-based workflows behind the `pavegraph` command-line tool.
//!
//! Every command writes its outputs into one directory together with a
//! `manifest.json` listing the resolved configuration, SHA-256 digests of
//! inputs and outputs, the seed and the crate version.

mod ablate;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use ablate::{run_grid, AblationRow, Axis, FeatureGroup, GridCell, GridSpec};

use crate::config::RunConfig;
use crate::data::{build_windows, read_dataset, write_edges, write_observations, Dataset, SplitSpec, TemporalSample};
use crate::decision::{build_profile, safety_report, top_k_critical, SafetyReport};
use crate::explain::{explain_node, permutation_importance};
use crate::metrics::{default_rec_grid, rec_curve, taylor_stats, RegressionReport, TaylorStats};
use crate::model::Checkpoint;
use crate::pipeline::{evaluate_with, fit, predict_pci, prepare};
use crate::synth::generate;
use crate::train::TrainReport;
use crate::error::at;
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const OBSERVATIONS_FILE: &str = "observations.csv";
pub const EDGES_FILE: &str = "edges.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    fn of(path: &Path, label: String) -> Result<Self> {
        let data = fs::read(path).map_err(at(path))?;
        Ok(Self {
            path: label,
            sha256: hex::encode(Sha256::digest(&data)),
            bytes: data.len() as u64,
        })
    }
}

/// Record of one command invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    /// Command-specific options such as the variant or target year.
    pub options: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    /// Output files relative to the output directory.
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        Ok(serde_json::from_str(&fs::read_to_string(&path).map_err(at(&path))?)?)
    }
}

/// Input files of a dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataPaths {
    pub observations: PathBuf,
    pub edges: PathBuf,
}

impl DataPaths {
    /// The two files written by [`synth`] into `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            observations: dir.join(OBSERVATIONS_FILE),
            edges: dir.join(EDGES_FILE),
        }
    }

    fn load(&self) -> Result<Dataset> {
        Ok(read_dataset(&self.observations, &self.edges)?)
    }

    fn digests(&self) -> Result<Vec<FileDigest>> {
        Ok(vec![
            FileDigest::of(&self.observations, self.observations.display().to_string())?,
            FileDigest::of(&self.edges, self.edges.display().to_string())?,
        ])
    }
}

/// Collects output files and finishes with the manifest.
struct Run {
    dir: PathBuf,
    command: &'static str,
    config: RunConfig,
    options: BTreeMap<String, String>,
    inputs: Vec<FileDigest>,
    outputs: Vec<String>,
}

impl Run {
    fn start(command: &'static str, dir: &Path, config: &RunConfig) -> Result<Self> {
        fs::create_dir_all(dir).map_err(at(dir))?;
        Ok(Self {
            dir: dir.to_owned(),
            command,
            config: config.clone(),
            options: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    fn option(&mut self, key: &str, value: impl ToString) {
        self.options.insert(key.to_owned(), value.to_string());
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_owned());
        self.dir.join(name)
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, contents).map_err(at(&p))?;
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| Error::Usage(format!("writing {name}: {e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Usage(format!("writing {name}: {e}")))?;
        self.write(name, bytes)
    }

    fn finish(self) -> Result<RunManifest> {
        let outputs = self
            .outputs
            .iter()
            .map(|name| FileDigest::of(&self.dir.join(name), name.clone()))
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            command: self.command.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            seed: self.config.seed,
            config: self.config,
            options: self.options,
            inputs: self.inputs,
            outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, text).map_err(at(&path))?;
        Ok(manifest)
    }
}

fn load_checkpoint(path: &Path, dataset: &Dataset) -> Result<Checkpoint> {
    let ckpt = Checkpoint::read(path)?;
    if ckpt.feature_names != dataset.series.feature_names() {
        return Err(Error::Usage(format!(
            "checkpoint expects features {:?} but the data has {:?}",
            ckpt.feature_names,
            dataset.series.feature_names()
        )));
    }
    Ok(ckpt)
}

/// Generates a synthetic dataset into `out`.
pub fn synth(config: &RunConfig, out: &Path) -> Result<RunManifest> {
    let mut run = Run::start("synth", out, config)?;
    let dataset = generate(&config.synth)?;
    let mut obs = Vec::new();
    write_observations(&mut obs, &dataset.series.to_records())?;
    run.write(OBSERVATIONS_FILE, obs)?;
    let mut edges = Vec::new();
    write_edges(&mut edges, &dataset.graph)?;
    run.write(EDGES_FILE, edges)?;
    run.finish()
}

/// Trains `config.variant` and writes the checkpoint and training report.
pub fn train(config: &RunConfig, data: &DataPaths, out: &Path) -> Result<RunManifest> {
    let mut run = Run::start("train", out, config)?;
    run.inputs = data.digests()?;
    run.option("variant", config.variant);
    let dataset = data.load()?;
    let prepared = prepare(&dataset.series, config.train.t0, None)?;
    let fitted = fit(&prepared, &dataset.graph, config.variant, &config.model, &config.train)?;
    let ckpt = Checkpoint::new(
        fitted.params,
        fitted.standardizer,
        dataset.series.feature_names().to_vec(),
    );
    let text = ckpt.to_json()?;
    run.write(CHECKPOINT_FILE, text)?;
    run.write(TRAIN_REPORT_FILE, fitted.report.to_json())?;
    run.finish()
}

/// Which windows of the chronological split to score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRole {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for SplitRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitRole::Train),
            "val" => Ok(SplitRole::Val),
            "test" => Ok(SplitRole::Test),
            _ => Err(Error::Usage(format!("unknown split {s:?}; expected train, val or test"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub split: SplitRole,
    pub target_years: Vec<i32>,
    pub report: RegressionReport,
    pub taylor: TaylorStats,
}

#[derive(Serialize)]
struct PredictionRow<'a> {
    segment_id: &'a str,
    year: i32,
    predicted_pci: f64,
    actual_pci: f64,
}

#[derive(Serialize)]
struct RecRow {
    tolerance: f64,
    coverage: f64,
}

/// Scores a checkpoint on one split: metrics, predictions, REC curve and Taylor statistics.
pub fn eval(config: &RunConfig, checkpoint: &Path, data: &DataPaths, split: SplitRole, out: &Path) -> Result<RunManifest> {
    let mut run = Run::start("eval", out, config)?;
    run.inputs = data.digests()?;
    run.inputs.push(FileDigest::of(checkpoint, checkpoint.display().to_string())?);
    run.option("split", format!("{split:?}").to_lowercase());
    let dataset = data.load()?;
    let ckpt = load_checkpoint(checkpoint, &dataset)?;
    let windows = SplitSpec::chronological(dataset.series.years())?
        .partition(&build_windows(&dataset.series, ckpt.params.config.t0)?)?;
    let chosen = match split {
        SplitRole::Train => &windows.train,
        SplitRole::Val => &windows.val,
        SplitRole::Test => &windows.test,
    };
    if chosen.is_empty() {
        return Err(Error::Usage(format!("no {split:?} windows in the data")));
    }
    let eval = evaluate_with(&ckpt.params, &ckpt.standardizer, chosen, &dataset.graph)?;
    let taylor = taylor_stats(&eval.predicted, &eval.actual)?;
    let rec = rec_curve(&eval.predicted, &eval.actual, &default_rec_grid())?;

    let ids = dataset.graph.node_ids();
    let n = ids.len();
    let rows: Vec<PredictionRow> = eval
        .predicted
        .iter()
        .zip(&eval.actual)
        .enumerate()
        .map(|(k, (&p, &a))| PredictionRow {
            segment_id: &ids[k % n],
            year: eval.target_years[k / n],
            predicted_pci: p,
            actual_pci: a,
        })
        .collect();
    run.write_json(
        "metrics.json",
        &EvalSummary {
            split,
            target_years: eval.target_years.clone(),
            report: eval.report,
            taylor,
        },
    )?;
    run.write_csv("predictions.csv", &rows)?;
    let rec_rows: Vec<RecRow> = rec
        .tolerances
        .iter()
        .zip(&rec.coverage)
        .map(|(&tolerance, &coverage)| RecRow { tolerance, coverage })
        .collect();
    run.write_csv("rec_curve.csv", &rec_rows)?;
    run.finish()
}

/// Raw window whose target is `target_year`. A year one past the data is a
/// forecast: the window uses the last observed years and has no actuals.
fn window_for_year(dataset: &Dataset, t0: usize, target_year: i32) -> Result<(TemporalSample, bool)> {
    let series = &dataset.series;
    if let Some(w) = build_windows(series, t0)?.into_iter().find(|w| w.target_year == target_year) {
        return Ok((w, true));
    }
    let last = *series.years().last().expect("series has years");
    if target_year != last + 1 || series.num_years() < t0 {
        return Err(Error::Usage(format!(
            "cannot build a {t0}-year window predicting {target_year} from years {:?}",
            series.years()
        )));
    }
    let years: Vec<i32> = series.years()[series.num_years() - t0..].to_vec();
    let inputs = years
        .iter()
        .map(|&y| series.features(y).expect("year present").clone())
        .collect();
    Ok((
        TemporalSample {
            inputs,
            target: vec![0.0; series.num_nodes()],
            input_years: years,
            target_year,
        },
        false,
    ))
}

#[derive(Serialize)]
struct ProfileRow<'a> {
    priority_rank: usize,
    segment_id: &'a str,
    predicted_pci: f64,
    predicted_class: &'static str,
    actual_pci: Option<f64>,
    actual_class: Option<&'static str>,
    recommended_action: &'static str,
}

/// Maintenance profile for `target_year` ranked by predicted PCI, the `k`
/// most urgent segments and (when actuals exist) the safety report.
pub fn prioritize(
    config: &RunConfig,
    checkpoint: &Path,
    data: &DataPaths,
    target_year: Option<i32>,
    k: usize,
    out: &Path,
) -> Result<RunManifest> {
    let mut run = Run::start("prioritize", out, config)?;
    run.inputs = data.digests()?;
    run.inputs.push(FileDigest::of(checkpoint, checkpoint.display().to_string())?);
    let dataset = data.load()?;
    let ckpt = load_checkpoint(checkpoint, &dataset)?;
    let year = target_year.unwrap_or(*dataset.series.years().last().expect("series has years"));
    run.option("target_year", year);
    run.option("k", k);
    let (window, has_actuals) = window_for_year(&dataset, ckpt.params.config.t0, year)?;
    let predicted = predict_pci(&ckpt.params, &ckpt.standardizer, &window, &dataset.graph)?;
    let actual = has_actuals.then_some(window.target.as_slice());
    let profile = build_profile(&predicted, actual, dataset.graph.node_ids())?;
    let top = top_k_critical(&profile, k)?;

    let rows: Vec<ProfileRow> = profile
        .by_priority()
        .into_iter()
        .map(|r| ProfileRow {
            priority_rank: r.priority_rank,
            segment_id: &r.segment_id,
            predicted_pci: r.predicted_pci,
            predicted_class: r.predicted_class.label(),
            actual_pci: r.actual_pci,
            actual_class: r.actual_class.map(|c| c.label()),
            recommended_action: r.predicted_class.recommended_action(),
        })
        .collect();
    run.write_csv("profile.csv", &rows)?;
    run.write_csv("top_k.csv", &rows[..top.len()])?;
    if has_actuals {
        let report: SafetyReport = safety_report(&profile)?;
        run.write_json("safety.json", &report)?;
    }
    run.finish()
}

/// What to explain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExplainTarget {
    /// Permutation importance over all nodes.
    Global,
    /// Feature and edge masks for one segment id.
    Node(String),
}

#[derive(Serialize)]
struct ImportanceRow<'a> {
    feature: &'a str,
    raw: f64,
    normalized: f64,
}

#[derive(Serialize)]
struct FeatureMaskRow<'a> {
    feature: &'a str,
    mask: f64,
    score: f64,
}

#[derive(Serialize)]
struct EdgeMaskRow<'a> {
    src_segment_id: &'a str,
    dst_segment_id: &'a str,
    mask: f64,
}

#[derive(Serialize)]
struct NodeSummary<'a> {
    segment_id: &'a str,
    target_year: i32,
    objective: f64,
    trace: &'a [f64],
}

/// Global permutation importance or a per-node mask explanation of the
/// window predicting `target_year` (default: the last observed year).
pub fn explain(
    config: &RunConfig,
    checkpoint: &Path,
    data: &DataPaths,
    target: &ExplainTarget,
    target_year: Option<i32>,
    out: &Path,
) -> Result<RunManifest> {
    let mut run = Run::start("explain", out, config)?;
    run.inputs = data.digests()?;
    run.inputs.push(FileDigest::of(checkpoint, checkpoint.display().to_string())?);
    let dataset = data.load()?;
    let ckpt = load_checkpoint(checkpoint, &dataset)?;
    let year = target_year.unwrap_or(*dataset.series.years().last().expect("series has years"));
    run.option("target_year", year);
    let (window, has_actuals) = window_for_year(&dataset, ckpt.params.config.t0, year)?;
    let scaled = ckpt.standardizer.apply(&window)?;
    let names = dataset.series.feature_names();
    match target {
        ExplainTarget::Global => {
            run.option("mode", "global");
            if !has_actuals {
                return Err(Error::Usage("global importance needs observed targets".into()));
            }
            let imp = permutation_importance(
                &ckpt.params,
                &scaled,
                &dataset.graph,
                names,
                config.explain.seed,
                config.importance_repeats,
            )?;
            let mut rows: Vec<ImportanceRow> = (0..names.len())
                .map(|c| ImportanceRow {
                    feature: &names[c],
                    raw: imp.raw[c],
                    normalized: imp.normalized[c],
                })
                .collect();
            rows.sort_by(|a, b| b.normalized.total_cmp(&a.normalized).then(a.feature.cmp(b.feature)));
            run.write_csv("importance.csv", &rows)?;
        }
        ExplainTarget::Node(id) => {
            run.option("mode", "node");
            run.option("node", id);
            let node = dataset
                .graph
                .index_of(id)
                .ok_or_else(|| Error::Usage(format!("unknown segment {id:?}")))?;
            let masks = explain_node(&ckpt.params, &scaled, &dataset.graph, node, &config.explain)?;
            let scores = masks.feature_scores();
            let mut feature_rows: Vec<FeatureMaskRow> = (0..names.len())
                .map(|c| FeatureMaskRow {
                    feature: &names[c],
                    mask: masks.feature_mask[c],
                    score: scores[c],
                })
                .collect();
            let ids = dataset.graph.node_ids();
            feature_rows.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.feature.cmp(b.feature)));
            let mut edge_rows: Vec<EdgeMaskRow> = dataset
                .graph
                .edges()
                .iter()
                .zip(&masks.edge_mask)
                .map(|(&(a, b), &mask)| EdgeMaskRow {
                    src_segment_id: &ids[a],
                    dst_segment_id: &ids[b],
                    mask,
                })
                .collect();
            edge_rows.sort_by(|a, b| b.mask.total_cmp(&a.mask));
            run.write_csv("node_features.csv", &feature_rows)?;
            run.write_csv("node_edges.csv", &edge_rows)?;
            run.write_json(
                "node_summary.json",
                &NodeSummary {
                    segment_id: id,
                    target_year: year,
                    objective: masks.objective,
                    trace: &masks.trace,
                },
            )?;
        }
    }
    run.finish()
}

/// Trains and scores every cell of `grid` on the dataset.
pub fn ablate(config: &RunConfig, data: &DataPaths, grid: &GridSpec, out: &Path) -> Result<RunManifest> {
    let mut run = Run::start("ablate", out, config)?;
    run.inputs = data.digests()?;
    let dataset = data.load()?;
    let cells = grid.cells(config)?;
    run.option("cells", cells.len());
    let rows = run_grid(&dataset, &cells, config)?;
    run.write_csv("ablation.csv", &rows)?;
    run.finish()
}

/// Reads a training report written by [`train`].
pub fn read_train_report(dir: &Path) -> Result<TrainReport> {
    let path = dir.join(TRAIN_REPORT_FILE);
    Ok(serde_json::from_str(&fs::read_to_string(&path).map_err(at(&path))?)?)
}
