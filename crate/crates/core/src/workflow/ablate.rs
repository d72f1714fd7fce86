use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::Dataset;
use crate::model::Variant;
use crate::pipeline::score_variant;
use crate::{Error, Result};

/// Feature columns removed together in a feature-group ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    None,
    Structural,
    Traffic,
    Condition,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 4] = [
        FeatureGroup::None,
        FeatureGroup::Structural,
        FeatureGroup::Traffic,
        FeatureGroup::Condition,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureGroup::None => "none",
            FeatureGroup::Structural => "structural",
            FeatureGroup::Traffic => "traffic",
            FeatureGroup::Condition => "condition",
        }
    }

    /// Column names dropped by this group. The structural list includes the
    /// two condition columns, so the structural and condition drops overlap.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            FeatureGroup::None => &[],
            FeatureGroup::Structural => &[
                "material",
                "agg_type",
                "age_yrs",
                "ept_mm",
                "base_modulus",
                "crack_area_pct",
                "iri",
            ],
            FeatureGroup::Traffic => &["traffic_aadt", "truck_factor"],
            FeatureGroup::Condition => &["crack_area_pct", "iri"],
        }
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureGroup::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown feature group {s:?}")))
    }
}

/// Axes of the ablation grid with their admissible values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Axis {
    Variant,
    T0,
    Heads,
    /// Channels per attention head.
    GatHidden,
    GruHidden,
    Dropout,
    Lr,
    WeightDecay,
    Drop,
    Seed,
}

impl Axis {
    const ALL: [Axis; 10] = [
        Axis::Variant,
        Axis::T0,
        Axis::Heads,
        Axis::GatHidden,
        Axis::GruHidden,
        Axis::Dropout,
        Axis::Lr,
        Axis::WeightDecay,
        Axis::Drop,
        Axis::Seed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Axis::Variant => "variant",
            Axis::T0 => "t0",
            Axis::Heads => "heads",
            Axis::GatHidden => "gat_hidden",
            Axis::GruHidden => "gru_hidden",
            Axis::Dropout => "dropout",
            Axis::Lr => "lr",
            Axis::WeightDecay => "weight_decay",
            Axis::Drop => "drop",
            Axis::Seed => "seed",
        }
    }

    fn check(self, value: &str) -> Result<()> {
        let bad = |why: &str| Err(Error::Usage(format!("axis {}: value {value:?} {why}", self.name())));
        let in_set = |allowed: &[usize]| match value.parse::<usize>() {
            Ok(v) if allowed.contains(&v) => Ok(()),
            _ => bad(&format!("not in {allowed:?}")),
        };
        match self {
            Axis::Variant => value.parse::<Variant>().map(|_| ()).or_else(|_| bad("is not a variant")),
            Axis::T0 => in_set(&[1, 2]),
            Axis::Heads => in_set(&[1, 2, 4, 8]),
            Axis::GatHidden => in_set(&[32, 64, 128, 256]),
            Axis::GruHidden => in_set(&[32, 64, 128, 256, 512, 1024]),
            Axis::Dropout => match value.parse::<f64>() {
                Ok(v) if [0.0, 0.1, 0.2, 0.3].contains(&v) => Ok(()),
                _ => bad("not in [0, 0.1, 0.2, 0.3]"),
            },
            Axis::Lr => match value.parse::<f64>() {
                Ok(v) if v > 0.0 && v.is_finite() => Ok(()),
                _ => bad("must be a positive number"),
            },
            Axis::WeightDecay => match value.parse::<f64>() {
                Ok(v) if v >= 0.0 && v.is_finite() => Ok(()),
                _ => bad("must be a non-negative number"),
            },
            Axis::Drop => value.parse::<FeatureGroup>().map(|_| ()),
            Axis::Seed => value.parse::<u64>().map(|_| ()).or_else(|_| bad("is not an integer")),
        }
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown ablation axis {s:?}")))
    }
}

/// Axes and values whose Cartesian product forms the grid. Axes left out
/// keep the value from the run configuration.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GridSpec {
    axes: Vec<(Axis, Vec<String>)>,
}

impl GridSpec {
    /// Parses `axis = v1, v2, ...` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = GridSpec::default();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (axis, values) = line
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("grid line {}: expected `axis = values`", k + 1)))?;
            let values: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
            spec = spec.with_axis(axis.trim().parse()?, &values)?;
        }
        Ok(spec)
    }

    pub fn with_axis<S: AsRef<str>>(mut self, axis: Axis, values: &[S]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Usage(format!("axis {} has no values", axis.name())));
        }
        if self.axes.iter().any(|(a, _)| *a == axis) {
            return Err(Error::Usage(format!("axis {} given twice", axis.name())));
        }
        for v in values {
            axis.check(v.as_ref())?;
        }
        self.axes.push((axis, values.iter().map(|v| v.as_ref().to_owned()).collect()));
        Ok(self)
    }

    /// All five architecture variants.
    pub fn architectures() -> Self {
        let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
        Self::default().with_axis(Axis::Variant, &names).expect("valid preset")
    }

    /// The full model with each feature group removed in turn.
    pub fn feature_groups() -> Self {
        let names: Vec<&str> = FeatureGroup::ALL.iter().map(|g| g.name()).collect();
        Self::default().with_axis(Axis::Drop, &names).expect("valid preset")
    }

    pub fn num_cells(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    /// Every grid cell, the first axis varying slowest.
    pub fn cells(&self, base: &RunConfig) -> Result<Vec<GridCell>> {
        let mut cells = vec![GridCell::from_config(0, base)];
        for (axis, values) in &self.axes {
            let mut next = Vec::with_capacity(cells.len() * values.len());
            for cell in &cells {
                for v in values {
                    let mut c = cell.clone();
                    c.set(*axis, v)?;
                    next.push(c);
                }
            }
            cells = next;
        }
        for (i, c) in cells.iter_mut().enumerate() {
            c.index = i;
        }
        Ok(cells)
    }
}

/// One fully resolved grid configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub index: usize,
    pub variant: Variant,
    pub t0: usize,
    pub heads: usize,
    pub gat_hidden: usize,
    pub gru_hidden: usize,
    pub dropout: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub drop: FeatureGroup,
    pub seed: u64,
}

impl GridCell {
    fn from_config(index: usize, c: &RunConfig) -> Self {
        Self {
            index,
            variant: c.variant,
            t0: c.train.t0,
            heads: c.model.heads,
            gat_hidden: c.model.d_head,
            gru_hidden: c.model.gru_hidden,
            dropout: c.model.spatial_dropout,
            lr: c.train.learning_rate,
            weight_decay: c.train.weight_decay,
            drop: FeatureGroup::None,
            seed: c.train.seed,
        }
    }

    fn set(&mut self, axis: Axis, v: &str) -> Result<()> {
        let usage = |e: std::num::ParseIntError| Error::Usage(e.to_string());
        let usage_f = |e: std::num::ParseFloatError| Error::Usage(e.to_string());
        match axis {
            Axis::Variant => self.variant = v.parse()?,
            Axis::T0 => self.t0 = v.parse().map_err(usage)?,
            Axis::Heads => self.heads = v.parse().map_err(usage)?,
            Axis::GatHidden => self.gat_hidden = v.parse().map_err(usage)?,
            Axis::GruHidden => self.gru_hidden = v.parse().map_err(usage)?,
            Axis::Dropout => self.dropout = v.parse().map_err(usage_f)?,
            Axis::Lr => self.lr = v.parse().map_err(usage_f)?,
            Axis::WeightDecay => self.weight_decay = v.parse().map_err(usage_f)?,
            Axis::Drop => self.drop = v.parse()?,
            Axis::Seed => self.seed = v.parse().map_err(usage)?,
        }
        Ok(())
    }

    /// The base configuration with this cell's settings applied.
    pub fn apply(&self, base: &RunConfig) -> RunConfig {
        let mut c = base.clone();
        c.variant = self.variant;
        c.train.t0 = self.t0;
        c.model.t0 = self.t0;
        c.model.heads = self.heads;
        c.model.d_head = self.gat_hidden;
        c.model.gru_hidden = self.gru_hidden;
        c.model.spatial_dropout = self.dropout;
        c.model.head_dropout = self.dropout;
        c.train.learning_rate = self.lr;
        c.train.weight_decay = self.weight_decay;
        c.train.seed = self.seed;
        c
    }
}

/// Test metrics of one grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub cell: usize,
    pub variant: Variant,
    pub t0: usize,
    pub heads: usize,
    pub gat_hidden: usize,
    pub gru_hidden: usize,
    pub dropout: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropped: FeatureGroup,
    pub seed: u64,
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

fn run_cell(dataset: &Dataset, cell: &GridCell, base: &RunConfig) -> Result<AblationRow> {
    let config = cell.apply(base);
    let dataset = if cell.drop == FeatureGroup::None {
        dataset.clone()
    } else {
        Dataset {
            graph: dataset.graph.clone(),
            series: dataset.series.drop_features(cell.drop.columns())?,
        }
    };
    let score = score_variant(&dataset, cell.variant, &config.model, &config.train)?;
    Ok(AblationRow {
        cell: cell.index,
        variant: cell.variant,
        t0: cell.t0,
        heads: cell.heads,
        gat_hidden: cell.gat_hidden,
        gru_hidden: cell.gru_hidden,
        dropout: cell.dropout,
        lr: cell.lr,
        weight_decay: cell.weight_decay,
        dropped: cell.drop,
        seed: cell.seed,
        mse: score.test.mse,
        rmse: score.test.rmse,
        mae: score.test.mae,
        r2: score.test.r2,
        best_epoch: score.best_epoch,
        epochs_run: score.epochs_run,
    })
}

/// Trains and scores every cell, in parallel, returning rows in cell order.
pub fn run_grid(dataset: &Dataset, cells: &[GridCell], base: &RunConfig) -> Result<Vec<AblationRow>> {
    let mut rows = cells
        .par_iter()
        .map(|cell| run_cell(dataset, cell, base))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| r.cell);
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_expands_in_order() {
        let spec = GridSpec::parse("variant = full, mlp\n# note\nt0 = 1,2\nheads = 2").unwrap();
        assert_eq!(spec.num_cells(), 4);
        let cells = spec.cells(&RunConfig::default()).unwrap();
        let got: Vec<(Variant, usize, usize)> = cells.iter().map(|c| (c.variant, c.t0, c.heads)).collect();
        assert_eq!(
            got,
            vec![
                (Variant::Full, 1, 2),
                (Variant::Full, 2, 2),
                (Variant::Mlp, 1, 2),
                (Variant::Mlp, 2, 2)
            ]
        );
        assert_eq!(cells.iter().map(|c| c.index).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn rejects_unknown_axes_and_values() {
        assert!(GridSpec::parse("depth = 3").is_err());
        assert!(GridSpec::parse("heads = 3").is_err());
        assert!(GridSpec::parse("t0 = 3").is_err());
        assert!(GridSpec::parse("dropout = 0.5").is_err());
        assert!(GridSpec::parse("variant = gcn").is_err());
        assert!(GridSpec::parse("drop = weather").is_err());
        assert!(GridSpec::parse("lr = -1").is_err());
        assert!(GridSpec::parse("heads = 1\nheads = 2").is_err());
        assert!(GridSpec::parse("gru_hidden = 1024\ngat_hidden = 32\nweight_decay = 0").is_ok());
    }

    #[test]
    fn presets() {
        assert_eq!(GridSpec::architectures().num_cells(), 5);
        assert_eq!(GridSpec::feature_groups().num_cells(), 4);
        assert_eq!(FeatureGroup::Structural.columns().len(), 7);
        assert!(FeatureGroup::Structural.columns().contains(&"iri"));
    }

    #[test]
    fn cell_overrides_base_config() {
        let spec = GridSpec::parse("gat_hidden = 32\ndropout = 0.2\nseed = 9").unwrap();
        let base = RunConfig::default();
        let c = spec.cells(&base).unwrap().remove(0).apply(&base);
        assert_eq!(c.model.d_head, 32);
        assert_eq!(c.model.spatial_dropout, 0.2);
        assert_eq!(c.train.seed, 9);
        assert_eq!(c.model.heads, base.model.heads);
    }
}
