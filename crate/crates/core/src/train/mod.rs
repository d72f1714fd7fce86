//! Objective, optimizer, learning-rate schedule and the training loop.

mod adam;
mod schedule;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{adam_step, AdamState, WeightDecay};
pub use schedule::{EarlyStopping, PlateauCounter, PlateauScheduler};

use crate::autodiff::{AutodiffError, Graph, Tensor, Var};
use crate::data::{AttentionEdges, RoadGraph, TemporalSample};
use crate::model::{Forward, ForwardMode, ModelError, ModelParams, ModelVars};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty loss mask")]
    EmptyMask,
    #[error("no training samples")]
    NoTrainingSamples,
    #[error("no validation samples")]
    NoValidationSamples,
    #[error("non-finite {which} loss at epoch {epoch}")]
    NonFinite { epoch: usize, which: &'static str },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub weight_decay_mode: WeightDecay,
    pub max_epochs: usize,
    pub scheduler_factor: f64,
    pub scheduler_patience: usize,
    pub early_stop_patience: usize,
    /// Relative improvement below which an epoch counts as a plateau.
    pub plateau_threshold: f64,
    pub seed: u64,
    pub t0: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            weight_decay_mode: WeightDecay::L2,
            max_epochs: 200,
            scheduler_factor: 0.5,
            scheduler_patience: 8,
            early_stop_patience: 25,
            plateau_threshold: 1e-4,
            seed: 0,
            t0: 2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_owned()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        if !(self.scheduler_factor > 0.0 && self.scheduler_factor < 1.0) {
            return bad("scheduler_factor must lie in (0, 1)");
        }
        if self.scheduler_patience == 0 || self.early_stop_patience == 0 {
            return bad("patience values must be at least 1");
        }
        if self.max_epochs == 0 || self.t0 == 0 {
            return bad("max_epochs and t0 must be positive");
        }
        if !(self.plateau_threshold >= 0.0) {
            return bad("plateau_threshold must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub learning_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop_reason: StopReason,
}

impl TrainReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// `(1/|mask|) * sum over mask of (pred - target)^2`.
pub fn masked_mse(pred: &[f64], target: &[f64], mask: &[usize]) -> Result<f64, TrainError> {
    if mask.is_empty() {
        return Err(TrainError::EmptyMask);
    }
    if pred.len() != target.len() {
        return Err(TrainError::ShapeMismatch(format!(
            "{} predictions vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    let mut acc = 0.0;
    for &i in mask {
        let d = pred.get(i).ok_or_else(|| {
            TrainError::ShapeMismatch(format!("mask index {i} outside {} nodes", pred.len()))
        })? - target[i];
        acc += d * d;
    }
    Ok(acc / mask.len() as f64)
}

/// Tape version of [`masked_mse`] for an `N x 1` prediction node.
pub fn masked_mse_var(
    g: &mut Graph,
    pred: Var,
    target: &[f64],
    mask: &[usize],
) -> Result<Var, TrainError> {
    if mask.is_empty() {
        return Err(TrainError::EmptyMask);
    }
    let n = g.shape(pred)[0];
    if n != target.len() || mask.iter().any(|&i| i >= n) {
        return Err(TrainError::ShapeMismatch(format!(
            "{n} predictions, {} targets, mask of {}",
            target.len(),
            mask.len()
        )));
    }
    let picked = g.gather_rows(pred, &mask.iter().copied().collect())?;
    let y = g.constant(Tensor::column(mask.iter().map(|&i| target[i]).collect()))?;
    let d = g.sub(picked, y)?;
    let sq = g.square(d)?;
    Ok(g.mean(sq)?)
}

/// Something the epoch loop can optimize and evaluate.
pub trait Trainable {
    type Snapshot;

    /// Runs one epoch at `lr` and returns its mean training loss.
    fn train_epoch(&mut self, lr: f64) -> Result<f64, TrainError>;
    fn validation_loss(&mut self) -> Result<f64, TrainError>;
    fn snapshot(&self) -> Self::Snapshot;
}

/// Epoch loop with plateau scheduling, early stopping and best-validation checkpointing.
pub fn run_epochs<T: Trainable>(
    model: &mut T,
    config: &TrainConfig,
) -> Result<(T::Snapshot, TrainReport), TrainError> {
    config.validate()?;
    let mut scheduler = PlateauScheduler::new(
        config.scheduler_patience,
        config.scheduler_factor,
        config.plateau_threshold,
    );
    let mut stopper = EarlyStopping::new(config.early_stop_patience, config.plateau_threshold);
    let mut lr = config.learning_rate;
    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, T::Snapshot)> = None;
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=config.max_epochs {
        let train_loss = model.train_epoch(lr)?;
        if !train_loss.is_finite() {
            return Err(TrainError::NonFinite { epoch, which: "training" });
        }
        let val_loss = model.validation_loss()?;
        if !val_loss.is_finite() {
            return Err(TrainError::NonFinite { epoch, which: "validation" });
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            learning_rate: lr,
        });
        log::debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6} lr {lr:e}");
        if best.as_ref().is_none_or(|b| val_loss < b.1) {
            best = Some((epoch, val_loss, model.snapshot()));
        }
        if stopper.should_stop(val_loss) {
            stop_reason = StopReason::EarlyStop;
            break;
        }
        lr = scheduler.step(val_loss, lr);
    }

    let (best_epoch, best_val_loss, snapshot) = best.expect("at least one epoch ran");
    Ok((
        snapshot,
        TrainReport {
            epochs,
            best_epoch,
            best_val_loss,
            stop_reason,
        },
    ))
}

/// Full-batch trainer over standardized windows: one Adam step per training
/// window per epoch, windows visited in chronological order.
pub struct GraphTrainer<'a> {
    params: ModelParams,
    adam: AdamState,
    edges: AttentionEdges,
    train: &'a [TemporalSample],
    val: &'a [TemporalSample],
    config: TrainConfig,
    rng: ChaCha8Rng,
    train_mask: Vec<usize>,
}

impl<'a> GraphTrainer<'a> {
    pub fn new(
        params: ModelParams,
        graph: &RoadGraph,
        train: &'a [TemporalSample],
        val: &'a [TemporalSample],
        config: TrainConfig,
    ) -> Result<Self, TrainError> {
        if train.is_empty() {
            return Err(TrainError::NoTrainingSamples);
        }
        if val.is_empty() {
            return Err(TrainError::NoValidationSamples);
        }
        if let Some(s) = train.iter().chain(val).find(|s| s.num_nodes() != graph.num_nodes()) {
            return Err(TrainError::ShapeMismatch(format!(
                "sample has {} nodes, graph has {}",
                s.num_nodes(),
                graph.num_nodes()
            )));
        }
        let adam = AdamState::new(params.named_tensors().into_iter().map(|(_, t)| t));
        let edges = graph.attention_edges(params.config.self_loops);
        Ok(Self {
            params,
            adam,
            edges,
            train,
            val,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            train_mask: (0..graph.num_nodes()).collect(),
        })
    }

    /// Restricts the training loss to a subset of nodes.
    pub fn with_train_mask(mut self, mask: Vec<usize>) -> Self {
        self.train_mask = mask;
        self
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Loss and parameter gradients for one window.
    pub fn loss_and_gradients(
        &mut self,
        sample: &TemporalSample,
    ) -> Result<(f64, Vec<Tensor>), TrainError> {
        let mut g = Graph::new();
        let vars = ModelVars::bind(&mut g, &self.params, true)?;
        let inputs = sample
            .inputs
            .iter()
            .map(|x| g.constant(x.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let out = Forward::new(&self.params, &self.edges).run(
            &mut g,
            &vars,
            &inputs,
            ForwardMode::Train(&mut self.rng),
        )?;
        let loss = masked_mse_var(&mut g, out, &sample.target, &self.train_mask)?;
        let value = g.value(loss).item();
        let grads = g.backward(loss)?;
        Ok((value, vars.all().iter().map(|&v| grads.wrt(v)).collect()))
    }

    fn eval_loss(&self, sample: &TemporalSample) -> Result<f64, TrainError> {
        let mut g = Graph::new();
        let vars = ModelVars::bind(&mut g, &self.params, false)?;
        let inputs = sample
            .inputs
            .iter()
            .map(|x| g.constant(x.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let out = Forward::new(&self.params, &self.edges).run(&mut g, &vars, &inputs, ForwardMode::Eval)?;
        let all: Vec<usize> = (0..sample.num_nodes()).collect();
        masked_mse(g.value(out).data(), &sample.target, &all)
    }
}

impl Trainable for GraphTrainer<'_> {
    type Snapshot = ModelParams;

    fn train_epoch(&mut self, lr: f64) -> Result<f64, TrainError> {
        let mut total = 0.0;
        for sample in self.train {
            let (loss, grads) = self.loss_and_gradients(sample)?;
            total += loss;
            if !loss.is_finite() {
                break;
            }
            let mut tensors = self.params.tensors_mut();
            adam_step(
                &mut tensors,
                &grads,
                &mut self.adam,
                lr,
                self.config.weight_decay,
                self.config.weight_decay_mode,
            )?;
        }
        Ok(total / self.train.len() as f64)
    }

    fn validation_loss(&mut self) -> Result<f64, TrainError> {
        let mut total = 0.0;
        for sample in self.val {
            total += self.eval_loss(sample)?;
        }
        Ok(total / self.val.len() as f64)
    }

    fn snapshot(&self) -> ModelParams {
        self.params.clone()
    }
}

/// Trains `init` on standardized windows and returns the best-validation parameters.
pub fn train(
    init: ModelParams,
    train: &[TemporalSample],
    val: &[TemporalSample],
    graph: &RoadGraph,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainReport), TrainError> {
    config.validate()?;
    let mut trainer = GraphTrainer::new(init, graph, train, val, config.clone())?;
    run_epochs(&mut trainer, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_mse_examples() {
        assert_eq!(masked_mse(&[1.0, 2.0], &[1.0, 2.0], &[0, 1]).unwrap(), 0.0);
        assert_eq!(masked_mse(&[2.0, 0.0, 9.0], &[1.0, 1.0, 0.0], &[0, 1]).unwrap(), 1.0);
        assert!(matches!(masked_mse(&[1.0], &[1.0], &[]), Err(TrainError::EmptyMask)));
    }

    #[test]
    fn masked_mse_var_matches_plain() {
        let mut g = Graph::new();
        let p = g.param(Tensor::column(vec![0.5, 2.0, -1.0])).unwrap();
        let target = [1.0, 1.0, 1.0];
        let l = masked_mse_var(&mut g, p, &target, &[0, 2]).unwrap();
        assert!((g.value(l).item() - masked_mse(&[0.5, 2.0, -1.0], &target, &[0, 2]).unwrap()).abs() < 1e-15);
        let grads = g.backward(l).unwrap();
        // d/dp_i = 2 (p_i - y_i) / |mask| on masked rows, zero elsewhere
        assert_eq!(grads.wrt(p).data(), &[-0.5, 0.0, -2.0]);
    }

    /// Replays scripted validation losses.
    struct Scripted {
        val: Vec<f64>,
        epoch: usize,
        lrs: Vec<f64>,
    }

    impl Trainable for Scripted {
        type Snapshot = usize;

        fn train_epoch(&mut self, lr: f64) -> Result<f64, TrainError> {
            self.lrs.push(lr);
            self.epoch += 1;
            Ok(1.0)
        }

        fn validation_loss(&mut self) -> Result<f64, TrainError> {
            Ok(self.val[(self.epoch - 1).min(self.val.len() - 1)])
        }

        fn snapshot(&self) -> usize {
            self.epoch
        }
    }

    fn scripted(val: Vec<f64>) -> Scripted {
        Scripted { val, epoch: 0, lrs: Vec::new() }
    }

    #[test]
    fn lr_halves_after_eight_flat_epochs() {
        let mut s = scripted(vec![1.0]);
        let cfg = TrainConfig { max_epochs: 40, early_stop_patience: 100, ..Default::default() };
        let (_, report) = run_epochs(&mut s, &cfg).unwrap();
        let lr: Vec<f64> = report.epochs.iter().map(|e| e.learning_rate).collect();
        // epoch 1 sets the best, epochs 2..=9 are flat, epoch 10 runs at half rate
        assert!(lr[..9].iter().all(|&v| v == 1e-3));
        assert!(lr[9..17].iter().all(|&v| v == 5e-4));
        assert_eq!(lr[17], 2.5e-4);
    }

    #[test]
    fn early_stop_twenty_five_after_best() {
        let mut val: Vec<f64> = (0..7).map(|k| 10.0 - k as f64).collect();
        val.push(3.0);
        let mut s = scripted(val);
        let (best, report) = run_epochs(&mut s, &TrainConfig::default()).unwrap();
        // best at epoch 8 (value 3.0)
        assert_eq!(report.best_epoch, 8);
        assert_eq!(best, 8);
        assert_eq!(report.stop_reason, StopReason::EarlyStop);
        assert_eq!(report.epochs.len(), 8 + 25);
    }

    #[test]
    fn best_snapshot_is_argmin() {
        let mut s = scripted(vec![5.0, 2.0, 3.0, 1.5, 4.0, 1.5, 6.0]);
        let cfg = TrainConfig { max_epochs: 7, ..Default::default() };
        let (best, report) = run_epochs(&mut s, &cfg).unwrap();
        assert_eq!(best, 4);
        assert_eq!(report.best_val_loss, 1.5);
        assert_eq!(report.stop_reason, StopReason::MaxEpochs);
        let min = report.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(report.best_val_loss, min);
    }

    #[test]
    fn non_finite_validation_aborts() {
        let mut s = scripted(vec![1.0, f64::NAN]);
        let err = run_epochs(&mut s, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, TrainError::NonFinite { epoch: 2, .. }));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { scheduler_patience: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
