use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::importance::normalize;
use super::ExplainError;
use crate::autodiff::{Graph, Tensor, Var};
use crate::data::{AttentionEdges, RoadGraph, TemporalSample};
use crate::model::{Forward, ForwardMode, ModelParams, ModelVars};
use crate::train::{adam_step, AdamState, WeightDecay};

const ENTROPY_CLAMP: f64 = 1e-6;

/// Update rule for the mask logits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskOptimizer {
    /// Plain steps of `-learning_rate * gradient`.
    #[default]
    GradientDescent,
    Adam,
}

impl std::fmt::Display for MaskOptimizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::GradientDescent => "gd",
            Self::Adam => "adam",
        })
    }
}

impl std::str::FromStr for MaskOptimizer {
    type Err = ExplainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gd" => Ok(Self::GradientDescent),
            "adam" => Ok(Self::Adam),
            other => Err(ExplainError::InvalidConfig(format!(
                "unknown mask optimizer {other:?}; expected gd or adam"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplainConfig {
    /// Weight of the L1 norm of the feature mask.
    pub lambda_feature_l1: f64,
    /// Weight of the elementwise binary entropy of the feature mask.
    pub lambda_feature_entropy: f64,
    /// Weight of the L1 norm of the edge mask.
    pub lambda_edge_l1: f64,
    pub steps: usize,
    pub learning_rate: f64,
    pub optimizer: MaskOptimizer,
    /// Mask logits start uniform in `[-init_scale, init_scale]`. Keeping this
    /// below `lambda_feature_l1 / lambda_feature_entropy` lets the L1 term
    /// pull features without predictive effect toward zero.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            lambda_feature_l1: 0.005,
            lambda_feature_entropy: 0.1,
            lambda_edge_l1: 0.005,
            steps: 200,
            learning_rate: 0.01,
            optimizer: MaskOptimizer::default(),
            init_scale: 0.01,
            seed: 0,
        }
    }
}

impl ExplainConfig {
    pub fn validate(&self) -> Result<(), ExplainError> {
        let lambdas = [
            self.lambda_feature_l1,
            self.lambda_feature_entropy,
            self.lambda_edge_l1,
        ];
        if lambdas.iter().any(|l| !(*l >= 0.0)) {
            return Err(ExplainError::InvalidConfig("lambdas must be non-negative".into()));
        }
        if !(self.init_scale >= 0.0) || !self.init_scale.is_finite() {
            return Err(ExplainError::InvalidConfig("init_scale must be non-negative".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(ExplainError::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationMasks {
    pub node: usize,
    /// One entry in `[0, 1]` per input feature.
    pub feature_mask: Vec<f64>,
    /// One entry in `[0, 1]` per undirected edge, in graph edge order.
    pub edge_mask: Vec<f64>,
    /// Objective after the final update.
    pub objective: f64,
    /// Objective evaluated before each update.
    pub trace: Vec<f64>,
}

impl ExplanationMasks {
    /// Feature mask scaled to sum to one.
    pub fn feature_scores(&self) -> Vec<f64> {
        normalize(&self.feature_mask)
    }
}

/// Repeats a static `N x F` snapshot `t0` times to form a model window.
pub fn temporal_wrapper(x: &Tensor, t0: usize, f_in: usize) -> Result<Vec<Tensor>, ExplainError> {
    if x.shape().len() != 2 || x.cols() != f_in {
        return Err(ExplainError::FeatureMismatch {
            expected: f_in,
            got: x.shape().get(1).copied().unwrap_or(0),
        });
    }
    Ok(vec![x.clone(); t0])
}

struct Problem<'a> {
    params: &'a ModelParams,
    edges: &'a AttentionEdges,
    inputs: &'a [Tensor],
    node: usize,
    reference: f64,
    config: &'a ExplainConfig,
}

impl Problem<'_> {
    /// Objective and gradients with respect to the free mask parameters.
    fn evaluate(&self, theta_f: &Tensor, theta_e: &Tensor) -> Result<(f64, Tensor, Tensor), ExplainError> {
        let mut g = Graph::new();
        let vars = ModelVars::bind(&mut g, self.params, false)?;
        let inputs = self
            .inputs
            .iter()
            .map(|x| g.constant(x.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let tf = g.param(theta_f.clone())?;
        let te = g.param(theta_e.clone())?;
        let mf = g.sigmoid(tf)?;
        let me = g.sigmoid(te)?;
        let mut fwd = Forward::new(self.params, self.edges).with_feature_mask(mf);
        if theta_e.len() > 0 {
            fwd = fwd.with_edge_mask(me);
        }
        let out = fwd.run(&mut g, &vars, &inputs, ForwardMode::Eval)?;
        let y = g.slice(out, 0, self.node, 1)?;
        let d = g.add_scalar(y, -self.reference)?;
        let mut obj = g.square(d)?;
        let c = self.config;
        obj = add_weighted(&mut g, obj, mf, c.lambda_feature_l1)?;
        if c.lambda_feature_entropy > 0.0 {
            let h = entropy(&mut g, mf)?;
            let h = g.scale(h, c.lambda_feature_entropy)?;
            obj = g.add(obj, h)?;
        }
        if theta_e.len() > 0 {
            obj = add_weighted(&mut g, obj, me, c.lambda_edge_l1)?;
        }
        let value = g.value(obj).item();
        let grads = g.backward(obj)?;
        Ok((value, grads.wrt(tf), grads.wrt(te)))
    }
}

/// `obj + weight * sum(mask)`; masks are non-negative so the sum is their L1 norm.
fn add_weighted(g: &mut Graph, obj: Var, mask: Var, weight: f64) -> Result<Var, ExplainError> {
    if weight == 0.0 {
        return Ok(obj);
    }
    let s = g.sum(mask)?;
    let s = g.scale(s, weight)?;
    Ok(g.add(obj, s)?)
}

/// `-sum(m ln m + (1 - m) ln(1 - m))` with `m` clamped away from 0 and 1.
fn entropy(g: &mut Graph, mask: Var) -> Result<Var, ExplainError> {
    let m = g.clamp(mask, ENTROPY_CLAMP, 1.0 - ENTROPY_CLAMP)?;
    let one_minus = g.scale(m, -1.0)?;
    let one_minus = g.add_scalar(one_minus, 1.0)?;
    let lm = g.ln(m)?;
    let a = g.mul(m, lm)?;
    let lq = g.ln(one_minus)?;
    let b = g.mul(one_minus, lq)?;
    let s = g.add(a, b)?;
    let s = g.sum(s)?;
    Ok(g.scale(s, -1.0)?)
}

/// Optimizes a feature mask and an edge mask that preserve the model's
/// prediction for `node` on a standardized window.
pub fn explain_node(
    params: &ModelParams,
    sample: &TemporalSample,
    graph: &RoadGraph,
    node: usize,
    config: &ExplainConfig,
) -> Result<ExplanationMasks, ExplainError> {
    explain_inputs(params, &sample.inputs, graph, node, config)
}

/// Explains a single static snapshot by repeating it across the model window.
pub fn explain_node_static(
    params: &ModelParams,
    features: &Tensor,
    graph: &RoadGraph,
    node: usize,
    config: &ExplainConfig,
) -> Result<ExplanationMasks, ExplainError> {
    let inputs = temporal_wrapper(features, params.config.t0, params.config.f_in)?;
    explain_inputs(params, &inputs, graph, node, config)
}

fn explain_inputs(
    params: &ModelParams,
    inputs: &[Tensor],
    graph: &RoadGraph,
    node: usize,
    config: &ExplainConfig,
) -> Result<ExplanationMasks, ExplainError> {
    config.validate()?;
    let n = graph.num_nodes();
    if node >= n {
        return Err(ExplainError::InvalidNode { index: node, num_nodes: n });
    }
    if let Some(x) = inputs.iter().find(|x| x.rows() != n) {
        return Err(ExplainError::NodeMismatch { sample: x.rows(), graph: n });
    }
    let f = params.config.f_in;
    let edges = graph.attention_edges(params.config.self_loops);
    let reference = {
        let mut g = Graph::new();
        let vars = ModelVars::bind(&mut g, params, false)?;
        let xs = inputs
            .iter()
            .map(|x| g.constant(x.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let out = Forward::new(params, &edges).run(&mut g, &vars, &xs, ForwardMode::Eval)?;
        g.value(out).data()[node]
    };
    let problem = Problem {
        params,
        edges: &edges,
        inputs,
        node,
        reference,
        config,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let scale = config.init_scale;
    let mut init = |len: usize, rows: usize, cols: usize| {
        let data = (0..len)
            .map(|_| if scale > 0.0 { rng.random_range(-scale..scale) } else { 0.0 })
            .collect();
        Tensor::matrix(rows, cols, data)
    };
    let mut theta_f = init(f, 1, f);
    // Graphs without edges get an empty mask that the forward pass never sees.
    let m = graph.num_edges();
    let mut theta_e = if m > 0 { init(m, m, 1) } else { Tensor::zeros(&[0, 1]) };

    let mut adam = AdamState::new([&theta_f, &theta_e]);
    let mut trace = Vec::with_capacity(config.steps);
    for _ in 0..config.steps {
        let (value, gf, ge) = problem.evaluate(&theta_f, &theta_e)?;
        trace.push(value);
        match config.optimizer {
            MaskOptimizer::GradientDescent => {
                for (theta, grad) in [(&mut theta_f, &gf), (&mut theta_e, &ge)] {
                    for (t, g) in theta.data_mut().iter_mut().zip(grad.data()) {
                        *t -= config.learning_rate * g;
                    }
                }
            }
            MaskOptimizer::Adam => adam_step(
                &mut [&mut theta_f, &mut theta_e],
                &[gf, ge],
                &mut adam,
                config.learning_rate,
                0.0,
                WeightDecay::L2,
            )?,
        }
    }
    let (objective, _, _) = problem.evaluate(&theta_f, &theta_e)?;
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    Ok(ExplanationMasks {
        node,
        feature_mask: theta_f.data().iter().map(|&v| sig(v)).collect(),
        edge_mask: theta_e.data().iter().map(|&v| sig(v)).collect(),
        objective,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, Variant};

    fn params(f: usize, t0: usize) -> ModelParams {
        let mut c = ModelConfig::new(f, t0);
        c.heads = 2;
        c.d_head = 3;
        c.gru_hidden = 4;
        c.head_hidden = 4;
        ModelParams::init(c, Variant::Full, 11).unwrap()
    }

    fn features(n: usize, f: usize) -> Tensor {
        Tensor::matrix(n, f, (0..n * f).map(|i| (i as f64 * 0.7).cos()).collect())
    }

    #[test]
    fn wrapper_repeats_rows() {
        let x = Tensor::row(vec![1.0, 2.0]);
        let w = temporal_wrapper(&x, 2, 2).unwrap();
        assert_eq!(w, vec![x.clone(), x.clone()]);
        assert_eq!(temporal_wrapper(&x, 1, 2).unwrap()[0], x);
        assert!(temporal_wrapper(&x, 2, 3).is_err());
    }

    #[test]
    fn entropy_matches_closed_form() {
        let mut g = Graph::new();
        let m = g.constant(Tensor::row(vec![0.5, 0.2])).unwrap();
        let h = entropy(&mut g, m).unwrap();
        let hb = |p: f64| -(p * p.ln() + (1.0 - p) * (1.0 - p).ln());
        assert!((g.value(h).item() - (hb(0.5) + hb(0.2))).abs() < 1e-12);
    }

    #[test]
    fn unregularized_objective_vanishes() {
        let graph = RoadGraph::from_index_edges(
            (0..4).map(|i| format!("n{i}")).collect(),
            [(0, 1), (1, 2), (2, 3)],
        )
        .unwrap();
        let p = params(3, 2);
        let cfg = ExplainConfig {
            lambda_feature_l1: 0.0,
            lambda_feature_entropy: 0.0,
            lambda_edge_l1: 0.0,
            steps: 0,
            ..Default::default()
        };
        let start = explain_node_static(&p, &features(4, 3), &graph, 1, &cfg).unwrap();
        let cfg = ExplainConfig { steps: 300, learning_rate: 0.05, ..cfg };
        let end = explain_node_static(&p, &features(4, 3), &graph, 1, &cfg).unwrap();
        assert!(end.objective <= start.objective);
        assert!(end.objective < 1e-4);
    }

    #[test]
    fn isolated_node_leaves_other_edges_untouched() {
        // node 3 has no edges
        let graph = RoadGraph::from_index_edges(
            (0..4).map(|i| format!("n{i}")).collect(),
            [(0, 1), (1, 2)],
        )
        .unwrap();
        let p = params(3, 2);
        let cfg = ExplainConfig {
            lambda_feature_l1: 0.0,
            lambda_feature_entropy: 0.0,
            lambda_edge_l1: 0.0,
            steps: 0,
            ..Default::default()
        };
        let start = explain_node_static(&p, &features(4, 3), &graph, 3, &cfg).unwrap();
        let end = explain_node_static(&p, &features(4, 3), &graph, 3, &ExplainConfig { steps: 20, ..cfg }).unwrap();
        assert_eq!(start.edge_mask, end.edge_mask);
    }

    #[test]
    fn deterministic_and_bounded() {
        let graph = RoadGraph::from_index_edges(
            (0..5).map(|i| format!("n{i}")).collect(),
            [(0, 1), (1, 2), (2, 3), (3, 4)],
        )
        .unwrap();
        let p = params(3, 2);
        let cfg = ExplainConfig { steps: 30, seed: 4, ..Default::default() };
        let a = explain_node_static(&p, &features(5, 3), &graph, 2, &cfg).unwrap();
        let b = explain_node_static(&p, &features(5, 3), &graph, 2, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.feature_mask.iter().chain(&a.edge_mask).all(|m| (0.0..=1.0).contains(m)));
        assert_eq!(a.edge_mask.len(), 4);
        assert!(explain_node_static(&p, &features(5, 3), &graph, 9, &cfg).is_err());
    }

    #[test]
    fn optimizer_names_round_trip() {
        for o in [MaskOptimizer::GradientDescent, MaskOptimizer::Adam] {
            assert_eq!(o.to_string().parse::<MaskOptimizer>().unwrap(), o);
        }
        assert!("sgd".parse::<MaskOptimizer>().is_err());
    }

    #[test]
    fn both_optimizers_reduce_the_objective() {
        let graph = RoadGraph::from_index_edges(
            (0..4).map(|i| format!("n{i}")).collect(),
            [(0, 1), (1, 2), (2, 3)],
        )
        .unwrap();
        let p = params(3, 2);
        for optimizer in [MaskOptimizer::GradientDescent, MaskOptimizer::Adam] {
            let cfg = ExplainConfig { steps: 100, learning_rate: 0.05, optimizer, ..Default::default() };
            let m = explain_node_static(&p, &features(4, 3), &graph, 1, &cfg).unwrap();
            assert!(m.objective < m.trace[0], "{optimizer}");
        }
    }
}
