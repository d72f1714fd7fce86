#![allow(dead_code)]

use pavegraph::autodiff::{Graph, Tensor};
use pavegraph::data::{RoadGraph, TemporalSample};
use pavegraph::metrics::regression_report;
use pavegraph::model::{predict, Forward, ForwardMode, ModelConfig, ModelParams, ModelVars, Variant};
use pavegraph::synth::lattice_graph;
use pavegraph::train::{train, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn node_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i:04}")).collect()
}

/// Erdos-Renyi graph over `n` nodes with edge probability `p`.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> RoadGraph {
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < p {
                pairs.push((a, b));
            }
        }
    }
    RoadGraph::from_index_edges(node_ids(n), pairs).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-1.5..1.5))
            .collect(),
    )
}

pub fn random_sample(rng: &mut ChaCha8Rng, n: usize, f: usize, t0: usize) -> TemporalSample {
    TemporalSample {
        inputs: (0..t0).map(|_| random_matrix(rng, n, f)).collect(),
        target: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        input_years: (0..t0 as i32).map(|y| 2020 + y).collect(),
        target_year: 2020 + t0 as i32,
    }
}

pub fn small_config(f: usize, t0: usize) -> ModelConfig {
    let mut c = ModelConfig::new(f, t0);
    c.heads = 2;
    c.d_head = 3;
    c.gru_hidden = 4;
    c.head_hidden = 5;
    c
}

pub fn small_params(variant: Variant, f: usize, t0: usize, seed: u64) -> ModelParams {
    ModelParams::init(small_config(f, t0), variant, seed).unwrap()
}

/// Mean squared error of the model on `sample` computed on a fresh tape.
pub fn loss_value(params: &ModelParams, graph: &RoadGraph, sample: &TemporalSample) -> f64 {
    let edges = graph.attention_edges(params.config.self_loops);
    let mut g = Graph::new();
    let vars = ModelVars::bind(&mut g, params, false).unwrap();
    let inputs: Vec<_> = sample
        .inputs
        .iter()
        .map(|x| g.constant(x.clone()).unwrap())
        .collect();
    let out = Forward::new(params, &edges)
        .run(&mut g, &vars, &inputs, ForwardMode::Eval)
        .unwrap();
    let y = g.constant(Tensor::column(sample.target.clone())).unwrap();
    let d = g.sub(out, y).unwrap();
    let sq = g.square(d).unwrap();
    let m = g.mean(sq).unwrap();
    g.value(m).item()
}

/// Tape gradients of the same loss, one tensor per parameter in `named_tensors` order.
pub fn loss_gradients(
    params: &ModelParams,
    graph: &RoadGraph,
    sample: &TemporalSample,
) -> Vec<Tensor> {
    let edges = graph.attention_edges(params.config.self_loops);
    let mut g = Graph::new();
    let vars = ModelVars::bind(&mut g, params, true).unwrap();
    let inputs: Vec<_> = sample
        .inputs
        .iter()
        .map(|x| g.constant(x.clone()).unwrap())
        .collect();
    let out = Forward::new(params, &edges)
        .run(&mut g, &vars, &inputs, ForwardMode::Eval)
        .unwrap();
    let y = g.constant(Tensor::column(sample.target.clone())).unwrap();
    let d = g.sub(out, y).unwrap();
    let sq = g.square(d).unwrap();
    let m = g.mean(sq).unwrap();
    let grads = g.backward(m).unwrap();
    vars.all().iter().map(|&v| grads.wrt(v)).collect()
}

/// Largest violation of `|a - n| <= 1e-3 * max(|a|, |n|) + 1e-7` over all parameters.
pub fn gradient_check(
    params: &ModelParams,
    graph: &RoadGraph,
    sample: &TemporalSample,
) -> Result<(), String> {
    let analytic = loss_gradients(params, graph, sample);
    let h = 1e-5;
    let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
    for (k, grad) in analytic.iter().enumerate() {
        for i in 0..grad.len() {
            let mut plus = params.clone();
            plus.tensors_mut()[k].data_mut()[i] += h;
            let mut minus = params.clone();
            minus.tensors_mut()[k].data_mut()[i] -= h;
            let numeric =
                (loss_value(&plus, graph, sample) - loss_value(&minus, graph, sample)) / (2.0 * h);
            let a = grad.data()[i];
            if (a - numeric).abs() > 1e-3 * a.abs().max(numeric.abs()) + 1e-7 {
                return Err(format!(
                    "{}[{i}]: analytic {a} vs numeric {numeric}",
                    names[k]
                ));
            }
        }
    }
    Ok(())
}

/// Applies `perm` (old index -> new index) to the graph and the node rows of a sample.
pub fn permute(
    graph: &RoadGraph,
    sample: &TemporalSample,
    perm: &[usize],
) -> (RoadGraph, TemporalSample) {
    let pairs: Vec<(usize, usize)> = graph
        .edges()
        .iter()
        .map(|&(a, b)| (perm[a], perm[b]))
        .collect();
    let g = RoadGraph::from_index_edges(graph.node_ids().to_vec(), pairs).unwrap();
    let permute_rows = |t: &Tensor| {
        let mut out = Tensor::zeros(t.shape());
        for r in 0..t.rows() {
            for c in 0..t.cols() {
                out.set(perm[r], c, t.get(r, c));
            }
        }
        out
    };
    let mut target = vec![0.0; sample.target.len()];
    for (i, &y) in sample.target.iter().enumerate() {
        target[perm[i]] = y;
    }
    let s = TemporalSample {
        inputs: sample.inputs.iter().map(permute_rows).collect(),
        target,
        input_years: sample.input_years.clone(),
        target_year: sample.target_year,
    };
    (g, s)
}

pub const PLANTED_FEATURES: usize = 6;
pub const PLANTED_SIGNAL: usize = 3;

/// Windows whose target is `3 * x_3` (last input step) plus small noise.
pub fn planted_windows(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<TemporalSample> {
    let unit = Normal::new(0.0, 1.0).unwrap();
    let noise = Normal::new(0.0, 0.1).unwrap();
    (0..count)
        .map(|k| {
            let inputs: Vec<Tensor> = (0..2)
                .map(|_| {
                    Tensor::matrix(
                        n,
                        PLANTED_FEATURES,
                        (0..n * PLANTED_FEATURES)
                            .map(|_| unit.sample(rng))
                            .collect(),
                    )
                })
                .collect();
            let target = (0..n)
                .map(|i| 3.0 * inputs[1].get(i, PLANTED_SIGNAL) + noise.sample(rng))
                .collect();
            TemporalSample {
                inputs,
                target,
                input_years: vec![2000 + k as i32, 2001 + k as i32],
                target_year: 2002 + k as i32,
            }
        })
        .collect()
}

/// A small model of `variant` trained on a 100-node lattice where only
/// feature 3 drives the target.
pub struct Planted {
    pub params: ModelParams,
    pub graph: RoadGraph,
    pub test: TemporalSample,
    pub r2: f64,
}

pub fn planted_model(variant: Variant) -> Result<Planted, String> {
    let n = 100;
    let graph =
        lattice_graph(n, 2 * 99, &mut ChaCha8Rng::seed_from_u64(9)).map_err(|e| e.to_string())?;
    let mut r = rng(909);
    let train_w = planted_windows(&mut r, n, 6);
    let val_w = planted_windows(&mut r, n, 2);
    let test = planted_windows(&mut r, n, 1).remove(0);
    let mut c = ModelConfig::new(PLANTED_FEATURES, 2);
    c.heads = 2;
    c.d_head = 8;
    c.gru_hidden = 16;
    c.head_hidden = 16;
    let init = ModelParams::init(c, variant, 4).map_err(|e| e.to_string())?;
    let config = TrainConfig {
        learning_rate: 5e-3,
        max_epochs: 300,
        ..TrainConfig::default()
    };
    let (params, _) = train(init, &train_w, &val_w, &graph, &config).map_err(|e| e.to_string())?;
    let pred = predict(&params, &test, &graph).map_err(|e| e.to_string())?;
    let r2 = regression_report(&pred, &test.target)
        .map_err(|e| e.to_string())?
        .r2;
    Ok(Planted {
        params,
        graph,
        test,
        r2,
    })
}
