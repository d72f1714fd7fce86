//! Inspect the learned attention: for a few segments, how each head spreads
//! its weight over the segment itself and its road neighbours.
//!
//! ```text
//! cargo run --release --example attention_weights
//! ```

use pavegraph::model::{attention_coefficients, ModelConfig, Variant};
use pavegraph::pipeline::{fit, prepare};
use pavegraph::synth::{generate, SynthConfig};
use pavegraph::train::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dataset = generate(&SynthConfig { seed: 13, ..SynthConfig::with_segments(120) })?;
    let prepared = prepare(&dataset.series, 2, None)?;
    let mut model = ModelConfig::new(0, 2);
    model.heads = 4;
    model.d_head = 16;
    model.gru_hidden = 64;
    model.head_hidden = 64;
    let fitted = fit(&prepared, &dataset.graph, Variant::Full, &model, &TrainConfig::default())?;
    let gat = fitted.params.gat.as_ref().expect("full model has a GAT layer");

    let graph = &dataset.graph;
    let edges = graph.attention_edges(fitted.params.config.self_loops);
    let x = prepared.scaled.test[0].inputs.last().expect("window is non-empty");
    let alpha = attention_coefficients(gat, x, &edges)?;

    let mut busiest: Vec<usize> = (0..graph.num_nodes()).collect();
    busiest.sort_by_key(|&i| std::cmp::Reverse(graph.neighbors(i).len()));
    for &node in busiest.iter().take(3) {
        println!("segment {} ({} neighbours)", graph.node_ids()[node], graph.neighbors(node).len());
        for arc in (0..edges.len()).filter(|&a| edges.targets[a] == node) {
            let src = edges.sources[arc];
            let weights: Vec<String> = alpha.iter().map(|h| format!("{:.3}", h.data()[arc])).collect();
            let who = if src == node { "self".to_owned() } else { graph.node_ids()[src].clone() };
            println!("  from {who:<8} heads [{}]", weights.join(", "));
        }
    }
    Ok(())
}
