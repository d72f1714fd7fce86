//! Explain a trained forecaster: global permutation importance over the
//! test year, then a feature and edge mask for the worst-rated segment.
//!
//! ```text
//! cargo run --release --example explain_predictions
//! ```

use pavegraph::explain::{explain_node, permutation_importance, ExplainConfig};
use pavegraph::model::{ModelConfig, Variant};
use pavegraph::pipeline::{fit, prepare};
use pavegraph::synth::{generate, SynthConfig};
use pavegraph::train::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dataset = generate(&SynthConfig { seed: 21, ..SynthConfig::with_segments(150) })?;
    let prepared = prepare(&dataset.series, 2, None)?;
    let mut model = ModelConfig::new(0, 2);
    model.heads = 4;
    model.d_head = 16;
    model.gru_hidden = 64;
    model.head_hidden = 64;
    let fitted = fit(&prepared, &dataset.graph, Variant::Full, &model, &TrainConfig::default())?;
    let test = &prepared.scaled.test[0];
    let graph = &dataset.graph;
    let names = dataset.series.feature_names().to_vec();

    let global = permutation_importance(&fitted.params, test, graph, &names, 0, 10)?;
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| global.normalized[b].total_cmp(&global.normalized[a]));
    println!("global importance (share of MSE increase when shuffled):");
    for &c in &order {
        let bar = "#".repeat((60.0 * global.normalized[c]).round() as usize);
        println!("  {:<16} {:>6.3}  {bar}", names[c], global.normalized[c]);
    }

    let raw_test = &prepared.raw.test[0];
    let node = (0..graph.num_nodes())
        .min_by(|&a, &b| raw_test.target[a].total_cmp(&raw_test.target[b]))
        .expect("non-empty graph");
    let masks = explain_node(&fitted.params, test, graph, node, &ExplainConfig::default())?;
    println!(
        "\nsegment {} (observed PCI {:.1}); mask objective {:.4} -> {:.4}",
        graph.node_ids()[node],
        raw_test.target[node],
        masks.trace[0],
        masks.objective
    );
    let scores = masks.feature_scores();
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    for &c in order.iter().take(5) {
        println!("  {:<16} mask {:.3}", names[c], masks.feature_mask[c]);
    }
    println!("edges at this segment:");
    for (e, &(a, b)) in graph.edges().iter().enumerate() {
        if a == node || b == node {
            let other = if a == node { b } else { a };
            println!("  -> {:<8} mask {:.3}", graph.node_ids()[other], masks.edge_mask[e]);
        }
    }
    Ok(())
}
