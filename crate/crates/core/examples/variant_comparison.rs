//! Compare the full model against its ablations (no residual branch, no
//! GRU, neither, no graph) over a few seeds on the same synthetic network.
//!
//! ```text
//! cargo run --release --example variant_comparison
//! ```

use std::time::Instant;

use pavegraph::model::{ModelConfig, Variant};
use pavegraph::pipeline::score_variant;
use pavegraph::synth::{generate, SynthConfig};
use pavegraph::train::TrainConfig;

const SEEDS: [u64; 3] = [0, 1, 2];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dataset = generate(&SynthConfig { seed: 5, ..SynthConfig::with_segments(200) })?;
    let mut model = ModelConfig::new(0, 2);
    model.heads = 4;
    model.d_head = 16;
    model.gru_hidden = 64;
    model.head_hidden = 64;

    println!("{:<8} {:>8} {:>8} {:>8} {:>9}", "variant", "R2 mean", "R2 min", "RMSE", "sec/run");
    for variant in Variant::ALL {
        let start = Instant::now();
        let scores = SEEDS
            .iter()
            .map(|&seed| score_variant(&dataset, variant, &model, &TrainConfig { seed, ..TrainConfig::default() }))
            .collect::<Result<Vec<_>, _>>()?;
        let n = scores.len() as f64;
        let r2: Vec<f64> = scores.iter().map(|s| s.test.r2).collect();
        println!(
            "{:<8} {:>8.4} {:>8.4} {:>8.3} {:>9.2}",
            variant.name(),
            r2.iter().sum::<f64>() / n,
            r2.iter().copied().fold(f64::INFINITY, f64::min),
            scores.iter().map(|s| s.test.rmse).sum::<f64>() / n,
            start.elapsed().as_secs_f64() / n
        );
    }
    Ok(())
}
