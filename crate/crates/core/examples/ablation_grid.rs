//! Run a small ablation grid: remove each feature group from the inputs and
//! retrain, over two seeds, then report the average effect on test error.
//!
//! ```text
//! cargo run --release --example ablation_grid
//! ```

use std::collections::BTreeMap;

use pavegraph::config::RunConfig;
use pavegraph::synth::{generate, SynthConfig};
use pavegraph::workflow::{run_grid, GridSpec};

const GRID: &str = "
# every feature group, including none, crossed with two seeds
drop = none, structural, traffic, condition
seed = 1, 2
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dataset = generate(&SynthConfig { seed: 17, ..SynthConfig::with_segments(150) })?;
    let mut base = RunConfig::default();
    base.model.heads = 2;
    base.model.d_head = 32;
    base.model.gru_hidden = 32;
    base.model.head_hidden = 32;
    base.train.max_epochs = 120;

    let spec = GridSpec::parse(GRID)?;
    let cells = spec.cells(&base)?;
    println!("{} cells", cells.len());
    let rows = run_grid(&dataset, &cells, &base)?;

    let mut by_group: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in &rows {
        println!("cell {:>2}  drop {:<10} seed {}  RMSE {:.3}  R2 {:.4}", r.cell, r.dropped.name(), r.seed, r.rmse, r.r2);
        by_group.entry(r.dropped.name()).or_default().push((r.rmse, r.r2));
    }
    println!("\n{:<10} {:>8} {:>8}", "dropped", "RMSE", "R2");
    for (group, v) in by_group {
        let n = v.len() as f64;
        println!(
            "{group:<10} {:>8.3} {:>8.4}",
            v.iter().map(|p| p.0).sum::<f64>() / n,
            v.iter().map(|p| p.1).sum::<f64>() / n
        );
    }
    Ok(())
}
