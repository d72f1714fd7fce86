//! Regression diagnostics for a trained model against a persistence
//! baseline (next year equals this year): error metrics, the REC curve and
//! Taylor diagram statistics.
//!
//! ```text
//! cargo run --release --example regression_diagnostics
//! ```

use pavegraph::metrics::{default_rec_grid, rec_curve, regression_report, taylor_stats};
use pavegraph::model::{ModelConfig, Variant};
use pavegraph::pipeline::{evaluate, fit, prepare};
use pavegraph::synth::{generate, SynthConfig};
use pavegraph::train::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dataset = generate(&SynthConfig { seed: 4, ..SynthConfig::with_segments(200) })?;
    let prepared = prepare(&dataset.series, 2, None)?;
    let mut model = ModelConfig::new(0, 2);
    model.heads = 4;
    model.d_head = 16;
    model.gru_hidden = 64;
    model.head_hidden = 64;
    let fitted = fit(&prepared, &dataset.graph, Variant::Full, &model, &TrainConfig::default())?;
    let eval = evaluate(&fitted, &prepared.raw.test, &dataset.graph)?;

    let last_input = prepared.raw.test[0].input_years.last().copied().expect("window has years");
    let persistence = dataset.series.targets(last_input).expect("input year present").to_vec();

    let candidates = [("model", &eval.predicted), ("persistence", &persistence)];
    println!("{:<12} {:>8} {:>8} {:>8} {:>8}", "", "MSE", "RMSE", "MAE", "R2");
    for (name, pred) in candidates {
        let r = regression_report(pred, &eval.actual)?;
        println!("{name:<12} {:>8.3} {:>8.3} {:>8.3} {:>8.4}", r.mse, r.rmse, r.mae, r.r2);
    }

    let grid = default_rec_grid();
    let curves = candidates
        .iter()
        .map(|(_, p)| rec_curve(p, &eval.actual, &grid))
        .collect::<Result<Vec<_>, _>>()?;
    println!("\nREC: share of segments within tolerance");
    println!("{:>9} {:>8} {:>12}", "tol (PCI)", "model", "persistence");
    for (i, tol) in grid.iter().enumerate().filter(|(i, _)| i % 5 == 0) {
        println!("{tol:>9.2} {:>8.3} {:>12.3}", curves[0].coverage[i], curves[1].coverage[i]);
    }

    println!("\nTaylor statistics");
    for (name, pred) in candidates {
        let t = taylor_stats(pred, &eval.actual)?;
        println!(
            "{name:<12} std {:.3} (reference {:.3}), correlation {:.4}, centered RMSE {:.3}",
            t.std_pred, t.std_ref, t.correlation, t.centered_rmse
        );
    }
    Ok(())
}
