//! Train the residual graph attention forecaster on a synthetic network,
//! score it on the held-out year and round-trip the checkpoint.
//!
//! ```text
//! cargo run --release --example train_forecaster
//! ```

use pavegraph::model::{Checkpoint, ModelConfig, Variant};
use pavegraph::pipeline::{evaluate, fit, predict_pci, prepare};
use pavegraph::synth::{generate, SynthConfig};
use pavegraph::train::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dataset = generate(&SynthConfig { seed: 1, ..SynthConfig::with_segments(200) })?;
    let prepared = prepare(&dataset.series, 2, None)?;
    println!(
        "train years {:?}, val {:?}, test {:?}",
        prepared.split.train_years, prepared.split.val_years, prepared.split.test_years
    );

    let mut model = ModelConfig::new(0, 2);
    model.heads = 4;
    model.d_head = 16;
    model.gru_hidden = 64;
    model.head_hidden = 64;
    let train_config = TrainConfig { seed: 3, ..TrainConfig::default() };
    let fitted = fit(&prepared, &dataset.graph, Variant::Full, &model, &train_config)?;

    println!("\n{:>5} {:>11} {:>11} {:>9}", "epoch", "train mse", "val mse", "lr");
    for e in fitted.report.epochs.iter().filter(|e| e.epoch % 20 == 0) {
        println!("{:>5} {:>11.5} {:>11.5} {:>9.2e}", e.epoch, e.train_loss, e.val_loss, e.learning_rate);
    }
    println!(
        "stopped after {} epochs ({:?}); best epoch {}",
        fitted.report.epochs.len(),
        fitted.report.stop_reason,
        fitted.report.best_epoch
    );

    let eval = evaluate(&fitted, &prepared.raw.test, &dataset.graph)?;
    let r = eval.report;
    println!(
        "\ntest {:?}: MSE {:.3}  RMSE {:.3}  MAE {:.3}  R2 {:.4}",
        eval.target_years, r.mse, r.rmse, r.mae, r.r2
    );

    let path = std::env::temp_dir().join("pavegraph_example_checkpoint.json");
    Checkpoint::new(
        fitted.params.clone(),
        fitted.standardizer.clone(),
        dataset.series.feature_names().to_vec(),
    )
    .write(&path)?;
    let restored = Checkpoint::read(&path)?;
    let again = predict_pci(&restored.params, &restored.standardizer, &prepared.raw.test[0], &dataset.graph)?;
    let same = again.iter().zip(&eval.predicted).all(|(a, b)| a.to_bits() == b.to_bits());
    println!("checkpoint {} reproduces predictions bit for bit: {same}", path.display());
    Ok(())
}
