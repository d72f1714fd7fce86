//! The on-disk workflow behind the `pavegraph` binary: a config file drives
//! synth, train, eval, prioritize and explain, each writing a manifest with
//! SHA-256 digests of what it read and wrote.
//!
//! ```text
//! cargo run --release --example file_workflow [-- OUT_DIR]
//! ```

use std::path::PathBuf;

use pavegraph::config::RunConfig;
use pavegraph::workflow::{self, DataPaths, ExplainTarget, RunManifest, SplitRole};

const CONFIG: &str = "
seed = 11
synth.num_segments = 120
synth.target_arcs = 238
model.variant = full
model.heads = 2
model.d_head = 16
model.gru_hidden = 32
model.head_hidden = 32
train.epochs = 80
explain.repeats = 3
";

fn show(step: &str, m: &RunManifest) {
    println!("{step}:");
    for f in &m.outputs {
        println!("  {:<22} {:>8} bytes  sha256 {}", f.path, f.bytes, &f.sha256[..16]);
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("pavegraph_workflow"));
    let config = RunConfig::parse(CONFIG)?;
    println!("resolved configuration:\n{}", config.to_text());

    let data_dir = root.join("data");
    show("synth", &workflow::synth(&config, &data_dir)?);
    let data = DataPaths::in_dir(&data_dir);

    let model_dir = root.join("model");
    show("train", &workflow::train(&config, &data, &model_dir)?);
    let checkpoint = model_dir.join(workflow::CHECKPOINT_FILE);
    let report = workflow::read_train_report(&model_dir)?;
    println!("  best epoch {} of {}", report.best_epoch, report.epochs.len());

    show("eval", &workflow::eval(&config, &checkpoint, &data, SplitRole::Test, &root.join("eval"))?);
    println!("  {}", std::fs::read_to_string(root.join("eval/metrics.json"))?.lines().take(8).collect::<Vec<_>>().join("\n  "));
    show("prioritize", &workflow::prioritize(&config, &checkpoint, &data, None, 5, &root.join("priorities"))?);
    print!("{}", std::fs::read_to_string(root.join("priorities/top_k.csv"))?);
    show(
        "explain",
        &workflow::explain(&config, &checkpoint, &data, &ExplainTarget::Global, None, &root.join("explain"))?,
    );
    print!("{}", std::fs::read_to_string(root.join("explain/importance.csv"))?);

    let manifest = RunManifest::read(&model_dir)?;
    println!("\ntrain manifest records {} inputs and seed {}", manifest.inputs.len(), manifest.seed);
    println!("outputs under {}", root.display());
    Ok(())
}
