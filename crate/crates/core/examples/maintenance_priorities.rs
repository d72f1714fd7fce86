//! Turn predicted PCI into condition classes, rank segments for repair and
//! check how often the predicted class is off by more than one step.
//!
//! ```text
//! cargo run --release --example maintenance_priorities
//! ```

use pavegraph::decision::{build_profile, safety_report, top_k_critical, SeverityClass};
use pavegraph::model::{ModelConfig, Variant};
use pavegraph::pipeline::{evaluate, fit, prepare};
use pavegraph::synth::{generate, SynthConfig};
use pavegraph::train::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dataset = generate(&SynthConfig { seed: 8, ..SynthConfig::with_segments(200) })?;
    let prepared = prepare(&dataset.series, 2, None)?;
    let mut model = ModelConfig::new(0, 2);
    model.heads = 4;
    model.d_head = 16;
    model.gru_hidden = 64;
    model.head_hidden = 64;
    let fitted = fit(&prepared, &dataset.graph, Variant::Full, &model, &TrainConfig::default())?;
    let eval = evaluate(&fitted, &prepared.raw.test, &dataset.graph)?;

    let profile = build_profile(&eval.predicted, Some(&eval.actual), dataset.graph.node_ids())?;
    println!("{:<10} {:>10} {:>8}  action", "class", "predicted", "actual");
    for class in SeverityClass::ALL {
        let predicted = profile.records.iter().filter(|r| r.predicted_class == class).count();
        let actual = profile.records.iter().filter(|r| r.actual_class == Some(class)).count();
        println!("{:<10} {predicted:>10} {actual:>8}  {}", class.label(), class.recommended_action());
    }

    let safety = safety_report(&profile)?;
    println!(
        "\nexact class {:.1}%, within one class {:.1}%, critically misclassified {:.1}% ({} of {})",
        100.0 * safety.exact_match,
        100.0 * safety.adjacent_match,
        100.0 * safety.critical_misclassification,
        safety.critical_count,
        safety.total
    );
    println!("confusion (rows actual, columns predicted, best to worst):");
    for row in safety.confusion {
        println!("  {row:?}");
    }

    println!("\nten segments to inspect first:");
    let by_id = |id: &str| profile.records.iter().find(|r| r.segment_id == id).expect("known id");
    for id in top_k_critical(&profile, 10)? {
        let r = by_id(&id);
        println!(
            "  #{:<3} {id:<8} predicted {:>6.2} ({}), observed {:>6.2}",
            r.priority_rank,
            r.predicted_pci,
            r.predicted_class.label(),
            r.actual_pci.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
