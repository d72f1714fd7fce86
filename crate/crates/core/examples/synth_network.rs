//! Generate a synthetic road network with yearly inspections, summarize it
//! and measure how strongly neighbouring segments deteriorate together.
//!
//! ```text
//! cargo run --release --example synth_network [-- OUT_DIR]
//! ```

use std::fs::File;
use std::path::PathBuf;

use pavegraph::data::{write_edges, write_observations};
use pavegraph::synth::{contagion_statistic, generate, SynthConfig, FEATURE_STATS, PCI_STATS};

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = SynthConfig { seed: 42, ..SynthConfig::default() };
    let dataset = generate(&config)?;
    let (graph, series) = (&dataset.graph, &dataset.series);
    println!(
        "{} segments, {} undirected edges ({} arcs), years {:?}",
        graph.num_nodes(),
        graph.num_edges(),
        graph.num_arcs(),
        series.years()
    );

    println!("\n{:<16} {:>9} {:>9} {:>9} {:>9}", "all years", "mean", "target", "std", "target");
    for (c, name) in series.feature_names().iter().enumerate() {
        let col: Vec<f64> = series
            .feature_matrices()
            .iter()
            .flat_map(|x| (0..x.rows()).map(move |r| x.get(r, c)))
            .collect();
        let (m, s) = mean_std(&col);
        let t = FEATURE_STATS[c];
        println!("{name:<16} {m:>9.2} {:>9.2} {s:>9.2} {:>9.2}", t.mean, t.std);
    }
    let pci: Vec<f64> = series.target_vectors().iter().flatten().copied().collect();
    let (m, s) = mean_std(&pci);
    println!("{:<16} {m:>9.2} {:>9.2} {s:>9.2} {:>9.2}", "pci", PCI_STATS.mean, PCI_STATS.std);

    let stats = contagion_statistic(series, graph, 1000, 7)?;
    println!(
        "\nyear-over-year decline correlation: adjacent {:.3}, random pairs {:.3}, difference {:.3}",
        stats.adjacent,
        stats.non_adjacent,
        stats.difference()
    );
    let isolated = generate(&SynthConfig { gamma: 0.0, ..config.clone() })?;
    let base = contagion_statistic(&isolated.series, &isolated.graph, 1000, 7)?;
    println!("same network without contagion: difference {:.3}", base.difference());

    if let Some(dir) = std::env::args().nth(1).map(PathBuf::from) {
        std::fs::create_dir_all(&dir)?;
        write_observations(File::create(dir.join("observations.csv"))?, &series.to_records())?;
        write_edges(File::create(dir.join("edges.csv"))?, graph)?;
        println!("\nwrote {}", dir.display());
    }
    Ok(())
}
