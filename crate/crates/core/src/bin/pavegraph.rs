use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pavegraph::config::RunConfig;
use pavegraph::model::Variant;
use pavegraph::workflow::{self, DataPaths, ExplainTarget, GridSpec, SplitRole};
use pavegraph::Error;

/// Pavement condition forecasting on road-segment graphs.
#[derive(Parser)]
#[command(name = "pavegraph", version)]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random stream; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Directory holding observations.csv and edges.csv.
    #[arg(long, required_unless_present_all = ["observations", "edges"])]
    data: Option<PathBuf>,
    #[arg(long, requires = "edges", conflicts_with = "data")]
    observations: Option<PathBuf>,
    #[arg(long, requires = "observations", conflicts_with = "data")]
    edges: Option<PathBuf>,
}

impl DataArgs {
    fn paths(&self) -> DataPaths {
        match (&self.data, &self.observations, &self.edges) {
            (_, Some(o), Some(e)) => DataPaths {
                observations: o.clone(),
                edges: e.clone(),
            },
            (Some(d), _, _) => DataPaths::in_dir(d),
            _ => unreachable!("clap enforces a data source"),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic road network and yearly survey data.
    Synth {
        #[arg(long)]
        segments: Option<usize>,
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Train a model and write a checkpoint.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_parser = parse_variant)]
        variant: Option<Variant>,
        #[arg(long)]
        t0: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score a checkpoint: metrics, predictions and REC curve.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: SplitRole,
    },
    /// Rank segments for maintenance by predicted condition.
    Prioritize {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Year to predict; defaults to the last observed year.
        #[arg(long)]
        year: Option<i32>,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// Explain predictions globally or for one segment.
    Explain {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, conflicts_with = "global", required_unless_present = "global")]
        node: Option<String>,
        #[arg(long)]
        global: bool,
        #[arg(long)]
        year: Option<i32>,
    },
    /// Train and score every cell of an ablation grid.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        /// Grid file with `axis = v1, v2` lines.
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        grid: Option<PathBuf>,
        /// `architectures` or `features`.
        #[arg(long)]
        preset: Option<String>,
    },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: pavegraph::model::ModelError| e.to_string())
}

fn parse_split(s: &str) -> Result<SplitRole, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn grid_spec(grid: Option<&Path>, preset: Option<&str>) -> Result<GridSpec, Error> {
    match (grid, preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::File {
                path: path.to_owned(),
                source,
            })?;
            GridSpec::parse(&text)
        }
        (None, Some("architectures")) => Ok(GridSpec::architectures()),
        (None, Some("features")) => Ok(GridSpec::feature_groups()),
        (None, Some(other)) => Err(Error::Usage(format!(
            "unknown preset {other:?}; expected architectures or features"
        ))),
        (None, None) => Err(Error::Usage("either --grid or --preset is required".into())),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config = config.with_seed(seed);
    }
    let out = cli.out.as_path();
    let manifest = match cli.command {
        Command::Synth { segments, gamma } => {
            if let Some(n) = segments {
                config.synth.num_segments = n;
                config.synth.target_arcs = 2 * n.saturating_sub(1);
            }
            if let Some(g) = gamma {
                config.synth.gamma = g;
            }
            workflow::synth(&config, out)?
        }
        Command::Train {
            data,
            variant,
            t0,
            epochs,
        } => {
            if let Some(v) = variant {
                config.variant = v;
            }
            if let Some(t0) = t0 {
                config.train.t0 = t0;
                config.model.t0 = t0;
            }
            if let Some(e) = epochs {
                config.train.max_epochs = e;
            }
            workflow::train(&config, &data.paths(), out)?
        }
        Command::Eval {
            checkpoint,
            data,
            split,
        } => workflow::eval(&config, &checkpoint, &data.paths(), split, out)?,
        Command::Prioritize {
            checkpoint,
            data,
            year,
            k,
        } => workflow::prioritize(&config, &checkpoint, &data.paths(), year, k, out)?,
        Command::Explain {
            checkpoint,
            data,
            node,
            global: _,
            year,
        } => {
            let target = match node {
                Some(id) => ExplainTarget::Node(id),
                None => ExplainTarget::Global,
            };
            workflow::explain(&config, &checkpoint, &data.paths(), &target, year, out)?
        }
        Command::Ablate { data, grid, preset } => {
            let spec = grid_spec(grid.as_deref(), preset.as_deref())?;
            workflow::ablate(&config, &data.paths(), &spec, out)?
        }
    };
    for f in &manifest.outputs {
        println!("{}", out.join(&f.path).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) | Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
