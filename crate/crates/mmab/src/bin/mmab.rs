use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use mmab::harness::{emit_plot_data, run_batch, run_sweep, AlgoSpec, ExperimentConfig};

#[derive(Parser)]
#[command(name = "mmab", about = "Multiplayer multi-armed bandit experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of seeded episodes from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the number of runs.
        #[arg(long)]
        runs: Option<usize>,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the algorithm (parameterless names only:
        /// sic_mmab, dyn_mmab, selfish, oracle).
        #[arg(long)]
        algo: Option<String>,
        /// Output directory for runs.csv and summary.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the mean gap and tabulate final regret against 1/gap.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Swept parameter; only "gap" is supported.
        #[arg(long, default_value = "gap")]
        param: String,
        #[arg(long, num_args = 1.., required = true)]
        values: Vec<f64>,
        #[arg(long, default_value = "sweep_out")]
        out: PathBuf,
    },
    /// Summarize an existing output directory and emit plot tables.
    Report {
        #[arg(long, name = "in")]
        input: PathBuf,
    },
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    ExperimentConfig::from_json(&text)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, runs, seed, algo, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(r) = runs {
                cfg.runs = r;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(name) = algo {
                cfg.algo = match name.as_str() {
                    "sic_mmab" => AlgoSpec::SicMmab { variant: mmab::sic_mmab::SicVariant::Bernoulli },
                    "dyn_mmab" => AlgoSpec::DynMmab { confidence_scale: 1.0 },
                    "selfish" => AlgoSpec::Selfish,
                    "oracle" => AlgoSpec::Oracle,
                    other => bail!(
                        "unknown algorithm {other:?} (sic_mmab2 needs mu_min, set it in the config file)"
                    ),
                };
            }
            let report = run_batch(&cfg, out.as_deref())?;
            println!(
                "{} runs ({} flagged), final mean regret {:.2}",
                report.runs, report.flagged_runs, report.final_regret_mean
            );
        }
        Command::Sweep { config, param, values, out } => {
            if param != "gap" {
                bail!("unsupported sweep parameter {param:?}");
            }
            let cfg = load_config(&config)?;
            run_sweep(&cfg, &values, &out)?;
            println!("wrote {}", out.join("sweep.csv").display());
        }
        Command::Report { input } => {
            let text = std::fs::read_to_string(input.join("summary.json"))
                .with_context(|| format!("no summary.json under {}", input.display()))?;
            let doc: serde_json::Value = serde_json::from_str(&text)?;
            let report = &doc["report"];
            println!(
                "runs: {}  flagged: {}  final mean regret: {}",
                report["runs"], report["flagged_runs"], report["final_regret_mean"]
            );
            // Re-emit the plot tables next to the summary.
            let report: mmab::harness::AggregateReport = serde_json::from_value(report.clone())?;
            emit_plot_data(&report, &input)?;
            println!("wrote {}", input.join("regret_vs_time.csv").display());
        }
    }
    Ok(())
}
