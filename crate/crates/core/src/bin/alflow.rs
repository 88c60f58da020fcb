use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use alflow::harness::{self, ExperimentConfig};
use alflow::uncertainty::{Metric, Strategy};
use alflow::{Budget, Result};

#[derive(Parser)]
#[command(name = "alflow", version, about = "Semi-supervised flow losses and active label selection")]
struct Cli {
    /// Worker threads (0 = one per core). Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (frames, ground truth, manifest).
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate forward and backward flow for every manifest sample.
    Optimize {
        #[arg(long)]
        manifest: PathBuf,
        /// Selection JSON; chosen samples are optimized with their labels.
        #[arg(long)]
        selection: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score samples from their flow estimates.
    Score {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory written by `optimize`.
        #[arg(long)]
        flows: PathBuf,
        /// One metric, or `all`.
        #[arg(long, default_value = "all")]
        metric: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Choose samples to label from a scores CSV.
    Select {
        #[arg(long)]
        scores: PathBuf,
        /// Needed when the CSV holds several metrics.
        #[arg(long)]
        metric: Option<Metric>,
        #[arg(long, value_parser = parse_budget)]
        ratio: Budget,
        #[arg(long)]
        strategy: Strategy,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-sample EPE and Fl of estimated flow against ground truth.
    Evaluate {
        #[arg(long)]
        flows: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Correlation matrix of scores and per-sample EPE.
    Corr {
        #[arg(long, required = true, num_args = 1..)]
        scores: Vec<PathBuf>,
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full loop: optimize, score, select, re-optimize with labels, evaluate.
    Experiment {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit a stored reference curve as CSV (stdout without --out).
    Curves {
        #[arg(long)]
        fixture: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check estimator gradients against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_budget(s: &str) -> std::result::Result<Budget, String> {
    let r: f64 = s.parse().map_err(|e| format!("{e}"))?;
    Budget::new(r).map_err(|e| e.to_string())
}

fn config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen { config: c, out } => {
            let path = harness::cmd_gen(&config(c.as_deref())?, &out)?;
            println!("{}", path.display());
        }
        Command::Optimize {
            manifest,
            selection,
            config: c,
            out,
        } => harness::cmd_optimize(&manifest, selection.as_deref(), &config(c.as_deref())?, &out)?,
        Command::Score {
            manifest,
            flows,
            metric,
            config: c,
            out,
        } => {
            let metrics = if metric == "all" {
                Metric::ALL.to_vec()
            } else {
                vec![metric.parse()?]
            };
            harness::cmd_score(&manifest, &flows, &metrics, &config(c.as_deref())?.loss, &out)?;
        }
        Command::Select {
            scores,
            metric,
            ratio,
            strategy,
            seed,
            manifest,
            out,
        } => {
            let sel = harness::cmd_select(&scores, metric, ratio, strategy, seed, &manifest, &out)?;
            println!("{} of {} chosen", sel.chosen.len(), strategy);
        }
        Command::Evaluate { flows, manifest, out } => {
            let rows = harness::cmd_evaluate(&flows, &manifest, &out)?;
            let mean = rows.iter().map(|r| r.epe).sum::<f64>() / rows.len().max(1) as f64;
            println!("{} samples, mean EPE {mean:.4}", rows.len());
        }
        Command::Corr { scores, metrics, out } => {
            harness::cmd_corr(&scores, &metrics, &out)?;
        }
        Command::Experiment { config: c, out } => {
            for path in harness::cmd_experiment(&config(c.as_deref())?, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Curves { fixture, out } => match out {
            Some(p) => {
                harness::cmd_curves(&fixture, &p)?;
            }
            None => {
                let bytes = alflow::analysis::fixtures::fixture_csv(&fixture)?;
                print!("{}", String::from_utf8_lossy(&bytes));
            }
        },
        Command::Gradcheck { seed } => {
            let report = harness::cmd_gradcheck(seed)?;
            println!("gradient check passed: max relative error {:e}", report.max_error());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match harness::with_threads(cli.threads, || run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
