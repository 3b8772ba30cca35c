use std::path::PathBuf;

use albench_core::dataset::{make_blobs, write_table};
use albench_core::runner::{export_report, run_matrix_with_progress, MatrixConfig, ReportKind, ResultsTable, RESULTS_FILE};
use albench_core::seed;
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "albench", version, about = "Batch active learning benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every trial of an experiment matrix, resuming finished work.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        workers: Option<usize>,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Turn a results directory into one report table.
    Analyze {
        /// Directory holding results.csv, or the CSV itself.
        #[arg(long = "in")]
        input: PathBuf,
        /// delta_curves, heatmap_cells, always_on, variance_profile or tests.
        #[arg(long)]
        report: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic Gaussian-blob dataset as CSV.
    Synth {
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        per_class: usize,
        #[arg(long)]
        separation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            workers,
            out,
            quiet,
        } => {
            let mut cfg = MatrixConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            let workers = match workers {
                Some(0) => bail!("--workers must be at least 1"),
                Some(w) => w,
                None => std::thread::available_parallelism().map_or(1, |n| n.get()),
            };
            let outcome = run_matrix_with_progress(&cfg, workers, |p| {
                if !quiet {
                    eprintln!("[{}/{}] trials finished, {} failed", p.finished, p.pending, p.failed);
                }
            })?;
            println!(
                "{} trials executed ({} failed), {} already complete; results in {}",
                outcome.executed,
                outcome.failed,
                outcome.skipped,
                cfg.output_dir.display()
            );
        }
        Command::Analyze { input, report, out } => {
            let kind: ReportKind = report.parse()?;
            let path = if input.is_dir() { input.join(RESULTS_FILE) } else { input };
            let table = ResultsTable::read(&path).with_context(|| format!("reading {}", path.display()))?;
            let text = export_report(&table, kind)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            std::fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Synth {
            classes,
            dim,
            per_class,
            separation,
            seed,
            out,
        } => {
            let mut bundle = make_blobs(classes, dim, per_class, separation, &mut seed::rng(seed))?;
            bundle.id = out.display().to_string();
            write_table(&bundle, &out)?;
        }
    }
    Ok(())
}
