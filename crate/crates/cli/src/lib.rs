//! Command-line front end: `cluster`, `extend`, `eval`, `bench` and
//! `plotdata`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical error.

pub mod commands;
pub mod config;
pub mod error;
pub mod result;

use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use gpod_core::{Execution, ScalingMode};

use crate::commands::ExtendRequest;
use crate::config::{ConfigArgs, RunConfig};
use crate::error::{CliError, Stage};

#[derive(Debug, Parser)]
#[command(name = "gpod", version, about = "Spectral clustering with out-of-sample discretization")]
pub struct Cli {
    /// Run every data-parallel loop on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on each repeat's split, cluster the held-out points through the
    /// extension, and write result.json, assignments.csv and model.json.
    Cluster {
        /// JSON config file; flags override its keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: ConfigArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Cluster new points with a saved model (no eigensolve).
    Extend {
        #[arg(long)]
        model: PathBuf,
        /// Delimited file of new points in the model's coordinate space.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        label_column: Option<i64>,
        #[arg(long, default_value_t = ',')]
        delimiter: char,
        #[arg(long, default_value_t = false)]
        standardize: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 100)]
        max_iter: usize,
        /// Overrides the model's RatioCut scaling.
        #[arg(long)]
        scaling_mode: Option<ScalingMode>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Accuracy and NMI of one label file against another.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Time full re-clustering against train-then-extend for each `n:m`.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: ConfigArgs,
        /// Comma-separated `n:m` pairs, e.g. `1000:100,1500:150`.
        #[arg(long, default_value = "")]
        sizes: String,
        /// CSV destination; standard output if omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// CSV files behind the scatter and convergence plots.
    Plotdata {
        #[arg(long)]
        result: PathBuf,
        #[arg(long, default_value_t = 0)]
        repeat: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let mut stdout = io::stdout().lock();
    match cli.command {
        Command::Cluster { config, overrides, out } => {
            let config = RunConfig::build(config.as_deref(), overrides.to_map())?;
            let run = commands::cluster(&config, exec)?;
            let files = commands::write_cluster(&run, &out)?;
            let mean = &run.result.mean;
            writeln!(stdout, "train: {}", fmt_metrics(mean.train.as_ref())).stage("output")?;
            writeln!(stdout, "test: {}", fmt_metrics(mean.test.as_ref())).stage("output")?;
            for f in files {
                writeln!(stdout, "wrote {}", f.display()).stage("output")?;
            }
        }
        Command::Extend {
            model,
            data,
            label_column,
            delimiter,
            standardize,
            seed,
            tol,
            max_iter,
            scaling_mode,
            out,
        } => {
            let req = ExtendRequest {
                model,
                data,
                label_column,
                delimiter,
                standardize,
                seed,
                tol,
                max_iter,
                scaling_mode,
            };
            let result = commands::extend(&req, exec)?;
            writeln!(stdout, "test: {}", fmt_metrics(result.mean.test.as_ref())).stage("output")?;
            for f in commands::write_extend(&result, &out)? {
                writeln!(stdout, "wrote {}", f.display()).stage("output")?;
            }
        }
        Command::Eval { pred, truth } => {
            let report = commands::eval(&pred, &truth)?;
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            writeln!(stdout, "{json}").stage("output")?;
        }
        Command::Bench {
            config,
            overrides,
            sizes,
            out,
        } => {
            let sizes = commands::parse_sizes(&sizes)?;
            let config = RunConfig::build(config.as_deref(), overrides.to_map())?;
            let rows = commands::bench(&config, &sizes, exec)?;
            match out {
                Some(path) => commands::write_bench(&rows, std::fs::File::create(&path).stage("output")?)?,
                None => commands::write_bench(&rows, &mut stdout)?,
            }
        }
        Command::Plotdata { result, repeat, out } => {
            let files = commands::plotdata(&result, &out, repeat)?;
            if let Some(p) = &files.points {
                writeln!(stdout, "wrote {} ({} rows)", p.display(), files.point_rows).stage("output")?;
            }
            writeln!(stdout, "wrote {} ({} rows)", files.trace.display(), files.trace_rows).stage("output")?;
        }
    }
    Ok(())
}

fn fmt_metrics(m: Option<&result::Metrics>) -> String {
    match m {
        Some(m) => format!("mean ACC {:.4}, mean NMI {:.4}", m.accuracy, m.nmi),
        None => "no labels".into(),
    }
}
