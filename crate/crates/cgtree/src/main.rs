use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};

use cgtree::harness::{
    cmd_benchmark, cmd_sample_splits, cmd_train, BenchmarkArgs, Method, SampleSplitsArgs,
    TrainArgs,
};

/// Classification trees by column generation over decision paths.
#[derive(Parser)]
#[command(name = "cgtree", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write model.json plus metrics.csv.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Sidecar schema file (key = value lines).
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        depth: usize,
        /// cart, cart_star or cgh.
        #[arg(long, default_value = "cgh")]
        method: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Seconds; the CGH_TIME_LIMIT environment variable overrides it.
        #[arg(long, default_value_t = 600)]
        time_limit: u64,
        /// Skip exact pricing (heuristic-only column generation).
        #[arg(long)]
        big_data: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// The CSV has no header row.
        #[arg(long)]
        no_header: bool,
    },
    /// Run the full benchmark grid and write report.csv.
    Benchmark {
        /// Dataset CSV path; repeat for several datasets.
        #[arg(long, required = true)]
        data: Vec<PathBuf>,
        /// Comma-separated tree depths.
        #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
        depths: Vec<usize>,
        /// Comma-separated split seeds.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
        /// Comma-separated methods (cart, cart_star, cgh).
        #[arg(long, value_delimiter = ',', default_value = "cart,cgh")]
        methods: Vec<String>,
        #[arg(long, default_value_t = 600)]
        time_limit: u64,
        /// Concurrent benchmark cells.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        no_header: bool,
        #[arg(long)]
        big_data: bool,
    },
    /// Run threshold sampling only and dump the harvested split sets.
    SampleSplits {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        depth: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Subsample fraction per sampling iteration.
        #[arg(long, default_value_t = 0.9)]
        alpha: f64,
        /// Stall threshold of the sampling loop.
        #[arg(long, default_value_t = 300)]
        tau: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        no_header: bool,
    },
}

fn effective_time_limit(cli_secs: u64) -> Duration {
    let secs = std::env::var("CGH_TIME_LIMIT")
        .ok()
        .and_then(|v| v.parse::<u64>().ok())
        .unwrap_or(cli_secs);
    Duration::from_secs(secs)
}

fn parse_methods(raw: &[String]) -> Result<Vec<Method>, cgtree::Error> {
    raw.iter().map(|s| s.parse()).collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train {
            data,
            schema,
            depth,
            method,
            seed,
            time_limit,
            big_data,
            out,
            no_header,
        } => {
            let method = match method.parse::<Method>() {
                Ok(m) => m,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let args = TrainArgs {
                data,
                schema,
                depth,
                method,
                seed,
                time_limit: effective_time_limit(time_limit),
                big_data,
                out_dir: out,
                no_header,
            };
            cmd_train(&args).map(|outcome| {
                println!(
                    "{} d{} seed {}: train {:.4} test {:.4} ({}, {:.2}s)",
                    method,
                    depth,
                    seed,
                    outcome.train_accuracy,
                    outcome.test_accuracy,
                    outcome.termination,
                    outcome.wall_time.as_secs_f64()
                );
                println!("model: {}", outcome.model_path.display());
                println!("metrics: {}", outcome.metrics_path.display());
                true
            })
        }
        Command::Benchmark {
            data,
            depths,
            seeds,
            methods,
            time_limit,
            jobs,
            out,
            no_header,
            big_data,
        } => match parse_methods(&methods) {
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            Ok(methods) => {
                let args = BenchmarkArgs {
                    datasets: data,
                    depths,
                    seeds,
                    methods,
                    time_limit: effective_time_limit(time_limit),
                    jobs,
                    out_dir: out.clone(),
                    no_header,
                    big_data,
                };
                cmd_benchmark(&args).map(|(report, all_ok)| {
                    for row in &report.averages {
                        println!(
                            "{} d{} {}: train {:.4} test {:.4} ({})",
                            row.dataset,
                            row.depth,
                            row.method,
                            row.train_accuracy,
                            row.test_accuracy,
                            row.termination
                        );
                    }
                    if let Some(ratio) = report.integrality_ratio() {
                        println!("integral LP terminations: {:.0}%", 100.0 * ratio);
                    }
                    println!("report: {}", out.join("report.csv").display());
                    all_ok
                })
            }
        },
        Command::SampleSplits {
            data,
            schema,
            depth,
            seed,
            alpha,
            tau,
            out,
            no_header,
        } => {
            let args = SampleSplitsArgs {
                data,
                schema,
                depth,
                seed,
                alpha,
                tau,
                out_dir: out,
                no_header,
            };
            cmd_sample_splits(&args).map(|(path, sampling)| {
                println!(
                    "sampling finished after {} iterations; splits: {}",
                    sampling.iterations,
                    path.display()
                );
                true
            })
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
