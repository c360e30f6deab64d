//! `aes` — build graphs, run bandit experiments, verify the DP against the
//! enumeration oracle, and emit benchmark CSVs.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/config error, 3 assertion
//! failure.

mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "aes",
    about = "Tree-structured creative-selection bandit benchmarks",
    version
)]
struct Cli {
    /// Worker threads for parallel repetitions (default: available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config-driven experiment on a synthetic environment.
    Simulate {
        /// Experiment config file (JSON).
        #[arg(long)]
        config: std::path::PathBuf,
        /// Output directory for metrics and summary CSVs.
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Run a config-driven experiment on a replayed log environment.
    Replay {
        #[arg(long)]
        config: std::path::PathBuf,
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Final regret across search-space sizes (same structure, scaled
    /// element counts).
    Sweep {
        #[arg(long)]
        config: std::path::PathBuf,
        /// Creative counts, e.g. 32,200,1200.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Verify the DP maximizer against brute-force enumeration on random
    /// graphs.
    DpCheck {
        /// Number of random graphs.
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        /// Max elements per ingredient.
        #[arg(long, default_value_t = 4)]
        max_elements: usize,
        /// Max ingredients per graph.
        #[arg(long, default_value_t = 6)]
        max_ingredients: usize,
        /// Probability that an element pair is forbidden.
        #[arg(long, default_value_t = 0.1)]
        forbid_frac: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Wall-clock comparison of the selection backends (aes, mvt, full_ts).
    SpeedTest {
        /// Creative counts, e.g. 1200,20000.
        #[arg(long, value_delimiter = ',', default_value = "1200,20000")]
        sizes: Vec<usize>,
        /// Impressions per repetition.
        #[arg(long, default_value_t = 50_000)]
        impressions: usize,
        /// Repetitions per policy.
        #[arg(long, default_value_t = 10)]
        reps: usize,
        /// Batch size for delayed feedback.
        #[arg(long, default_value_t = 1000)]
        batch_size: usize,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<std::path::PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a graph file with the default five-ingredient structure.
    GenGraph {
        #[arg(long)]
        out: std::path::PathBuf,
        /// Preset creative count (32, 96, 200, 512, 1200, 5000, 20000).
        #[arg(long, default_value_t = 200)]
        creatives: usize,
        /// Probability that an element pair is forbidden.
        #[arg(long, default_value_t = 0.0)]
        forbid_frac: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fabricate a pre-aggregated replay log for a graph.
    GenReplay {
        /// Graph file the log refers to.
        #[arg(long)]
        graph: std::path::PathBuf,
        #[arg(long)]
        out: std::path::PathBuf,
        /// Target mean CTR of the fabricated creatives.
        #[arg(long, default_value_t = 0.035)]
        mean_ctr: f64,
        /// Total impressions across all creatives.
        #[arg(long, default_value_t = 850_000)]
        impressions: u64,
        /// Beta concentration of the per-creative CTR draw.
        #[arg(long, default_value_t = 50.0)]
        concentration: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        pool = pool.num_threads(jobs.max(1));
    }
    if let Err(e) = pool.build_global() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }

    let result = match cli.command {
        Command::Simulate { config, out } => commands::run_config(&config, &out, false),
        Command::Replay { config, out } => commands::run_config(&config, &out, true),
        Command::Sweep { config, sizes, out } => commands::sweep(&config, &sizes, &out),
        Command::DpCheck {
            trials,
            max_elements,
            max_ingredients,
            forbid_frac,
            seed,
        } => commands::dp_check(trials, max_elements, max_ingredients, forbid_frac, seed),
        Command::SpeedTest {
            sizes,
            impressions,
            reps,
            batch_size,
            out,
            seed,
        } => commands::speed_test(&sizes, impressions, reps, batch_size, out.as_deref(), seed),
        Command::GenGraph {
            out,
            creatives,
            forbid_frac,
            seed,
        } => commands::gen_graph(&out, creatives, forbid_frac, seed),
        Command::GenReplay {
            graph,
            out,
            mean_ctr,
            impressions,
            concentration,
            seed,
        } => commands::gen_replay(&graph, &out, mean_ctr, impressions, concentration, seed),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
