use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lambda_bench::config::{load_configs, table_grid, DESK_SCALE, FULL_SCALE};
use lambda_bench::validate::{validate, ValidateOptions};
use lambda_bench::{execute, fig1, table, BenchError, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(name = "lambda-bench", version, about = "Run and tabulate lambda-family experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment, or each experiment of a JSON list.
    Run {
        /// JSON file with one config object or an array of them.
        #[arg(long, conflicts_with = "table_grid")]
        config: Option<PathBuf>,
        /// Run every cell of the VI comparison table instead of a config file.
        #[arg(long)]
        table_grid: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        iters: Option<usize>,
        /// 100 replicates of 1000 iterations unless overridden.
        #[arg(long)]
        full_scale: bool,
        /// Record per-replicate wall time (outputs are then not reproducible).
        #[arg(long)]
        timing: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Tabulate final medians from summaries matched by a glob.
    Table {
        #[arg(default_value = "out/**/summary.json")]
        pattern: String,
    },
    /// Run the oracle suite and print one line per check.
    Validate {
        #[arg(long)]
        seed: Option<u64>,
        /// Add this constant to the log-partition in the Fenchel–Young check.
        #[arg(long, default_value_t = 0.0, hide = true)]
        perturb_phi: f64,
    },
    /// Write the nine escort curves, one CSV per lambda.
    Fig1 {
        #[arg(long, default_value = "out/fig1")]
        out: PathBuf,
        #[arg(long, default_value_t = fig1::DEFAULT_POINTS)]
        points: usize,
    },
}

#[allow(clippy::too_many_arguments)]
fn run(
    config: Option<PathBuf>,
    grid: bool,
    seed: Option<u64>,
    replicates: Option<usize>,
    iters: Option<usize>,
    full_scale: bool,
    timing: bool,
    out: PathBuf,
) -> lambda_bench::Result<bool> {
    let (default_reps, default_iters) = if full_scale { FULL_SCALE } else { DESK_SCALE };
    let mut configs: Vec<ExperimentConfig> = match (config, grid) {
        (Some(path), _) => load_configs(&path)?,
        (None, true) => table_grid(seed.unwrap_or(0), default_reps, default_iters),
        (None, false) => return Err(BenchError::Config("pass --config <file> or --table-grid".into())),
    };
    for c in &mut configs {
        if let Some(s) = seed {
            c.seed = s;
        }
        if full_scale {
            (c.n_replicates, c.n_iters) = FULL_SCALE;
        }
        c.n_replicates = replicates.unwrap_or(c.n_replicates);
        c.n_iters = iters.unwrap_or(c.n_iters);
    }
    let opts = RunOptions { timing };
    let single = configs.len() == 1;
    let mut all_ok = true;
    for c in &configs {
        let dir = match (&c.output_path, single) {
            (Some(p), _) => p.clone(),
            (None, true) => out.clone(),
            (None, false) => out.join(c.label()),
        };
        match execute(c, &dir, &opts) {
            Ok(Some(s)) => {
                let median = s.final_quartiles.map_or(f64::NAN, |q| q.median);
                println!("{}: {} replicates, {} aborted, final median {median:.4e} -> {}", c.label(), s.completed_replicates, s.aborts.len(), dir.display());
            }
            Ok(None) => println!("{}: curves -> {}", c.label(), dir.display()),
            Err(BenchError::Incompatible { value }) if !single => {
                println!("{}: skipped, compatibility value {value:.4} <= 2", c.label());
            }
            Err(e) if !single => {
                eprintln!("{}: {e}", c.label());
                all_ok = false;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(all_ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, table_grid, seed, replicates, iters, full_scale, timing, out } => {
            run(config, table_grid, seed, replicates, iters, full_scale, timing, out)
        }
        Command::Table { pattern } => table::table(&pattern).map(|t| {
            print!("{}", t.render());
            true
        }),
        Command::Validate { seed, perturb_phi } => {
            let mut opts = ValidateOptions { phi_perturbation: perturb_phi, ..Default::default() };
            if let Some(s) = seed {
                opts.seed = s;
            }
            validate(&opts).map(|checks| {
                checks.iter().for_each(|c| println!("{c}"));
                checks.iter().all(|c| c.passed)
            })
        }
        Command::Fig1 { out, points } => fig1::write_curves(&out, points).map(|_| {
            println!("wrote {} curves to {}", fig1::LAMBDAS.len() * fig1::ALPHAS.len(), out.display());
            true
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
