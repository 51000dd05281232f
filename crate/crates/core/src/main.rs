use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rsappm::cli::{self, PriorArgs};
use rsappm::io::parse_grid;
use rsappm::model::ScenarioSpec;
use rsappm::partitions::{PriorVariant, WeightRule};
use rsappm::{Error, Result};

/// Regime-switching areal product partition models.
#[derive(Debug, Parser)]
#[command(name = "rsappm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw partitions from the spatial partition prior.
    SimulatePrior {
        /// Grid as ROWSxCOLS.
        #[arg(long)]
        grid: String,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        #[arg(long, default_value_t = 1.0)]
        xi: f64,
        /// appm, dp-only or hb-only.
        #[arg(long, default_value = "appm")]
        variant: PriorVariant,
        #[arg(long, default_value_t = 10_000)]
        iters: usize,
        #[arg(long, default_value_t = 100)]
        burn_in: usize,
        #[arg(long, default_value_t = 1)]
        thin: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a dataset from a named scenario.
    SimulateData {
        /// single-regime-contaminated, single-regime-missing or multi-regime.
        #[arg(long)]
        scenario: String,
        /// Residual variance override for multi-regime.
        #[arg(long)]
        sigma2: Option<f64>,
        /// Change-point half-width override for multi-regime.
        #[arg(long)]
        n_lambda: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the sampler.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Posterior summaries of one chain directory.
    Summarize {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// One-based cells for fitted bands, comma separated.
        #[arg(long, value_delimiter = ',')]
        cells: Vec<usize>,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Tabulate modal cluster counts, LPML and WAIC across chains.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        chains: Vec<PathBuf>,
        /// CSV destination; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SimulatePrior { grid, kappa, xi, variant, iters, burn_in, thin, seed, out } => {
            let args = PriorArgs {
                grid: parse_grid(&grid)?,
                kappa,
                xi,
                variant,
                iterations: iters,
                burn_in,
                thin,
                weights: WeightRule::Exact,
                seed,
            };
            let s = cli::simulate_prior(&args, &out)?;
            println!("mean K = {} (sd {}, {} draws)", s.mean_k, s.sd_k, s.draws);
        }
        Command::SimulateData { scenario, sigma2, n_lambda, seed, out } => {
            let spec = match (scenario.as_str(), sigma2, n_lambda) {
                ("multi-regime", s, n) => ScenarioSpec::multi_regime(s.unwrap_or(0.1), n.unwrap_or(5)),
                (_, None, None) => ScenarioSpec::preset(&scenario)?,
                _ => return Err(Error::Config("--sigma2 and --n-lambda apply to multi-regime only".into())),
            };
            cli::simulate_data(&spec, seed, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Fit { data, config, seed, out } => {
            for dir in cli::fit(&data, &config, &out, seed)? {
                println!("wrote {}", dir.display());
            }
        }
        Command::Summarize { chain, out, cells, level } => {
            let cells = cells
                .into_iter()
                .map(|c| c.checked_sub(1).ok_or_else(|| Error::Config("cells are one-based".into())))
                .collect::<Result<Vec<_>>>()?;
            let s = cli::summarize(&chain, &out, &cells, level)?;
            println!("LPML = {}, WAIC = {}", s.lpml, s.waic);
        }
        Command::Compare { chains, out } => {
            let rows = cli::compare(&chains, out.as_deref())?;
            if out.is_none() {
                print!("{}", cli::comparison_csv(&rows));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
