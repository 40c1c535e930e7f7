//! Command-line front end. Exit codes are a stable contract: 0 success,
//! 2 input or schema error, 3 numeric failure, 4 fit that did not converge.

mod csvio;
mod reproduce;
mod run;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use biphoton::Error;

use run::{FitModelKind, FitOptions};

#[derive(Parser)]
#[command(
    name = "biphoton",
    version,
    about = "Interference scans, spectra, and fits for spectrally filtered energy-entangled photon pairs"
)]
struct Cli {
    /// Worker threads for scan evaluation (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output format; csv is the only defined format
    #[arg(long, global = true, default_value = "csv")]
    format: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fringe visibility against interferometer air gap
    Scan {
        /// Bundled scenario name or path to a scenario file
        #[arg(long)]
        scenario: String,
        /// Output file (default: standard output)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Gaussian noise level for synthetic measured data; 0 keeps the
        /// scan exact
        #[arg(long, default_value_t = 0.0)]
        noise_sigma: f64,
        /// Noise seed; same seed, same bytes
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Normalized coincidence rate against beamsplitter path difference
    Hom {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Filtered signal-arm spectrum around the arm center wavelength
    Spectrum {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Wavelength window width, nm
        #[arg(long, default_value_t = 16.0)]
        span_nm: f64,
        /// Samples across the window
        #[arg(long, default_value_t = 2001)]
        points: usize,
    },
    /// Estimate envelope or cavity parameters from a visibility table
    Fit {
        /// CSV with l_ag_um and visibility columns, sigma optional
        #[arg(long)]
        data: PathBuf,
        /// Scenario that seeds the model (centers, widths, cavity guess)
        #[arg(long)]
        scenario: String,
        /// Model override; default follows the scenario's filters
        #[arg(long, value_enum)]
        model: Option<ModelArg>,
        /// Let finesse float instead of pinning the scenario value
        #[arg(long, default_value_t = false)]
        free_finesse: bool,
        /// Pin the arm amplitude ratio instead of fitting it
        #[arg(long)]
        fixed_ratio: Option<f64>,
    },
    /// Recompute a bundled curve and compare headline numbers with
    /// reference values
    Reproduce {
        /// fig2 | fig3 | fig4 | fig5 | fig7 | all
        id: String,
        /// Directory for the emitted CSV files
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Gaussian,
    Fp,
}

impl From<ModelArg> for FitModelKind {
    fn from(m: ModelArg) -> FitModelKind {
        match m {
            ModelArg::Gaussian => FitModelKind::Gaussian,
            ModelArg::Fp => FitModelKind::Fp,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(match e {
                Error::Domain(_) => 2,
                Error::Numeric(_) => 3,
                Error::Fit(_) => 4,
            })
        }
    }
}

fn execute(cli: Cli) -> biphoton::Result<i32> {
    if cli.format != "csv" {
        return Err(Error::Domain(format!(
            "unsupported --format '{}'; csv is the only defined format",
            cli.format
        )));
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Domain("--threads must be at least 1".to_string()));
        }
        // A failure here means a pool already exists (e.g. repeated calls in
        // one process); scans then simply use that pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Scan { scenario, out, noise_sigma, seed } => {
            run::cmd_scan(&scenario, out.as_deref(), noise_sigma, seed)
        }
        Command::Hom { scenario, out } => run::cmd_hom(&scenario, out.as_deref()),
        Command::Spectrum { scenario, out, span_nm, points } => {
            run::cmd_spectrum(&scenario, out.as_deref(), span_nm, points)
        }
        Command::Fit { data, scenario, model, free_finesse, fixed_ratio } => {
            let opts = FitOptions {
                model: model.map(FitModelKind::from),
                free_finesse,
                fixed_ratio,
            };
            run::cmd_fit(&data, &scenario, &opts)
        }
        Command::Reproduce { id, out_dir } => reproduce::cmd_reproduce(&id, &out_dir),
    }
}
