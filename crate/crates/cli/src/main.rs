//! Command-line driver: configuration-driven simulation, cascade runs,
//! bilateral bounds, boundary sweeps, and output comparison.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on numerical
//! failures.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use dde_bounds_cli::commands::{self, AppError, MethodArg, Overrides};

#[derive(Parser)]
#[command(name = "dde-bounds", version, about = "Bilateral solution bounds and domain boundaries for delay systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the cascade depth K.
    #[arg(long = "K")]
    k_depth: Option<usize>,
    /// Override the horizon T.
    #[arg(long = "T")]
    horizon: Option<f64>,
    /// Override the exceedance threshold.
    #[arg(long)]
    varpi: Option<f64>,
    /// Override the constant initial vector, comma separated: a,b,c,d.
    #[arg(long = "phi-s", value_delimiter = ',', num_args = 1..)]
    phi_s: Option<Vec<f64>>,
}

impl CommonArgs {
    fn overrides(&self) -> Result<Overrides, AppError> {
        let phi_s = match &self.phi_s {
            None => None,
            Some(v) if v.len() == 4 => Some([v[0], v[1], v[2], v[3]]),
            Some(v) => {
                return Err(AppError::config(format!(
                    "--phi-s takes exactly 4 components, got {}",
                    v.len()
                )))
            }
        };
        Ok(Overrides {
            k_depth: self.k_depth,
            horizon: self.horizon,
            varpi: self.varpi,
            phi_s,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured model and write the time series.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Solve the successive-approximation cascade and write iterate norms.
    Cascade {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Compute bilateral solution-norm bounds for one initial vector.
    Bounds {
        #[command(flatten)]
        common: CommonArgs,
        /// Skip the reference-simulation overlay column.
        #[arg(long)]
        no_reference: bool,
    },
    /// Trace boundedness/stability domain boundaries by polar sweep.
    Boundary {
        #[command(flatten)]
        common: CommonArgs,
        /// Estimator: reference, scalar, y_threshold, or all.
        #[arg(long, default_value = "all")]
        method: MethodArg,
    },
    /// Compare two output files of the same kind and write metrics.
    Compare {
        /// First file.
        file_a: PathBuf,
        /// Second file.
        file_b: PathBuf,
        /// Enclosure tolerance for bound traces.
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        /// Metrics file destination.
        #[arg(long, default_value = "compare.csv")]
        out: PathBuf,
    },
}

fn run() -> Result<(), AppError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { common } => {
            let cfg = commands::effective_config(&common.config, &common.overrides()?)?;
            let path = commands::cmd_simulate(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::Cascade { common } => {
            let cfg = commands::effective_config(&common.config, &common.overrides()?)?;
            let path = commands::cmd_cascade(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::Bounds {
            common,
            no_reference,
        } => {
            let cfg = commands::effective_config(&common.config, &common.overrides()?)?;
            let path = commands::cmd_bounds(&cfg, !no_reference)?;
            println!("wrote {}", path.display());
        }
        Command::Boundary { common, method } => {
            let cfg = commands::effective_config(&common.config, &common.overrides()?)?;
            let paths = commands::cmd_boundary(&cfg, method)?;
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Command::Compare {
            file_a,
            file_b,
            tol,
            out,
        } => {
            commands::cmd_compare(&file_a, &file_b, tol, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}
