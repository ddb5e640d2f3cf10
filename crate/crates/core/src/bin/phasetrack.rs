use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use phasetrack::experiment::{
    cmd_bounds, cmd_riccati, cmd_simulate, cmd_sweep, ratios_path, write_record_csv, Estimator,
    SimulateArgs, SpectrumSource, SweepSpec, TimingSection,
};
use phasetrack::simulation::AbcVariant;
use phasetrack::Error;

/// Phase tracking with coherent light: bounds, stationary filters and
/// feedback simulations.
#[derive(Debug, Parser)]
#[command(name = "phasetrack", version)]
struct Cli {
    /// Base seed for anything random; overrides the value in a sweep file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// QCRB, optimal filter and optimal smoother MSE.
    Bounds(BoundsArgs),
    /// Normalized filter, retrofilter and smoother covariances.
    Riccati {
        #[arg(long)]
        p: u32,
    },
    /// One trial, written step by step as CSV.
    Simulate(SimArgs),
    /// Parameter sweep from a TOML spec file.
    Sweep {
        /// Sweep spec (TOML).
        spec: PathBuf,
        /// Output CSV; ratios go to `<stem>.ratios.csv` beside it.
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Debug, Args)]
struct BoundsArgs {
    /// Power-law exponent (> 1).
    #[arg(long, requires = "kappa", conflicts_with = "spectrum_file")]
    p: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Photon flux N.
    #[arg(long)]
    flux: f64,
    /// CSV with header `omega,density`.
    #[arg(long, required_unless_present = "p")]
    spectrum_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Filter,
    Smoother,
    Abc,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Exact,
    Linearized,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long)]
    p: u32,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    /// Photon flux N.
    #[arg(long)]
    flux: f64,
    #[arg(long, value_enum, default_value = "filter")]
    estimator: EstimatorArg,
    /// Use the linearized photocurrent `phi - theta` in place of the sine.
    #[arg(long)]
    linearized: bool,
    /// ABC time constant inverse; defaults to mu^(1/p).
    #[arg(long)]
    chi: Option<f64>,
    /// Decay rate of the lowest chain component.
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long, value_enum, default_value = "exact")]
    variant: VariantArg,
    /// Step size; defaults to 0.01 mu^(-1/p).
    #[arg(long)]
    dt: Option<f64>,
    /// Total simulated time; defaults to 1040 mu^(-1/p).
    #[arg(long)]
    duration: Option<f64>,
    /// Burn-in at each end; defaults to 20 mu^(-1/p).
    #[arg(long)]
    burn_in: Option<f64>,
    #[arg(short, long)]
    output: PathBuf,
}

fn run(cli: Cli) -> phasetrack::Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Bounds(b) => {
            let source = match (b.p, b.kappa, b.spectrum_file) {
                (_, _, Some(path)) => SpectrumSource::File(path),
                (Some(p), Some(kappa), None) => SpectrumSource::PowerLaw { p, kappa },
                _ => {
                    return Err(Error::Config(
                        "bounds needs --p and --kappa, or --spectrum-file".into(),
                    ))
                }
            };
            print!("{}", cmd_bounds(&source, b.flux)?);
        }
        Command::Riccati { p } => print!("{}", cmd_riccati(p)?),
        Command::Simulate(s) => {
            let estimator = match s.estimator {
                EstimatorArg::Filter => Estimator::Filter,
                EstimatorArg::Smoother => Estimator::Smoother,
                EstimatorArg::Abc => Estimator::Abc,
            };
            let mut args = SimulateArgs::new(s.p, s.kappa, s.flux, estimator, seed.unwrap_or(0));
            args.linearized = s.linearized;
            args.chi = s.chi;
            args.cutoff = s.cutoff;
            args.variant = match s.variant {
                VariantArg::Exact => AbcVariant::Exact,
                VariantArg::Linearized => AbcVariant::Linearized,
            };
            args.timing = TimingSection::default();
            args.dt = s.dt;
            args.duration = s.duration;
            args.burn_in = s.burn_in;
            let rec = cmd_simulate(&args)?;
            write_record_csv(&rec, &s.output)?;
            eprintln!("wrote {} steps to {}", rec.len(), s.output.display());
        }
        Command::Sweep { spec, output } => {
            let mut spec = SweepSpec::from_path(&spec)?;
            if let Some(seed) = seed {
                spec.sweep.seed = seed;
            }
            let res = cmd_sweep(&spec, &output)?;
            eprintln!(
                "wrote {} rows to {} and {}",
                res.rows.len(),
                output.display(),
                ratios_path(&output).display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
