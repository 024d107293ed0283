//! `billiard`: spectra, propagation and frequency scans of the breathing
//! elliptical billiard from the command line.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<breathing_billiard::Error> for CliError {
    fn from(e: breathing_billiard::Error) -> Self {
        use breathing_billiard::Error as E;
        match e {
            E::Io(_) | E::Checksum { .. } | E::Version { .. } | E::Truncated { .. } | E::Header(_) => {
                CliError::Io(e.to_string())
            }
            E::InvalidParameter(_) | E::UnknownLabel(_) | E::InsufficientBasis { .. } => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "billiard", version, about = "Quantum dynamics in a breathing elliptical billiard")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the JSON schema of the configuration and exit.
    #[arg(long)]
    print_schema: bool,
    /// Also write gnuplot scripts next to the data.
    #[arg(long, global = true)]
    emit_plot: bool,
    /// Worker threads; 1 runs everything on the calling thread.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    a0: Option<f64>,
    #[arg(long, global = true)]
    b0: Option<f64>,
    /// Relative driving amplitude c.
    #[arg(long, global = true)]
    amplitude: Option<f64>,
    #[arg(long, global = true)]
    omega: Option<f64>,
    #[arg(long, global = true)]
    omega_start: Option<f64>,
    #[arg(long, global = true)]
    omega_end: Option<f64>,
    #[arg(long, global = true)]
    omega_step: Option<f64>,
    /// Initial state label.
    #[arg(long, global = true)]
    state: Option<usize>,
    #[arg(long, global = true)]
    n_max: Option<usize>,
    #[arg(long, global = true)]
    m_max: Option<usize>,
    /// Wavenumber cutoff of the propagated basis; 0 keeps the whole table.
    #[arg(long, global = true)]
    k_cut: Option<f64>,
    #[arg(long, global = true)]
    periods: Option<usize>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    e_max: Option<f64>,
    /// Comma-separated population labels for `propagate`.
    #[arg(long, global = true, value_delimiter = ',')]
    populations: Option<Vec<usize>>,
    /// Comma-separated level set for `rabi`.
    #[arg(long, global = true, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
    /// Fixed Rabi coupling strength instead of calibration.
    #[arg(long, global = true)]
    coupling: Option<f64>,
    #[arg(long, global = true)]
    no_refine: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Equilibrium spectrum, phase-resolved levels and mean level differences.
    Spectrum,
    /// Build or verify the cached coupling tables.
    Tables {
        /// Rebuild even if a cached table exists.
        #[arg(long)]
        force: bool,
    },
    /// E(t) and populations for one driving frequency.
    Propagate,
    /// Extremal energies over a frequency grid.
    Scan,
    /// Frequency scan of the few-level model.
    Rabi,
}

impl Cli {
    fn config(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:ident => $($field:ident).+) => {
                if let Some(v) = self.$flag.clone() {
                    c.$($field).+ = v;
                }
            };
        }
        set!(out => output_dir);
        set!(a0 => geometry.a0);
        set!(b0 => geometry.b0);
        set!(amplitude => driving.amplitude);
        set!(omega => driving.omega);
        set!(omega_start => driving.grid.start);
        set!(omega_end => driving.grid.end);
        set!(omega_step => driving.grid.step);
        set!(state => state);
        set!(n_max => basis.n_max);
        set!(m_max => basis.m_max);
        set!(periods => horizon_periods);
        set!(tol => tolerances.period_tol);
        set!(e_max => spectrum_e_max);
        set!(populations => populations);
        set!(levels => rabi.levels);
        if let Some(dir) = &self.cache_dir {
            c.cache_dir = Some(dir.clone());
        }
        if let Some(k) = self.k_cut {
            c.basis.k_cut = (k > 0.0).then_some(k);
        }
        if let Some(a) = self.coupling {
            c.rabi.coupling = Some(a);
        }
        if self.no_refine {
            c.refinement.enabled = false;
        }
        c.validate()?;
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.print_schema {
        println!("{}", RunConfig::schema());
        return Ok(());
    }
    let Some(command) = &cli.command else {
        return Err(CliError::Config("no subcommand given (try --help)".into()));
    };
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let ctx = commands::Context { config: cli.config()?, emit_plot: cli.emit_plot };
    match command {
        Command::Spectrum => commands::spectrum(&ctx),
        Command::Tables { force } => commands::tables(&ctx, *force),
        Command::Propagate => commands::propagate(&ctx),
        Command::Scan => commands::scan_cmd(&ctx),
        Command::Rabi => commands::rabi(&ctx),
    }
}

fn main() -> ExitCode {
    // clap reports its own usage errors with exit status 2.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("billiard: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
