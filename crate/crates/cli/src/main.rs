use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::error;

mod commands;
mod config;
mod error;
mod io;
mod units;

use config::Scenario;
use error::{io_err, CliError};

/// Default output directory when `--out` is absent.
const OUT_ENV: &str = "NANOMOTION_OUT";

#[derive(Parser, Debug)]
#[command(name = "nanomotion", version, about = "Photon-correlation simulator for an emitter on a vibrating nano-oscillator")]
struct Cli {
    /// Scenario file (TOML with unit-suffixed values). Defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the scenario's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output directory [env: NANOMOTION_OUT, default: .]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Cantilever eigenmodes: n,kL,A_n,meff_ratio.
    Modes {
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// Time-averaged image versus detector position: x_m,flux.
    Image,
    /// Stationary emitter autocorrelation: tau_s,g2.
    EmitterG2,
    /// Monte-Carlo g² over a trajectory ensemble: tau_s,g2,stderr.
    SimulateG2 {
        /// Also write the first trajectory as t_s,x_m.
        #[arg(long)]
        dump_trajectory: bool,
    },
    /// Series form of g²: tau_s,g2.
    AnalyticG2,
    /// Expansion coefficients: j,A_j,converged.
    AjTable,
    /// Time-tagged clicks on both detectors: t_s,detector.
    PhotonStream,
    /// Correlate a click record: tau_s,g2,stderr.
    Correlate {
        #[arg(long)]
        input: PathBuf,
        /// Record length in seconds (defaults to the scenario's detection duration).
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Power spectrum of g² − 1: freq_hz,psd.
    Spectrum {
        #[arg(long)]
        input: PathBuf,
    },
    /// Fit the expansion model to a g² curve: key=value summary plus residuals.
    Fit {
        #[arg(long)]
        input: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Modes { .. } => "modes",
            Command::Image => "image",
            Command::EmitterG2 => "emitter-g2",
            Command::SimulateG2 { .. } => "simulate-g2",
            Command::AnalyticG2 => "analytic-g2",
            Command::AjTable => "aj-table",
            Command::PhotonStream => "photon-stream",
            Command::Correlate { .. } => "correlate",
            Command::Spectrum { .. } => "spectrum",
            Command::Fit { .. } => "fit",
        }
    }
}

fn scenario(cli: &Cli) -> Result<Scenario, CliError> {
    let mut s = match &cli.config {
        Some(p) => config::load_scenario(p)?,
        None => config::parse_scenario("", "<defaults>")?,
    };
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let started = Instant::now();

    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    let mut manifest = commands::Manifest::new(cli.command.name(), cli.config.clone(), cli.threads);
    let result = (|| -> Result<commands::Outcome, CliError> {
        std::fs::create_dir_all(&out).map_err(io_err(&out))?;
        let s = scenario(&cli)?;
        manifest.record_scenario(&s);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
        pool.install(|| commands::run(&cli.command, &s, &out))
    })();

    let code = match &result {
        Ok(_) => 0,
        Err(e) => {
            error!("{e}");
            e.exit_code()
        }
    };
    manifest.finish(result, started.elapsed().as_secs_f64(), code);
    if out.is_dir() {
        if let Err(e) = manifest.write(&out.join("run.json")) {
            error!("{e}");
            return ExitCode::from(1);
        }
    }
    ExitCode::from(code as u8)
}
