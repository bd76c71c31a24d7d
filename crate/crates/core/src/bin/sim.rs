use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hwsim::harness::{
    load_config, run_ber, run_linearize, run_psd, run_validate, ExperimentConfig, HarnessError,
};

/// Massive-MIMO OFDM uplink simulator with nonideal receive hardware.
#[derive(Parser)]
#[command(name = "sim", version)]
struct Cli {
    /// Override the seed from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the trial count: PSD frames for `psd`, channel realizations for `ber`.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Size of the worker pool (defaults to the number of CPUs).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Run {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic and Monte-Carlo PSD for one channel realization.
    Psd(Run),
    /// Analytic and Monte-Carlo BER over the configured SNR grid.
    Ber(Run),
    /// Dump Bussgang gains and per-subcarrier distortion covariances.
    Linearize(Run),
    /// Run the self-checks and print a report; exits 1 if any fails.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn configure(
    cli: &Cli,
    path: &Path,
    trials_key: Option<fn(&mut ExperimentConfig, usize)>,
) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = load_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let (Some(n), Some(set)) = (cli.trials, trials_key) {
        set(&mut cfg, n);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<ExitCode, HarnessError> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(HarnessError::Config(hwsim::harness::ConfigError {
                key: Some("--workers".into()),
                line: None,
                message: "must be at least 1".into(),
            }));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .expect("worker pool is configured once");
    }
    match &cli.command {
        Command::Psd(r) => {
            let cfg = configure(cli, &r.config, Some(|c, n| c.psd_frames = n))?;
            run_psd(&cfg, &r.out)?;
        }
        Command::Ber(r) => {
            let cfg = configure(cli, &r.config, Some(|c, n| c.ber_channels = n))?;
            run_ber(&cfg, &r.out)?;
        }
        Command::Linearize(r) => {
            let cfg = configure(cli, &r.config, None)?;
            run_linearize(&cfg, &r.out)?;
        }
        Command::Validate { config } => {
            let cfg = configure(cli, config, Some(|c, n| c.psd_frames = n))?;
            let report = run_validate(&cfg)?;
            print!("{}", report.to_csv());
            if !report.passed() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
