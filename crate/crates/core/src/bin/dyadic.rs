use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dyadic_core::commands::{run_command, run_verify, Command};
use dyadic_core::config::{read_config, RunConfig, RunScheme};
use dyadic_core::Error;

#[derive(Parser)]
#[command(name = "dyadic", version, about = "Stochastic dyadic MHD shell model toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// TOML configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; all cores when omitted.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate the deterministic system or a stochastic ensemble.
    Simulate {
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
    },
    /// Sample birth-death jump paths.
    BdSample,
    /// Solve the forward energy equation.
    Forward,
    /// Compare reweighted linear and direct nonlinear ensembles.
    GirsanovCheck,
    /// Print spectral quantities.
    Quantities,
    /// Run the acceptance suite.
    Verify,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Deterministic,
    Ito,
    Stratonovich,
    Linear,
}

impl From<SchemeArg> for RunScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Deterministic => RunScheme::Deterministic,
            SchemeArg::Ito => RunScheme::Ito,
            SchemeArg::Stratonovich => RunScheme::Stratonovich,
            SchemeArg::Linear => RunScheme::Linear,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::BlowUp { .. } | Error::EnsembleBlowUp { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidParameter(format!("threads: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(path) => read_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.run.master_seed = seed;
    }
    let cmd = match cli.command {
        Cmd::Simulate { scheme } => {
            if let Some(s) = scheme {
                cfg.run.scheme = s.into();
            }
            Command::Simulate
        }
        Cmd::BdSample => Command::BdSample,
        Cmd::Forward => Command::Forward,
        Cmd::GirsanovCheck => Command::GirsanovCheck,
        Cmd::Quantities => Command::Quantities,
        Cmd::Verify => Command::Verify,
    };
    let out = if cmd == Command::Verify {
        run_verify(&cfg, &cli.out_dir, |o| println!("{}", o.line()))?
    } else {
        let out = run_command(cmd, &cfg, &cli.out_dir)?;
        print!("{}", out.report);
        out
    };
    if let Some(f) = out.first_failure() {
        eprintln!("verification failed: criterion {} ({})", f.id, f.name);
        return Ok(1);
    }
    Ok(0)
}
