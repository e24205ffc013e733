use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mfg_torus::experiments::{
    linearize_ergodic_command, master_eval_command, parse_config, run_experiment, solve_discounted_command, solve_ergodic_command,
    solve_finite_command, write_report, Check, CheckStatus, ExperimentConfig, ExperimentKind,
};
use mfg_torus::master::{CorrectorMethod, Normalization};
use mfg_torus::Error;

#[derive(Parser)]
#[command(name = "mfg", version, about = "Mean field games on the periodic unit interval")]
struct Cli {
    /// JSON config; defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Concurrent sweep entries.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Seed for randomized probes, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Exit with code 4 when a check fails.
    #[arg(long, global = true)]
    check: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Turnpike,
    Longtime,
    Discount,
    Expansion,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Longtime,
    Discount,
}

#[derive(Clone, Copy, ValueEnum)]
enum Norm {
    LongtimeC,
    ThetaSelected,
}

#[derive(Subcommand)]
enum Command {
    /// Finite-horizon MFG system on [0, T].
    SolveFinite {
        /// Horizon; defaults to the first entry of t_list.
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Ergodic MFG system.
    SolveErgodic,
    /// Discounted MFG system, stationary and truncated-horizon.
    SolveDiscounted {
        /// Discount rate; defaults to the first entry of delta_list.
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Linearized ergodic system and theta_bar.
    LinearizeErgodic,
    /// Corrector at m0 and at random probe densities.
    MasterEval {
        #[arg(long, value_enum, default_value = "longtime")]
        method: Method,
        #[arg(long, value_enum, default_value = "theta-selected")]
        normalization: Norm,
        #[arg(long, default_value_t = 0)]
        probes: usize,
    },
    /// Configured sweep with CSV/JSON artifacts.
    Experiment {
        #[arg(value_enum)]
        kind: Experiment,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Io(_) | Error::Json(_) | Error::InvalidArgument(_) | Error::UnknownPreset(_) => 2,
        _ => 3,
    }
}

fn print_checks(checks: &[Check]) {
    for c in checks {
        let tag = match c.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skip => "SKIP",
        };
        println!("{tag} {}: {}", c.name, c.detail);
    }
}

fn run(cli: &Cli, cfg: &ExperimentConfig, out: &Path) -> Result<bool, Error> {
    let (checks, files) = match &cli.command {
        Command::SolveFinite { horizon } => {
            let t = horizon.or(cfg.t_list.first().copied()).unwrap_or(10.0);
            let o = solve_finite_command(cfg, t, out)?;
            (o.checks, o.files)
        }
        Command::SolveErgodic => {
            let o = solve_ergodic_command(cfg, out)?;
            (o.checks, o.files)
        }
        Command::SolveDiscounted { delta } => {
            let d = delta.or(cfg.delta_list.first().copied()).unwrap_or(0.1);
            let o = solve_discounted_command(cfg, d, out)?;
            (o.checks, o.files)
        }
        Command::LinearizeErgodic => {
            let o = linearize_ergodic_command(cfg, out)?;
            (o.checks, o.files)
        }
        Command::MasterEval { method, normalization, probes } => {
            let method = match method {
                Method::Longtime => CorrectorMethod::Longtime,
                Method::Discount => CorrectorMethod::Discount,
            };
            let norm = match normalization {
                Norm::LongtimeC => Normalization::LongtimeC,
                Norm::ThetaSelected => Normalization::ThetaSelected,
            };
            let o = master_eval_command(cfg, method, norm, *probes, out)?;
            (o.checks, o.files)
        }
        Command::Experiment { kind } => {
            let kind = match kind {
                Experiment::Turnpike => ExperimentKind::Turnpike,
                Experiment::Longtime => ExperimentKind::Longtime,
                Experiment::Discount => ExperimentKind::Discount,
                Experiment::Expansion => ExperimentKind::Expansion,
            };
            let report = run_experiment(kind, cfg, cli.jobs)?;
            let files = write_report(&report, cfg, out)?;
            (report.checks, files)
        }
    };
    print_checks(&checks);
    for f in &files {
        println!("wrote {}", f.display());
    }
    Ok(checks.iter().all(|c| c.status != CheckStatus::Fail))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match &cli.config {
        Some(p) => parse_config(p),
        None => Ok(ExperimentConfig::default()),
    };
    let mut cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    let out = cfg.output_dir.clone();
    match run(&cli, &cfg, &out) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) if cli.check => ExitCode::from(4),
        Ok(false) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
