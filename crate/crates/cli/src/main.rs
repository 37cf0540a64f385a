//! Command-line driver: subcommands map one-to-one onto the experiment
//! functions, with a flat key=value config file and CLI overrides.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use resolab_cli::config::Config;
use resolab_cli::csv::{emit_csv, CsvError};
use resolab_cli::experiments::{self, ExperimentError};

#[derive(Parser)]
#[command(name = "resolab", about = "Numerical experiments for resolvent and weighted estimates on tori")]
struct Cli {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Base seed for every randomized component.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,

    /// Worker threads for the sweep pools.
    #[arg(long, global = true, default_value_t = 2)]
    workers: usize,

    /// Output CSV path.
    #[arg(long, global = true, default_value = "out.csv")]
    out: PathBuf,

    /// Extra key=value overrides applied after the config file.
    #[arg(long = "set", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lower bounds of the resolvent norm over a spectral grid.
    ResolventSweep,
    /// Radial kernel samples with quadrature error estimates.
    BesselCheck,
    /// Kernel tables and residual diagnostics on a metric chart.
    ParametrixBuild {
        #[arg(long)]
        metric: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long = "n-order")]
        n_order: Option<usize>,
        #[arg(long, allow_hyphen_values = true)]
        z: Option<String>,
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Weighted-ratio sweep over tau.
    CarlemanSweep {
        #[arg(long = "tau-list")]
        tau_list: Option<String>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        u: Option<String>,
    },
    /// Norm-decay ladder for oscillatory kernels.
    OscDecay {
        #[arg(long)]
        phase: Option<String>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long = "lambda-ladder")]
        lambda_ladder: Option<String>,
    },
    /// Spectral cluster norm lower bounds.
    ClusterProbe,
}

fn run() -> Result<(), MainError> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => Config::from_file(p).map_err(ExperimentError::Config)?,
        None => Config::new(),
    };
    cfg.apply_overrides(cli.overrides.iter().map(|s| s.as_str()))
        .map_err(ExperimentError::Config)?;

    // subcommand flags override the config file
    match &cli.command {
        Command::ParametrixBuild {
            metric,
            n,
            n_order,
            z,
            grid,
        } => {
            if let Some(m) = metric {
                cfg.set("metric", m);
            }
            if let Some(n) = n {
                cfg.set("n", &n.to_string());
            }
            if let Some(no) = n_order {
                cfg.set("N-order", &no.to_string());
            }
            if let Some(zs) = z {
                // z as "re,im"
                let (re, im) = zs.split_once(',').unwrap_or((zs.as_str(), "0"));
                cfg.set("re-z", re.trim());
                cfg.set("im-z", im.trim());
            }
            if let Some(g) = grid {
                cfg.set("grid", &g.to_string());
            }
        }
        Command::CarlemanSweep { tau_list, grid, u } => {
            if let Some(t) = tau_list {
                cfg.set("tau-list", t);
            }
            if let Some(g) = grid {
                cfg.set("grid-x1", &g.to_string());
            }
            if let Some(u) = u {
                cfg.set("u", u);
            }
        }
        Command::OscDecay {
            phase,
            p,
            q,
            lambda_ladder,
        } => {
            if let Some(ph) = phase {
                cfg.set("phase", ph);
            }
            if let Some(p) = p {
                cfg.set("p", &p.to_string());
            }
            if let Some(q) = q {
                cfg.set("q", &q.to_string());
            }
            if let Some(l) = lambda_ladder {
                cfg.set("lambda-ladder", l);
            }
        }
        _ => {}
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.max(1))
        .build()
        .map_err(|e| ExperimentError::Numerical(e.to_string()))?;
    let seed = cli.seed;
    let table = pool.install(|| match cli.command {
        Command::ResolventSweep => experiments::resolvent_sweep(&cfg, seed),
        Command::BesselCheck => experiments::bessel_check(&cfg, seed),
        Command::ParametrixBuild { .. } => experiments::parametrix_build(&cfg, seed),
        Command::CarlemanSweep { .. } => experiments::carleman_sweep(&cfg, seed),
        Command::OscDecay { .. } => experiments::osc_decay(&cfg, seed),
        Command::ClusterProbe => experiments::cluster_probe(&cfg, seed),
    })?;
    emit_csv(&table, &cli.out)?;
    eprintln!("wrote {} rows to {}", table.rows.len(), cli.out.display());
    Ok(())
}

enum MainError {
    Experiment(ExperimentError),
    Csv(CsvError),
}

impl From<ExperimentError> for MainError {
    fn from(e: ExperimentError) -> Self {
        MainError::Experiment(e)
    }
}

impl From<CsvError> for MainError {
    fn from(e: CsvError) -> Self {
        MainError::Csv(e)
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(MainError::Experiment(ExperimentError::Config(e))) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(MainError::Experiment(ExperimentError::Numerical(e))) => {
            eprintln!("numerical failure: {e}");
            ExitCode::from(3)
        }
        Err(MainError::Csv(CsvError::EmptyTable)) => {
            eprintln!("config error: experiment produced an empty table");
            ExitCode::from(2)
        }
        Err(MainError::Csv(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
    }
}
