use std::path::PathBuf;
use std::process::ExitCode;

use apkinetic::harness::{emit_outputs, run, BackendKind, ExperimentKind, Report, RunConfig};
use apkinetic::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "apkinetic", version, about = "AP IMEX Runge-Kutta experiments for the Boltzmann equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Relaxation of BKW initial data with diagnostics.
    Relax(Common),
    /// Time-step convergence sweep against the BKW solution.
    Converge(Common),
    /// Behaviour of one step (or a Sod run) as eps -> 0.
    Aplimit(Common),
    /// Structural, order and positivity checks of IMEX pairs.
    Tableau(Common),
    /// Runs the experiment named in the config or by --experiment.
    Run(Common),
    /// Prints the default configuration as JSON.
    DefaultConfig,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    nv: Option<usize>,
    #[arg(long)]
    vmax: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Comma-separated list.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Comma-separated, strictly decreasing list.
    #[arg(long, value_delimiter = ',')]
    dt: Option<Vec<f64>>,
    #[arg(long)]
    tend: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    perturbation: Option<f64>,
    /// homogeneous or sod.
    #[arg(long)]
    ap_mode: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    record_timing: bool,
}

fn build_config(common: &Common, fixed: Option<ExperimentKind>) -> Result<RunConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(kind) = fixed {
        if common.experiment.is_some() {
            return Err(Error::Config("--experiment is only accepted by `run`".into()));
        }
        cfg.experiment = kind;
    } else if let Some(e) = &common.experiment {
        cfg.experiment = e.parse()?;
    }
    if let Some(v) = &common.scheme {
        cfg.scheme = v.clone();
    }
    if let Some(v) = &common.backend {
        cfg.backend = v.parse::<BackendKind>()?;
    }
    if let Some(v) = common.nv {
        cfg.nv = v;
    }
    if let Some(v) = common.vmax {
        cfg.v_max = v;
    }
    if let Some(v) = common.kappa {
        cfg.kappa = v;
    }
    if let Some(v) = &common.eps {
        cfg.eps = Some(v.clone());
    }
    if let Some(v) = &common.dt {
        cfg.dt = Some(v.clone());
    }
    if let Some(v) = common.tend {
        cfg.t_end = v;
    }
    if let Some(v) = &common.out {
        cfg.out = v.clone();
    }
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = common.perturbation {
        cfg.perturbation = v;
    }
    if let Some(v) = &common.ap_mode {
        cfg.ap_mode = serde_json::from_value(serde_json::Value::String(v.clone()))
            .map_err(|_| Error::Config(format!("unknown ap mode `{v}` (homogeneous, sod)")))?;
    }
    if let Some(v) = common.workers {
        cfg.workers = v;
    }
    if common.record_timing {
        cfg.record_timing = true;
    }
    if fixed == Some(ExperimentKind::TableauReport) && common.scheme.is_none() && common.config.is_none() {
        cfg.scheme = "all".into();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(common: &Common, fixed: Option<ExperimentKind>) -> Result<Report, Error> {
    let cfg = build_config(common, fixed)?;
    let report = run(&cfg)?;
    let files = emit_outputs(&report, &cfg.out)?;
    let summary = std::fs::read_to_string(cfg.out.join("summary.txt")).map_err(|e| Error::Io {
        path: cfg.out.join("summary.txt"),
        source: e,
    })?;
    print!("{summary}");
    eprintln!("wrote {} files to {}", files.len(), cfg.out.display());
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, fixed) = match cli.command {
        Command::Relax(c) => (c, Some(ExperimentKind::Relaxation)),
        Command::Converge(c) => (c, Some(ExperimentKind::Convergence)),
        Command::Aplimit(c) => (c, Some(ExperimentKind::ApLimit)),
        Command::Tableau(c) => (c, Some(ExperimentKind::TableauReport)),
        Command::Run(c) => (c, None),
        Command::DefaultConfig => {
            println!("{}", RunConfig::default().to_json());
            return ExitCode::SUCCESS;
        }
    };
    match execute(&common, fixed) {
        Ok(report) if report.blew_up() => ExitCode::from(3),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else if e.is_blow_up() {
                ExitCode::from(3)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
