//! Experiment orchestration: configuration, sweeps, reports and output
//! files.
//!
//! Every output file is a pure function of the configuration (and seed):
//! sweep cells run on fresh states, results are collected in input order,
//! and wall-clock timings are written only when `record_timing` is set.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::{kernel_from_env, CollisionBackend, CALIBRATED_B0};
use crate::error::{Error, Result};
use crate::integrator::{
    imex_step_1d, imex_step_homogeneous, run_relaxation, sod_kinetic, step_count, BoundaryCondition,
    DiagnosticRow, Mesh1D, RelaxationOptions, StepperConfig, Trajectory, DIAGNOSTICS_HEADER,
};
use crate::limits::{bkw, explicit_rk_euler_step, sod_euler, write_euler_trajectory, BkwParams, EulerState1D};
use crate::tableaux::{
    is_globally_stiffly_accurate, order_conditions, positivity_conditions, resolve_pair, validate_pair,
    ConditionReport, ImexPair, BUILTIN_SCHEMES,
};
use crate::velocity::{l1_distance, maxwellian, moments, write_snapshot, GridFunction, VelocityGrid2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Relaxation,
    Convergence,
    ApLimit,
    TableauReport,
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relaxation" | "relax" => Ok(Self::Relaxation),
            "convergence" | "converge" => Ok(Self::Convergence),
            "ap-limit" | "aplimit" => Ok(Self::ApLimit),
            "tableau-report" | "tableau" => Ok(Self::TableauReport),
            other => Err(Error::Config(format!(
                "unknown experiment `{other}` (relaxation, convergence, ap-limit, tableau-report)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Boltzmann,
    Bgk,
    None,
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "boltzmann" => Ok(Self::Boltzmann),
            "bgk" => Ok(Self::Bgk),
            "none" | "disabled" => Ok(Self::None),
            other => Err(Error::Config(format!("unknown backend `{other}` (boltzmann, bgk, none)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApMode {
    /// One homogeneous step per ε from BKW(0).
    Homogeneous,
    /// Sod-type Riemann problem against the Euler solver.
    Sod,
}

/// Run configuration, read from JSON. Missing fields take the defaults
/// below; `eps` and `dt` default per experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    pub nv: usize,
    pub v_max: f64,
    /// Builtin scheme name or path to a tableau file; `all` in tableau
    /// reports selects every builtin.
    pub scheme: String,
    pub backend: BackendKind,
    pub kappa: f64,
    pub b0: f64,
    pub eps: Option<Vec<f64>>,
    pub dt: Option<Vec<f64>>,
    pub t_end: f64,
    pub sigma: f64,
    pub out: PathBuf,
    pub seed: u64,
    /// Relative amplitude of the seeded multiplicative perturbation of the
    /// initial data; 0 runs the exact BKW problem.
    pub perturbation: f64,
    /// Write wall-clock timings (makes outputs non-reproducible).
    pub record_timing: bool,
    /// Worker threads for sweeps; 0 uses the global pool.
    pub workers: usize,
    /// Keep every k-th relaxation state in the output; 0 keeps the last.
    pub snapshot_every: usize,
    pub lambdas: Vec<f64>,
    pub ap_mode: ApMode,
    pub nx: usize,
    pub x_max: f64,
    pub steps_1d: usize,
    pub cfl: f64,
    pub boundary: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::Relaxation,
            nv: 32,
            v_max: 3.0 * std::f64::consts::PI,
            scheme: "IMEX-BE(2,2,4)".into(),
            backend: BackendKind::Boltzmann,
            kappa: 1.0,
            b0: CALIBRATED_B0,
            eps: None,
            dt: None,
            t_end: 2.0,
            sigma: 1.0,
            out: PathBuf::from("out"),
            seed: 0,
            perturbation: 0.0,
            record_timing: false,
            workers: 0,
            snapshot_every: 0,
            lambdas: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            ap_mode: ApMode::Homogeneous,
            nx: 100,
            x_max: 1.0,
            steps_1d: 100,
            cfl: 0.8,
            boundary: "free-flow".into(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn eps_list(&self) -> Vec<f64> {
        self.eps.clone().unwrap_or_else(|| match (self.experiment, self.ap_mode) {
            (ExperimentKind::ApLimit, ApMode::Homogeneous) => vec![1.0, 1e-2, 1e-4, 1e-8],
            (ExperimentKind::ApLimit, ApMode::Sod) => vec![1e-8],
            _ => vec![1.0],
        })
    }

    pub fn dt_list(&self) -> Vec<f64> {
        self.dt.clone().unwrap_or_else(|| match self.experiment {
            ExperimentKind::Convergence => vec![0.4, 0.2, 0.1, 0.05],
            ExperimentKind::ApLimit => vec![0.5],
            _ => vec![0.1],
        })
    }

    pub fn grid(&self) -> Result<VelocityGrid2D> {
        VelocityGrid2D::new(self.nv, self.v_max)
    }

    pub fn bkw_params(&self) -> Result<BkwParams> {
        BkwParams::new(self.sigma)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.bkw_params()?;
        let eps = self.eps_list();
        let dt = self.dt_list();
        if eps.is_empty() || dt.is_empty() {
            return Err(Error::Config("eps and dt lists must be nonempty".into()));
        }
        if eps.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(Error::Config(format!("eps values must be positive: {eps:?}")));
        }
        if dt.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::Config(format!("dt values must be positive: {dt:?}")));
        }
        if dt.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config(format!("dt values must be strictly decreasing: {dt:?}")));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::Config(format!("t_end must be positive, got {}", self.t_end)));
        }
        if !(self.kappa >= 1.0) || !(self.b0 > 0.0) {
            return Err(Error::Config("kappa must be >= 1 and b0 positive".into()));
        }
        if !(self.perturbation >= 0.0) || self.perturbation >= 1.0 {
            return Err(Error::Config("perturbation must lie in [0, 1)".into()));
        }
        if self.lambdas.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::Config("lambda values must be positive".into()));
        }
        if self.experiment == ExperimentKind::Relaxation && (eps.len() != 1 || dt.len() != 1) {
            return Err(Error::Config("a relaxation run takes a single eps and dt".into()));
        }
        if !(self.cfl > 0.0) || self.cfl > crate::integrator::CFL_LIMIT {
            return Err(Error::Config(format!("cfl must lie in (0, {}]", crate::integrator::CFL_LIMIT)));
        }
        self.boundary.parse::<BoundaryCondition>()?;
        Ok(())
    }

    pub fn schemes(&self) -> Result<Vec<ImexPair>> {
        if self.scheme == "all" {
            BUILTIN_SCHEMES.iter().map(|s| resolve_pair(s)).collect()
        } else {
            Ok(vec![resolve_pair(&self.scheme)?])
        }
    }

    pub fn pair(&self) -> Result<ImexPair> {
        if self.scheme == "all" {
            return Err(Error::Config("`all` is only valid for tableau reports".into()));
        }
        resolve_pair(&self.scheme)
    }

    /// Builds the collision backend, loading or computing the kernel table.
    pub fn backend(&self) -> Result<CollisionBackend> {
        let backend = match self.backend {
            BackendKind::Boltzmann => {
                CollisionBackend::boltzmann(Arc::new(kernel_from_env(&self.grid()?, self.b0)?))
            }
            BackendKind::Bgk => CollisionBackend::bgk(),
            BackendKind::None => return Ok(CollisionBackend::Disabled),
        };
        backend.with_kappa(self.kappa)
    }

    /// BKW(0), optionally perturbed node-wise by `1 + a·U(-1, 1)` drawn from
    /// the seeded generator.
    pub fn initial_state(&self) -> Result<GridFunction> {
        let grid = self.grid()?;
        let mut f = bkw(&grid, 0.0, &self.bkw_params()?);
        if self.perturbation > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            for x in f.values_mut() {
                *x *= 1.0 + self.perturbation * rng.gen_range(-1.0..1.0);
            }
        }
        Ok(f)
    }

    fn oracle(&self) -> Option<BkwParams> {
        (self.perturbation == 0.0).then(|| self.bkw_params().ok()).flatten()
    }

    fn mesh(&self) -> Result<Mesh1D> {
        Mesh1D::new(self.nx, self.x_max, self.boundary.parse()?)
    }

    fn pool(&self) -> Result<Option<rayon::ThreadPool>> {
        if self.workers == 0 {
            return Ok(None);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map(Some)
            .map_err(|e| Error::Config(format!("thread pool: {e}")))
    }
}

fn in_pool<T: Send>(pool: &Option<rayon::ThreadPool>, job: impl FnOnce() -> T + Send) -> T {
    match pool {
        Some(p) => p.install(job),
        None => job(),
    }
}

// ---------------------------------------------------------------------------
// Convergence

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceCell {
    pub eps: f64,
    pub dt: f64,
    /// `None` when the run failed; see `failure`.
    pub l1_error: Option<f64>,
    pub steps: usize,
    pub runtime_ns: u64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderFit {
    pub eps: f64,
    /// Least-squares slope of `log(error)` against `log(dt)`.
    pub order: f64,
    /// Standard error of the slope.
    pub residual: f64,
    pub points: usize,
    pub reliable: bool,
}

/// Fits with a slope standard error above this are flagged unreliable.
pub const FIT_RESIDUAL_LIMIT: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub scheme: String,
    pub cells: Vec<ConvergenceCell>,
    pub fits: Vec<OrderFit>,
}

/// Least-squares order from `(dt, error)` pairs.
pub fn fit_order(eps: f64, points: &[(f64, f64)]) -> OrderFit {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, e)| *e > 0.0 && e.is_finite())
        .map(|(d, e)| (d.ln(), e.ln()))
        .collect();
    let n = logs.len();
    if n < 2 {
        return OrderFit {
            eps,
            order: f64::NAN,
            residual: f64::NAN,
            points: n,
            reliable: false,
        };
    }
    let (slope, intercept, _) = crate::collision::linear_fit(&logs);
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let ssr: f64 = logs.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    let residual = if n > 2 {
        (ssr / (n - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    OrderFit {
        eps,
        order: slope,
        residual,
        points: n,
        reliable: residual <= FIT_RESIDUAL_LIMIT,
    }
}

pub fn run_convergence(cfg: &RunConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let pair = cfg.pair()?;
    let backend = cfg.backend()?;
    let grid = cfg.grid()?;
    let f0 = cfg.initial_state()?;
    let params = cfg.bkw_params()?;
    let exact = bkw(&grid, cfg.t_end, &params);
    let jobs: Vec<(f64, f64)> = cfg
        .eps_list()
        .iter()
        .flat_map(|&e| cfg.dt_list().into_iter().map(move |d| (e, d)))
        .collect();
    for &(_, dt) in &jobs {
        step_count(cfg.t_end, dt)?;
    }
    let pool = cfg.pool()?;
    let cells: Vec<ConvergenceCell> = in_pool(&pool, || {
        jobs.par_iter()
            .map(|&(eps, dt)| {
                let steps = step_count(cfg.t_end, dt).expect("checked above");
                let start = Instant::now();
                let outcome = StepperConfig::new(pair.clone(), dt, eps, backend.clone())
                    .and_then(|sc| run_relaxation(&f0, &sc, cfg.t_end, &RelaxationOptions::default()))
                    .and_then(|tr| l1_distance(tr.final_state(), &exact));
                let elapsed = start.elapsed().as_nanos() as u64;
                let runtime_ns = if cfg.record_timing { elapsed } else { 0 };
                match outcome {
                    Ok(err) => ConvergenceCell {
                        eps,
                        dt,
                        l1_error: Some(err),
                        steps,
                        runtime_ns,
                        failure: None,
                    },
                    Err(e) => ConvergenceCell {
                        eps,
                        dt,
                        l1_error: None,
                        steps,
                        runtime_ns,
                        failure: Some(e.to_string()),
                    },
                }
            })
            .collect()
    });
    let fits = cfg
        .eps_list()
        .iter()
        .map(|&eps| {
            let pts: Vec<(f64, f64)> = cells
                .iter()
                .filter(|c| c.eps == eps)
                .filter_map(|c| c.l1_error.map(|e| (c.dt, e)))
                .collect();
            fit_order(eps, &pts)
        })
        .collect();
    Ok(ConvergenceReport {
        scheme: pair.name().to_string(),
        cells,
        fits,
    })
}

// ---------------------------------------------------------------------------
// AP limit

#[derive(Debug, Clone)]
pub struct ApHomogeneousRow {
    pub eps: f64,
    pub distance: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SodComparison {
    pub eps: f64,
    pub dt: f64,
    pub steps: usize,
    pub kinetic: EulerState1D,
    pub euler: EulerState1D,
    pub l1_rho: f64,
    pub l1_momentum: f64,
    pub l1_energy: f64,
}

#[derive(Debug, Clone)]
pub enum ApLimitReport {
    Homogeneous {
        scheme: String,
        dt: f64,
        rows: Vec<ApHomogeneousRow>,
        /// Distances are nonincreasing along the ε list.
        monotone: bool,
    },
    Sod {
        scheme: String,
        runs: Vec<std::result::Result<SodComparison, String>>,
    },
}

pub fn run_ap_limit(cfg: &RunConfig) -> Result<ApLimitReport> {
    cfg.validate()?;
    let pair = cfg.pair()?;
    let backend = cfg.backend()?;
    match cfg.ap_mode {
        ApMode::Homogeneous => {
            let f0 = cfg.initial_state()?;
            let m0 = maxwellian(&moments(&f0)?, f0.grid())?;
            let dt = cfg.dt_list()[0];
            let rows: Vec<ApHomogeneousRow> = cfg
                .eps_list()
                .iter()
                .map(|&eps| {
                    let r = StepperConfig::new(pair.clone(), dt, eps, backend.clone())
                        .and_then(|sc| imex_step_homogeneous(&f0, &sc))
                        .and_then(|f1| l1_distance(&f1, &m0));
                    match r {
                        Ok(d) => ApHomogeneousRow {
                            eps,
                            distance: Some(d),
                            failure: None,
                        },
                        Err(e) => ApHomogeneousRow {
                            eps,
                            distance: None,
                            failure: Some(e.to_string()),
                        },
                    }
                })
                .collect();
            let monotone = rows.windows(2).all(|w| match (w[0].distance, w[1].distance) {
                (Some(a), Some(b)) => b <= a,
                _ => false,
            });
            Ok(ApLimitReport::Homogeneous {
                scheme: pair.name().to_string(),
                dt,
                rows,
                monotone,
            })
        }
        ApMode::Sod => {
            let grid = cfg.grid()?;
            let mesh = cfg.mesh()?;
            let dt = cfg.cfl * mesh.dx() / grid.v_max();
            let runs = cfg
                .eps_list()
                .iter()
                .map(|&eps| {
                    sod_comparison(&pair, &backend, &grid, &mesh, eps, dt, cfg.steps_1d).map_err(|e| e.to_string())
                })
                .collect();
            Ok(ApLimitReport::Sod {
                scheme: pair.name().to_string(),
                runs,
            })
        }
    }
}

/// Kinetic and Euler solutions of the Sod problem after `steps` steps.
pub fn sod_comparison(
    pair: &ImexPair,
    backend: &CollisionBackend,
    grid: &VelocityGrid2D,
    mesh: &Mesh1D,
    eps: f64,
    dt: f64,
    steps: usize,
) -> Result<SodComparison> {
    let cfg = StepperConfig::new(pair.clone(), dt, eps, backend.clone())?;
    let mut kinetic = sod_kinetic(mesh, grid)?;
    let mut euler = sod_euler(mesh);
    for _ in 0..steps {
        kinetic = imex_step_1d(&kinetic, &cfg)?.0;
        euler = explicit_rk_euler_step(&euler, dt, pair.explicit(), grid)?;
    }
    let kinetic = kinetic.to_euler();
    let l1 = |k: usize| -> f64 {
        kinetic
            .cells
            .iter()
            .zip(&euler.cells)
            .map(|(a, b)| (a[k] - b[k]).abs())
            .sum::<f64>()
            * mesh.dx()
    };
    Ok(SodComparison {
        eps,
        dt,
        steps,
        l1_rho: l1(0),
        l1_momentum: l1(1),
        l1_energy: l1(2),
        kinetic,
        euler,
    })
}

// ---------------------------------------------------------------------------
// Relaxation and tableau reports

#[derive(Debug, Clone)]
pub struct RelaxationReport {
    pub scheme: String,
    pub eps: f64,
    pub dt: f64,
    pub trajectory: Trajectory,
}

pub fn run_relaxation_experiment(cfg: &RunConfig) -> Result<RelaxationReport> {
    cfg.validate()?;
    let pair = cfg.pair()?;
    let (eps, dt) = (cfg.eps_list()[0], cfg.dt_list()[0]);
    let mut sc = StepperConfig::new(pair.clone(), dt, eps, cfg.backend()?)?;
    sc.positivity_report = true;
    let opts = RelaxationOptions {
        snapshot_every: cfg.snapshot_every,
        oracle: cfg.oracle(),
    };
    let trajectory = run_relaxation(&cfg.initial_state()?, &sc, cfg.t_end, &opts)?;
    Ok(RelaxationReport {
        scheme: pair.name().to_string(),
        eps,
        dt,
        trajectory,
    })
}

#[derive(Debug, Clone)]
pub struct SchemeConditions {
    pub scheme: String,
    pub checks: Vec<ConditionReport>,
}

#[derive(Debug, Clone)]
pub struct TableauReport {
    pub schemes: Vec<SchemeConditions>,
}

pub fn tableau_report(cfg: &RunConfig) -> Result<TableauReport> {
    let mut schemes = Vec::new();
    for pair in cfg.schemes()? {
        let mut checks = vec![validate_pair(&pair), is_globally_stiffly_accurate(&pair)];
        let order = pair.label().order.clamp(1, 3);
        checks.push(order_conditions(&pair, order)?);
        for &lambda in &cfg.lambdas {
            match positivity_conditions(&pair, lambda) {
                Ok(r) => checks.push(r),
                Err(Error::SingularMatrix { index, value }) => {
                    checks.push(ConditionReport {
                        name: format!("positivity (lambda = {lambda})"),
                        satisfied: false,
                        worst_violation: f64::INFINITY,
                        details: Vec::new(),
                        notes: vec![format!("singular at stage {index} ({value:e})")],
                    });
                }
                Err(e) => return Err(e),
            }
        }
        schemes.push(SchemeConditions {
            scheme: pair.name().to_string(),
            checks,
        });
    }
    Ok(TableauReport { schemes })
}

// ---------------------------------------------------------------------------
// Output

#[derive(Debug, Clone)]
pub enum Report {
    Relaxation(RelaxationReport),
    Convergence(ConvergenceReport),
    ApLimit(ApLimitReport),
    Tableau(TableauReport),
}

impl Report {
    /// `true` when a non-sweep run ended in a numerical blow-up.
    pub fn blew_up(&self) -> bool {
        match self {
            Report::ApLimit(ApLimitReport::Sod { runs, .. }) => runs
                .iter()
                .any(|r| matches!(r, Err(m) if m.starts_with("numerical blow-up"))),
            _ => false,
        }
    }
}

/// Runs the configured experiment.
pub fn run(cfg: &RunConfig) -> Result<Report> {
    cfg.validate()?;
    Ok(match cfg.experiment {
        ExperimentKind::Relaxation => Report::Relaxation(run_relaxation_experiment(cfg)?),
        ExperimentKind::Convergence => Report::Convergence(run_convergence(cfg)?),
        ExperimentKind::ApLimit => Report::ApLimit(run_ap_limit(cfg)?),
        ExperimentKind::TableauReport => Report::Tableau(tableau_report(cfg)?),
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_else(|| "NaN".into())
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub const CONVERGENCE_HEADER: &str = "epsilon,dt,l1_error,steps,runtime_ns";
pub const CONDITIONS_HEADER: &str = "scheme,check,condition,index,value,violation,satisfied";

/// Writes the report's CSV files and `summary.txt` into `dir`; returns the
/// written paths in order.
pub fn emit_outputs(report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut summary = String::new();
    match report {
        Report::Convergence(r) => {
            let mut csv = format!("{CONVERGENCE_HEADER}\n");
            for c in &r.cells {
                let _ = writeln!(
                    csv,
                    "{:e},{:e},{},{},{}",
                    c.eps,
                    c.dt,
                    fmt_opt(c.l1_error),
                    c.steps,
                    c.runtime_ns
                );
            }
            written.push(write_file(dir, "convergence.csv", &csv)?);
            let mut orders = String::from("epsilon,order,slope_stderr,points,reliable\n");
            let _ = writeln!(summary, "convergence study, scheme {}", r.scheme);
            for f in &r.fits {
                let _ = writeln!(
                    orders,
                    "{:e},{:e},{:e},{},{}",
                    f.eps, f.order, f.residual, f.points, f.reliable
                );
                let _ = writeln!(
                    summary,
                    "eps = {:e}: observed order {:.3} (slope std. error {:.3e}, {} points){}",
                    f.eps,
                    f.order,
                    f.residual,
                    f.points,
                    if f.reliable { "" } else { " [unreliable]" }
                );
            }
            for c in r.cells.iter().filter(|c| c.failure.is_some()) {
                let _ = writeln!(
                    summary,
                    "eps = {:e}, dt = {:e}: {}",
                    c.eps,
                    c.dt,
                    c.failure.as_deref().unwrap_or_default()
                );
            }
            written.push(write_file(dir, "orders.csv", &orders)?);
        }
        Report::Tableau(r) => {
            let mut csv = format!("{CONDITIONS_HEADER}\n");
            for s in &r.schemes {
                let _ = writeln!(summary, "{}", s.scheme);
                for check in &s.checks {
                    let _ = writeln!(summary, "  {check}");
                    for note in &check.notes {
                        let _ = writeln!(summary, "    {note}");
                    }
                    for d in &check.details {
                        let index: Vec<String> = d.index.iter().map(|i| i.to_string()).collect();
                        let _ = writeln!(
                            csv,
                            "{},{},{},{},{:e},{:e},{}",
                            s.scheme,
                            check.name,
                            d.label,
                            index.join(";"),
                            d.value,
                            d.violation,
                            d.violation <= crate::tableaux::CONDITION_TOL
                        );
                    }
                }
            }
            written.push(write_file(dir, "conditions.csv", &csv)?);
        }
        Report::Relaxation(r) => {
            let mut csv = format!("{DIAGNOSTICS_HEADER}\n");
            for row in &r.trajectory.diagnostics {
                let _ = writeln!(csv, "{}", row.to_csv());
            }
            written.push(write_file(dir, "diagnostics.csv", &csv)?);
            for (k, (t, f)) in r.trajectory.snapshots.iter().enumerate().skip(1) {
                let name = format!("snapshot_{k:04}.csv");
                let path = dir.join(&name);
                write_snapshot(f, &path)?;
                let _ = writeln!(summary, "snapshot {name}: t = {t:e}");
                written.push(path);
            }
            let last: Option<&DiagnosticRow> = r.trajectory.diagnostics.last();
            let _ = writeln!(
                summary,
                "relaxation, scheme {}, eps = {:e}, dt = {:e}, {} steps, {} collision evaluations",
                r.scheme,
                r.eps,
                r.dt,
                r.trajectory.diagnostics.len(),
                r.trajectory.collision_evaluations
            );
            if let Some(d) = last {
                let _ = writeln!(
                    summary,
                    "final: t = {:e}, rho drift {:e}, w drift {:e}, E drift {:e}, entropy {:e}, min f {:e}, L1 error {}",
                    d.t,
                    d.rho_drift,
                    d.w_drift,
                    d.e_drift,
                    d.entropy,
                    d.min_f,
                    fmt_opt(d.l1_error)
                );
            }
        }
        Report::ApLimit(ApLimitReport::Homogeneous {
            scheme,
            dt,
            rows,
            monotone,
        }) => {
            let mut csv = String::from("epsilon,l1_to_equilibrium\n");
            for row in rows {
                let _ = writeln!(csv, "{:e},{}", row.eps, fmt_opt(row.distance));
            }
            written.push(write_file(dir, "aplimit.csv", &csv)?);
            let _ = writeln!(summary, "AP limit (homogeneous), scheme {scheme}, dt = {dt:e}");
            for row in rows {
                let _ = writeln!(
                    summary,
                    "eps = {:e}: distance to M[f0] {}{}",
                    row.eps,
                    fmt_opt(row.distance),
                    row.failure.as_ref().map(|f| format!(" ({f})")).unwrap_or_default()
                );
            }
            let _ = writeln!(summary, "monotone in eps: {monotone}");
        }
        Report::ApLimit(ApLimitReport::Sod { scheme, runs }) => {
            let mut csv = String::from("epsilon,x,rho_kinetic,rho_euler,m_kinetic,m_euler,e_kinetic,e_euler\n");
            let _ = writeln!(summary, "AP limit (Sod), scheme {scheme}");
            for run in runs {
                match run {
                    Ok(c) => {
                        for (i, (k, e)) in c.kinetic.cells.iter().zip(&c.euler.cells).enumerate() {
                            let _ = writeln!(
                                csv,
                                "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                                c.eps,
                                c.kinetic.mesh.center(i),
                                k[0],
                                e[0],
                                k[1],
                                e[1],
                                k[2],
                                e[2]
                            );
                        }
                        let name = format!("euler_eps{:e}.csv", c.eps);
                        let path = dir.join(&name);
                        write_euler_trajectory(&path, &[(c.dt * c.steps as f64, c.euler.clone())])?;
                        written.push(path);
                        let _ = writeln!(
                            summary,
                            "eps = {:e}, dt = {:e}, {} steps: L1 rho {:e}, L1 momentum {:e}, L1 energy {:e}",
                            c.eps, c.dt, c.steps, c.l1_rho, c.l1_momentum, c.l1_energy
                        );
                    }
                    Err(e) => {
                        let _ = writeln!(summary, "run failed: {e}");
                    }
                }
            }
            written.push(write_file(dir, "aplimit.csv", &csv)?);
        }
    }
    written.push(write_file(dir, "summary.txt", &summary)?);
    Ok(written)
}

/// Byte contents of every file in `dir`, keyed by name.
pub fn read_outputs(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_file() {
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            out.insert(entry.file_name().to_string_lossy().into_owned(), bytes);
        }
    }
    Ok(out)
}
