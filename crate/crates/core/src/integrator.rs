//! IMEX Runge-Kutta stepper for the penalised Boltzmann equation
//!
//! ```text
//! ∂_t f + v_x ∂_x f = (μ/ε) g(f) + (μ/ε)(M[f] - f)
//! ```
//!
//! with the `g` and transport terms treated explicitly and the relaxation
//! term implicitly. The stage Maxwellians come from the explicit moment
//! scheme, so every implicit stage is a pointwise linear solve.

use rayon::prelude::*;

use crate::collision::CollisionBackend;
use crate::error::{Error, Result};
use crate::limits::{flux_divergence, half_fluxes, EulerState1D};
use crate::tableaux::{positivity_conditions, ConditionReport, ImexPair};
use crate::velocity::{
    entropy, l1_distance, maxwellian, moments, Conserved, GridFunction, Moments, VelocityGrid2D,
};

/// Largest admissible `v_max Δt / Δx`.
pub const CFL_LIMIT: f64 = 0.9;

/// Stage or output values beyond this magnitude count as a blow-up.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct StepperConfig {
    pub pair: ImexPair,
    pub dt: f64,
    pub eps: f64,
    pub backend: CollisionBackend,
    /// Evaluate the positivity conditions at each step's `λ`.
    pub positivity_report: bool,
}

impl StepperConfig {
    pub fn new(pair: ImexPair, dt: f64, eps: f64, backend: CollisionBackend) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Config(format!("epsilon must be positive, got {eps}")));
        }
        Ok(Self {
            pair,
            dt,
            eps,
            backend,
            positivity_report: false,
        })
    }

    /// `λ = ε / (μ Δt)`.
    pub fn lambda(&self, mu: f64) -> f64 {
        self.eps / (mu * self.dt)
    }
}

/// Per-step bookkeeping returned alongside the new state.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub lambda: f64,
    pub mu: f64,
    pub collision_evaluations: usize,
    pub positivity: Option<ConditionReport>,
}

/// Stage data of one homogeneous step.
#[derive(Debug, Clone)]
pub struct StageWorkspace {
    pub stages: Vec<GridFunction>,
    pub moments: Vec<Moments>,
    pub maxwellians: Vec<GridFunction>,
    /// `g(F_j)`, present only for stages whose explicit term is used.
    pub deviations: Vec<Option<GridFunction>>,
    explicit_terms: Vec<Option<GridFunction>>,
    implicit_terms: Vec<GridFunction>,
    mu: f64,
}

impl StageWorkspace {
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `f + Δt Σ_i [w̃_i (μ/ε) g_i + w_i (μ/ε)(M_i - F_i)]`, the output level
    /// written out in full even for pairs where it reduces to `F_ν`.
    pub fn general_final_level(&self, f: &GridFunction, pair: &ImexPair, dt: f64) -> GridFunction {
        combine_final(f, pair, dt, &self.explicit_terms, &[], &self.implicit_terms)
    }
}

fn explicit_column_needed(pair: &ImexPair, j: usize) -> bool {
    let e = pair.explicit();
    let nu = pair.stages();
    (j + 1..nu).any(|r| e.a(r, j) != 0.0) || (!pair.is_gsa() && e.weights()[j] != 0.0)
}

fn check_finite(f: &GridFunction, stage: Option<usize>, lambda: f64) -> Result<()> {
    if f
        .values()
        .iter()
        .any(|x| !x.is_finite() || x.abs() > BLOW_UP_THRESHOLD)
    {
        return Err(Error::BlowUp { stage, lambda });
    }
    Ok(())
}

/// Explicit accumulation of stage `i` and the pointwise implicit solve.
/// Returns `(F_i, (μ/ε)(M_i - F_i))`.
#[allow(clippy::too_many_arguments)]
fn solve_stage(
    f: &GridFunction,
    i: usize,
    pair: &ImexPair,
    dt: f64,
    eps: f64,
    mu: f64,
    explicit_terms: &[Option<GridFunction>],
    transport: &[Option<GridFunction>],
    implicit_terms: &[GridFunction],
    m_i: &GridFunction,
) -> (GridFunction, GridFunction) {
    let (e, a) = (pair.explicit(), pair.implicit());
    let mut rhs = f.clone();
    for j in 0..i {
        let ae = e.a(i, j);
        if ae != 0.0 {
            if let Some(ej) = &explicit_terms[j] {
                rhs.axpy(dt * ae, ej);
            }
            if let Some(tj) = transport.get(j).and_then(|t| t.as_ref()) {
                rhs.axpy(-dt * ae, tj);
            }
        }
        let ai = a.a(i, j);
        if ai != 0.0 {
            rhs.axpy(dt * ai, &implicit_terms[j]);
        }
    }
    let aii = a.a(i, i);
    // (1 + Δt a_ii μ/ε) F = rhs + Δt a_ii (μ/ε) M, with the relaxation term
    // (μ/ε)(M - F) = μ (M - rhs) / (ε + Δt a_ii μ) kept bounded as ε → 0.
    let coef = if mu == 0.0 { 0.0 } else { mu / (eps + dt * aii * mu) };
    let mut k = m_i.clone();
    k.axpy(-1.0, &rhs);
    let k = k.scaled(coef);
    let stage = if aii == 0.0 {
        rhs
    } else {
        let mut s = rhs;
        s.axpy(dt * aii, &k);
        s
    };
    (stage, k)
}

fn combine_final(
    f: &GridFunction,
    pair: &ImexPair,
    dt: f64,
    explicit_terms: &[Option<GridFunction>],
    transport: &[Option<GridFunction>],
    implicit_terms: &[GridFunction],
) -> GridFunction {
    let mut out = f.clone();
    let we = pair.explicit().weights();
    let wi = pair.implicit().weights();
    for j in 0..pair.stages() {
        if we[j] != 0.0 {
            if let Some(ej) = &explicit_terms[j] {
                out.axpy(dt * we[j], ej);
            }
            if let Some(tj) = transport.get(j).and_then(|t| t.as_ref()) {
                out.axpy(-dt * we[j], tj);
            }
        }
        if wi[j] != 0.0 {
            out.axpy(dt * wi[j], &implicit_terms[j]);
        }
    }
    out
}

/// `(μ/ε) g(F)` against the stage equilibrium `m_eq`.
fn explicit_term(
    backend: &CollisionBackend,
    stage: &GridFunction,
    m_eq: &GridFunction,
    mu: f64,
    eps: f64,
) -> Result<(GridFunction, GridFunction)> {
    let split = backend.split_with(stage, m_eq, mu)?;
    let term = split.g.scaled(mu / eps);
    Ok((term, split.g))
}

fn positivity_for(cfg: &StepperConfig, lambda: f64) -> Option<ConditionReport> {
    if cfg.positivity_report && lambda.is_finite() && lambda > 0.0 {
        positivity_conditions(&cfg.pair, lambda).ok()
    } else {
        None
    }
}

/// One space-homogeneous step.
pub fn imex_step_homogeneous(f: &GridFunction, cfg: &StepperConfig) -> Result<GridFunction> {
    imex_step_homogeneous_detailed(f, cfg).map(|(out, _, _)| out)
}

/// One space-homogeneous step, also returning the stage data.
pub fn imex_step_homogeneous_detailed(
    f: &GridFunction,
    cfg: &StepperConfig,
) -> Result<(GridFunction, StageWorkspace, StepReport)> {
    let pair = &cfg.pair;
    let nu = pair.stages();
    let m0 = moments(f)?;
    let mu = crate::collision::choose_mu(f, &cfg.backend)?;
    let lambda = cfg.lambda(mu);
    // Collisions conserve the moments, so every stage shares M[f^n].
    let m_eq = maxwellian(&m0, f.grid())?;

    let mut ws = StageWorkspace {
        stages: Vec::with_capacity(nu),
        moments: vec![m0; nu],
        maxwellians: vec![m_eq.clone(); nu],
        deviations: vec![None; nu],
        explicit_terms: vec![None; nu],
        implicit_terms: Vec::with_capacity(nu),
        mu,
    };
    let mut evaluations = 0;
    for i in 0..nu {
        let (stage, k) = solve_stage(
            f,
            i,
            pair,
            cfg.dt,
            cfg.eps,
            mu,
            &ws.explicit_terms,
            &[],
            &ws.implicit_terms,
            &m_eq,
        );
        check_finite(&stage, Some(i + 1), lambda)?;
        if explicit_column_needed(pair, i) && !cfg.backend.is_disabled() {
            let (term, g) = explicit_term(&cfg.backend, &stage, &m_eq, mu, cfg.eps)?;
            evaluations += 1;
            ws.explicit_terms[i] = Some(term);
            ws.deviations[i] = Some(g);
        }
        ws.implicit_terms.push(k);
        ws.stages.push(stage);
    }
    let out = if pair.is_gsa() {
        ws.stages[nu - 1].clone()
    } else {
        combine_final(f, pair, cfg.dt, &ws.explicit_terms, &[], &ws.implicit_terms)
    };
    check_finite(&out, None, lambda)?;
    let report = StepReport {
        lambda,
        mu,
        collision_evaluations: evaluations,
        positivity: positivity_for(cfg, lambda),
    };
    Ok((out, ws, report))
}

// ---------------------------------------------------------------------------
// One space dimension

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    Periodic,
    /// Zero-gradient ghost cells.
    FreeFlow,
}

impl std::str::FromStr for BoundaryCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(Self::Periodic),
            "free-flow" | "freeflow" | "outflow" => Ok(Self::FreeFlow),
            other => Err(Error::Config(format!("unknown boundary condition `{other}`"))),
        }
    }
}

/// Uniform cells on `[0, x_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    cells: usize,
    x_max: f64,
    boundary: BoundaryCondition,
}

impl Mesh1D {
    pub fn new(cells: usize, x_max: f64, boundary: BoundaryCondition) -> Result<Self> {
        if cells < 2 {
            return Err(Error::Config(format!("need at least 2 cells, got {cells}")));
        }
        if !(x_max > 0.0) || !x_max.is_finite() {
            return Err(Error::Config(format!("domain length must be positive, got {x_max}")));
        }
        Ok(Self {
            cells,
            x_max,
            boundary,
        })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn boundary(&self) -> BoundaryCondition {
        self.boundary
    }

    pub fn dx(&self) -> f64 {
        self.x_max / self.cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx()
    }

    fn left(&self, i: usize) -> usize {
        match (i, self.boundary) {
            (0, BoundaryCondition::Periodic) => self.cells - 1,
            (0, BoundaryCondition::FreeFlow) => 0,
            _ => i - 1,
        }
    }

    fn right(&self, i: usize) -> usize {
        match self.boundary {
            BoundaryCondition::Periodic => (i + 1) % self.cells,
            BoundaryCondition::FreeFlow => (i + 1).min(self.cells - 1),
        }
    }
}

#[derive(Debug, Clone)]
pub struct KineticState1D {
    pub mesh: Mesh1D,
    pub cells: Vec<GridFunction>,
}

impl KineticState1D {
    pub fn new(mesh: Mesh1D, cells: Vec<GridFunction>) -> Result<Self> {
        if cells.len() != mesh.cells() {
            return Err(Error::Config(format!(
                "{} cell distributions for {} cells",
                cells.len(),
                mesh.cells()
            )));
        }
        if let Some(first) = cells.first() {
            if cells.iter().any(|c| !c.grid().same_as(first.grid())) {
                return Err(Error::GridMismatch("cells use different velocity grids".into()));
            }
        }
        Ok(Self { mesh, cells })
    }

    /// Local Maxwellians with the moments of an Euler state.
    pub fn from_euler(state: &EulerState1D, grid: &VelocityGrid2D) -> Result<Self> {
        let cells = state
            .cells
            .iter()
            .map(|u| {
                let m = Moments::from_conserved(&Conserved {
                    mass: u[0],
                    momentum: [u[1], 0.0],
                    energy: u[2],
                })?;
                maxwellian(&m, grid)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(state.mesh.clone(), cells)
    }

    pub fn grid(&self) -> &VelocityGrid2D {
        self.cells[0].grid()
    }

    pub fn cfl(&self, dt: f64) -> f64 {
        self.grid().v_max() * dt / self.mesh.dx()
    }

    /// Cell moments `(ρ, ρw_x, E)`.
    pub fn euler_moments(&self) -> Vec<[f64; 3]> {
        self.cells
            .iter()
            .map(|c| {
                let u = c.conserved();
                [u.mass, u.momentum[0], u.energy]
            })
            .collect()
    }

    pub fn to_euler(&self) -> EulerState1D {
        EulerState1D {
            mesh: self.mesh.clone(),
            cells: self.euler_moments(),
        }
    }
}

/// Upwind `v_x ∂_x F` per velocity node, one entry per cell.
pub fn upwind_transport(cells: &[GridFunction], mesh: &Mesh1D) -> Vec<GridFunction> {
    let grid = *cells[0].grid();
    let n = grid.n();
    let xs = grid.coords();
    let inv_dx = 1.0 / mesh.dx();
    (0..cells.len())
        .map(|i| {
            let here = cells[i].values();
            let left = cells[mesh.left(i)].values();
            let right = cells[mesh.right(i)].values();
            let mut out = vec![0.0; grid.len()];
            for (jx, &vx) in xs.iter().enumerate() {
                let row = jx * n..(jx + 1) * n;
                let o = &mut out[row.clone()];
                if vx > 0.0 {
                    for ((o, h), l) in o.iter_mut().zip(&here[row.clone()]).zip(&left[row.clone()]) {
                        *o = vx * (h - l) * inv_dx;
                    }
                } else if vx < 0.0 {
                    for ((o, h), r) in o.iter_mut().zip(&here[row.clone()]).zip(&right[row.clone()]) {
                        *o = vx * (r - h) * inv_dx;
                    }
                }
            }
            GridFunction::from_values(grid, out).expect("grid-sized buffer")
        })
        .collect()
}

/// Moment divergence `∫ φ v_x ∂_x F dv` of the upwind transport, per cell.
pub fn transport_moment_divergence(cells: &[GridFunction], mesh: &Mesh1D) -> Vec<[f64; 3]> {
    let (plus, minus): (Vec<_>, Vec<_>) = cells.iter().map(half_fluxes).unzip();
    flux_divergence(&plus, &minus, mesh)
}

/// Moment-scheme prediction of the stage moments,
/// `p_i = m(f^n) - Δt Σ_{j<i} ã_ij D_j`, where `divergences[j]` holds the
/// per-cell `D_j` (empty in homogeneous mode).
pub fn stage_moments_explicit(
    base: &[[f64; 3]],
    pair: &ImexPair,
    dt: f64,
    stage: usize,
    divergences: &[Option<Vec<[f64; 3]>>],
) -> Result<Vec<Moments>> {
    let e = pair.explicit();
    base.iter()
        .enumerate()
        .map(|(cell, u)| {
            let mut p = *u;
            for j in 0..stage {
                let a = e.a(stage, j);
                if a == 0.0 {
                    continue;
                }
                if let Some(Some(d)) = divergences.get(j) {
                    for k in 0..3 {
                        p[k] -= dt * a * d[cell][k];
                    }
                }
            }
            Moments::from_conserved(&Conserved {
                mass: p[0],
                momentum: [p[1], 0.0],
                energy: p[2],
            })
            .map_err(|err| match err {
                Error::DegenerateState { rho } => Error::DegenerateState { rho },
                other => Error::InvalidState {
                    cell,
                    reason: other.to_string(),
                },
            })
        })
        .collect()
}

/// One step of the kinetic solver on a 1D mesh.
pub fn imex_step_1d(state: &KineticState1D, cfg: &StepperConfig) -> Result<(KineticState1D, StepReport)> {
    let cfl = state.cfl(cfg.dt);
    if cfl > CFL_LIMIT {
        return Err(Error::Config(format!(
            "CFL number {cfl:.3} exceeds {CFL_LIMIT} (dt = {}, dx = {})",
            cfg.dt,
            state.mesh.dx()
        )));
    }
    let pair = &cfg.pair;
    let nu = pair.stages();
    let nx = state.mesh.cells();
    let grid = *state.grid();
    let base = state.euler_moments();
    let mus: Vec<f64> = state
        .cells
        .iter()
        .map(|c| crate::collision::choose_mu(c, &cfg.backend))
        .collect::<Result<_>>()?;
    let lambda = mus
        .iter()
        .map(|&m| cfg.lambda(m))
        .fold(f64::INFINITY, f64::min);

    // Indexed [stage][cell].
    let mut stages: Vec<Vec<GridFunction>> = Vec::with_capacity(nu);
    let mut explicit: Vec<Vec<Option<GridFunction>>> = Vec::with_capacity(nu);
    let mut transport: Vec<Option<Vec<GridFunction>>> = Vec::with_capacity(nu);
    let mut divergences: Vec<Option<Vec<[f64; 3]>>> = Vec::with_capacity(nu);
    let mut implicit: Vec<Vec<GridFunction>> = Vec::with_capacity(nu);
    let mut evaluations = 0;

    for i in 0..nu {
        let predicted = stage_moments_explicit(&base, pair, cfg.dt, i, &divergences)?;
        let results: Vec<Result<(GridFunction, GridFunction, Option<GridFunction>)>> = (0..nx)
            .into_par_iter()
            .map(|c| {
                let m_i = maxwellian(&predicted[c], &grid)?;
                let e_c: Vec<Option<GridFunction>> = explicit.iter().map(|s| s[c].clone()).collect();
                let t_c: Vec<Option<GridFunction>> = transport
                    .iter()
                    .map(|t| t.as_ref().map(|v| v[c].clone()))
                    .collect();
                let k_c: Vec<GridFunction> = implicit.iter().map(|s| s[c].clone()).collect();
                let (stage, k) = solve_stage(
                    &state.cells[c],
                    i,
                    pair,
                    cfg.dt,
                    cfg.eps,
                    mus[c],
                    &e_c,
                    &t_c,
                    &k_c,
                    &m_i,
                );
                check_finite(&stage, Some(i + 1), lambda)?;
                let term = if explicit_column_needed(pair, i) && !cfg.backend.is_disabled() {
                    Some(explicit_term(&cfg.backend, &stage, &m_i, mus[c], cfg.eps)?.0)
                } else {
                    None
                };
                Ok((stage, k, term))
            })
            .collect();
        let mut s_i = Vec::with_capacity(nx);
        let mut k_i = Vec::with_capacity(nx);
        let mut e_i = Vec::with_capacity(nx);
        for r in results {
            let (s, k, e) = r?;
            if e.is_some() {
                evaluations += 1;
            }
            s_i.push(s);
            k_i.push(k);
            e_i.push(e);
        }
        if explicit_column_needed(pair, i) {
            transport.push(Some(upwind_transport(&s_i, &state.mesh)));
            divergences.push(Some(transport_moment_divergence(&s_i, &state.mesh)));
        } else {
            transport.push(None);
            divergences.push(None);
        }
        stages.push(s_i);
        explicit.push(e_i);
        implicit.push(k_i);
    }

    let cells: Vec<GridFunction> = (0..nx)
        .map(|c| {
            if pair.is_gsa() {
                stages[nu - 1][c].clone()
            } else {
                let e_c: Vec<Option<GridFunction>> = explicit.iter().map(|s| s[c].clone()).collect();
                let t_c: Vec<Option<GridFunction>> = transport
                    .iter()
                    .map(|t| t.as_ref().map(|v| v[c].clone()))
                    .collect();
                let k_c: Vec<GridFunction> = implicit.iter().map(|s| s[c].clone()).collect();
                combine_final(&state.cells[c], pair, cfg.dt, &e_c, &t_c, &k_c)
            }
        })
        .collect();
    for c in &cells {
        check_finite(c, None, lambda)?;
    }
    let report = StepReport {
        lambda,
        mu: mus.iter().copied().fold(0.0, f64::max),
        collision_evaluations: evaluations,
        positivity: positivity_for(cfg, lambda),
    };
    Ok((
        KineticState1D {
            mesh: state.mesh.clone(),
            cells,
        },
        report,
    ))
}

/// Sod-type Riemann data as local Maxwellians.
pub fn sod_kinetic(mesh: &Mesh1D, grid: &VelocityGrid2D) -> Result<KineticState1D> {
    let cells = (0..mesh.cells())
        .map(|i| {
            let (rho, w, t) = crate::limits::sod_primitive(mesh.center(i), mesh.x_max());
            maxwellian(&Moments::new(rho, [w, 0.0], t), grid)
        })
        .collect::<Result<Vec<_>>>()?;
    KineticState1D::new(mesh.clone(), cells)
}

// ---------------------------------------------------------------------------
// Relaxation runs

/// One diagnostics row per step.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    pub t: f64,
    pub lambda: f64,
    pub rho_drift: f64,
    pub w_drift: f64,
    pub e_drift: f64,
    /// `NaN` when the state has negative values.
    pub entropy: f64,
    pub min_f: f64,
    pub l1_error: Option<f64>,
}

pub const DIAGNOSTICS_HEADER: &str = "t,lambda,rho_drift,w_drift,e_drift,entropy,min_f,l1_error";

impl DiagnosticRow {
    pub fn to_csv(&self) -> String {
        let err = self.l1_error.map(|e| format!("{e:e}")).unwrap_or_default();
        format!(
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            self.t, self.lambda, self.rho_drift, self.w_drift, self.e_drift, self.entropy, self.min_f, err
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct RelaxationOptions {
    /// Keep every `k`-th state; 0 keeps only the initial and final states.
    pub snapshot_every: usize,
    /// Exact solution to measure the L1 error against.
    pub oracle: Option<crate::limits::BkwParams>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<(f64, GridFunction)>,
    pub diagnostics: Vec<DiagnosticRow>,
    pub collision_evaluations: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &GridFunction {
        &self.snapshots.last().expect("trajectory has a state").1
    }
}

/// Number of steps of size `dt` that reach `t_end`.
pub fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::Config(format!("t_end must be positive, got {t_end}")));
    }
    let n = (t_end / dt).round();
    if n < 1.0 || (n * dt - t_end).abs() > 1e-9 * t_end {
        return Err(Error::Config(format!("dt = {dt} does not divide t_end = {t_end}")));
    }
    Ok(n as usize)
}

fn diagnostics_row(f: &GridFunction, t: f64, lambda: f64, start: &Moments, opts: &RelaxationOptions) -> Result<DiagnosticRow> {
    let m = moments(f)?;
    let l1_error = match &opts.oracle {
        Some(p) => Some(l1_distance(f, &crate::limits::bkw(f.grid(), t, p))?),
        None => None,
    };
    Ok(DiagnosticRow {
        t,
        lambda,
        rho_drift: (m.rho - start.rho).abs(),
        w_drift: ((m.w[0] - start.w[0]).powi(2) + (m.w[1] - start.w[1]).powi(2)).sqrt(),
        e_drift: (m.energy - start.energy).abs(),
        entropy: entropy(f).unwrap_or(f64::NAN),
        min_f: f.min(),
        l1_error,
    })
}

/// Repeated homogeneous steps from `f0` to `t_end`.
pub fn run_relaxation(
    f0: &GridFunction,
    cfg: &StepperConfig,
    t_end: f64,
    opts: &RelaxationOptions,
) -> Result<Trajectory> {
    let steps = step_count(t_end, cfg.dt)?;
    let start = moments(f0)?;
    let mut f = f0.clone();
    let mut snapshots = vec![(0.0, f0.clone())];
    let mut diagnostics = Vec::with_capacity(steps);
    let mut evaluations = 0;
    for n in 1..=steps {
        let (next, _, report) = imex_step_homogeneous_detailed(&f, cfg)?;
        evaluations += report.collision_evaluations;
        f = next;
        let t = n as f64 * cfg.dt;
        diagnostics.push(diagnostics_row(&f, t, report.lambda, &start, opts)?);
        if n == steps || (opts.snapshot_every > 0 && n % opts.snapshot_every == 0) {
            snapshots.push((t, f.clone()));
        }
    }
    Ok(Trajectory {
        snapshots,
        diagnostics,
        collision_evaluations: evaluations,
    })
}
