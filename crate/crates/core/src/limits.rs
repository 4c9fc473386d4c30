//! Reference solutions: the BKW relaxation solution for 2D Maxwell molecules
//! and the explicit-RK Euler solver that the kinetic scheme reduces to as
//! `ε → 0`.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::integrator::{BoundaryCondition, Mesh1D, CFL_LIMIT};
use crate::tableaux::ButcherTableau;
use crate::velocity::{maxwellian, Conserved, GridFunction, Moments, VelocityGrid2D};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BkwParams {
    sigma: f64,
}

impl BkwParams {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Config(format!("BKW sigma must be positive, got {sigma}")));
        }
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `S(t) = 1 - exp(-σ²t/8)/2`.
    pub fn s(&self, t: f64) -> f64 {
        1.0 - 0.5 * (-self.sigma * self.sigma * t / 8.0).exp()
    }
}

impl Default for BkwParams {
    fn default() -> Self {
        Self { sigma: 1.0 }
    }
}

/// Pointwise BKW solution at time `t`.
pub fn bkw(grid: &VelocityGrid2D, t: f64, params: &BkwParams) -> GridFunction {
    let s = params.s(t.max(0.0));
    let s2 = params.sigma * params.sigma;
    let pre = 1.0 / (2.0 * std::f64::consts::PI * s * s * s2);
    let a = 2.0 * s - 1.0;
    let b = (1.0 - s) / (2.0 * s * s2);
    GridFunction::from_fn(*grid, |[x, y]| {
        let v2 = x * x + y * y;
        pre * (a + b * v2) * (-v2 / (2.0 * s * s2)).exp()
    })
}

/// `∂_t` of the BKW solution, by differentiating the closed form.
pub fn bkw_time_derivative(grid: &VelocityGrid2D, t: f64, params: &BkwParams) -> GridFunction {
    let s2 = params.sigma * params.sigma;
    let s = params.s(t);
    let ds = s2 / 16.0 * (-s2 * t / 8.0).exp();
    let pi2 = 2.0 * std::f64::consts::PI;
    GridFunction::from_fn(*grid, |[x, y]| {
        let r = (x * x + y * y) / s2;
        let e = (-r / (2.0 * s)).exp();
        // f = p(S) e(S), p = (2S - 1 + (1-S) r / (2S)) / (2π S² σ²)
        let p = (2.0 * s - 1.0 + (1.0 - s) * r / (2.0 * s)) / (pi2 * s * s * s2);
        let dp_inner = 2.0 - r / (2.0 * s * s);
        let dp = dp_inner / (pi2 * s * s * s2) - 2.0 * p / s;
        let de = e * r / (2.0 * s * s);
        (dp * e + p * de) * ds
    })
}

// ---------------------------------------------------------------------------
// Euler limit

/// Conserved variables `(ρ, ρw_x, E)` per cell, with `w_y = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct EulerState1D {
    pub mesh: Mesh1D,
    pub cells: Vec<[f64; 3]>,
}

/// Conserved triple from primitive `(ρ, w_x, T)` in two velocity dimensions.
pub fn euler_conserved(rho: f64, wx: f64, temperature: f64) -> [f64; 3] {
    [rho, rho * wx, rho * temperature + 0.5 * rho * wx * wx]
}

fn cell_moments(u: &[f64; 3], cell: usize) -> Result<Moments> {
    let [rho, mx, e] = *u;
    if !(rho > 1e-14) || !rho.is_finite() {
        return Err(Error::InvalidState {
            cell,
            reason: format!("density {rho:e}"),
        });
    }
    let internal = e - 0.5 * mx * mx / rho;
    if !(internal > 0.0) || !internal.is_finite() {
        return Err(Error::InvalidState {
            cell,
            reason: format!("internal energy {internal:e}"),
        });
    }
    Moments::from_conserved(&Conserved {
        mass: rho,
        momentum: [mx, 0.0],
        energy: e,
    })
    .map_err(|e| Error::InvalidState {
        cell,
        reason: e.to_string(),
    })
}

/// Moment fluxes of `f` through a face, split by the sign of `v_x`:
/// `(Σ_{v_x>0} v_x φ f Δv², Σ_{v_x<0} v_x φ f Δv²)` with `φ = (1, v_x, |v|²/2)`.
pub fn half_fluxes(f: &GridFunction) -> ([f64; 3], [f64; 3]) {
    let grid = f.grid();
    let n = grid.n();
    let xs = grid.coords();
    let mut plus = [0.0; 3];
    let mut minus = [0.0; 3];
    for (jx, &vx) in xs.iter().enumerate() {
        if vx == 0.0 {
            continue;
        }
        let row = &f.values()[jx * n..(jx + 1) * n];
        let mut acc = [0.0; 3];
        for (&v, &vy) in row.iter().zip(&xs) {
            acc[0] += v;
            acc[2] += v * 0.5 * (vx * vx + vy * vy);
        }
        acc[1] = acc[0] * vx;
        let target = if vx > 0.0 { &mut plus } else { &mut minus };
        for k in 0..3 {
            target[k] += vx * acc[k];
        }
    }
    let w = grid.weight();
    (plus.map(|x| x * w), minus.map(|x| x * w))
}

fn maxwellian_half_fluxes(u: &[f64; 3], cell: usize, grid: &VelocityGrid2D) -> Result<([f64; 3], [f64; 3])> {
    let m = maxwellian(&cell_moments(u, cell)?, grid)?;
    Ok(half_fluxes(&m))
}

/// Kinetic flux-vector splitting: right-moving half of `M[uL]` plus
/// left-moving half of `M[uR]`, integrated on `grid`.
pub fn kinetic_flux_1d(ul: &[f64; 3], ur: &[f64; 3], grid: &VelocityGrid2D) -> Result<[f64; 3]> {
    let (p, _) = maxwellian_half_fluxes(ul, 0, grid)?;
    let (_, m) = maxwellian_half_fluxes(ur, 1, grid)?;
    Ok([p[0] + m[0], p[1] + m[1], p[2] + m[2]])
}

/// `(F_{i+1/2} - F_{i-1/2}) / Δx` from per-cell half fluxes.
pub(crate) fn flux_divergence(
    plus: &[[f64; 3]],
    minus: &[[f64; 3]],
    mesh: &Mesh1D,
) -> Vec<[f64; 3]> {
    let nx = mesh.cells();
    let right = |i: usize| -> usize {
        match mesh.boundary() {
            BoundaryCondition::Periodic => (i + 1) % nx,
            BoundaryCondition::FreeFlow => (i + 1).min(nx - 1),
        }
    };
    // Face i sits to the right of cell i.
    let faces: Vec<[f64; 3]> = (0..nx)
        .map(|i| {
            let r = right(i);
            [0, 1, 2].map(|k| plus[i][k] + minus[r][k])
        })
        .collect();
    let inv_dx = 1.0 / mesh.dx();
    (0..nx)
        .map(|i| {
            let left_face = if i == 0 {
                match mesh.boundary() {
                    BoundaryCondition::Periodic => faces[nx - 1],
                    BoundaryCondition::FreeFlow => [0, 1, 2].map(|k| plus[0][k] + minus[0][k]),
                }
            } else {
                faces[i - 1]
            };
            [0, 1, 2].map(|k| (faces[i][k] - left_face[k]) * inv_dx)
        })
        .collect()
}

fn euler_divergence(cells: &[[f64; 3]], mesh: &Mesh1D, grid: &VelocityGrid2D) -> Result<Vec<[f64; 3]>> {
    let mut plus = Vec::with_capacity(cells.len());
    let mut minus = Vec::with_capacity(cells.len());
    for (i, u) in cells.iter().enumerate() {
        let (p, m) = maxwellian_half_fluxes(u, i, grid)?;
        plus.push(p);
        minus.push(m);
    }
    Ok(flux_divergence(&plus, &minus, mesh))
}

/// One step of the explicit RK method `(Ã, w̃)` applied to the Euler system
/// with kinetic fluxes on `grid`.
pub fn explicit_rk_euler_step(
    state: &EulerState1D,
    dt: f64,
    tableau: &ButcherTableau,
    grid: &VelocityGrid2D,
) -> Result<EulerState1D> {
    let cfl = grid.v_max() * dt / state.mesh.dx();
    if !(dt > 0.0) || cfl > CFL_LIMIT {
        return Err(Error::Config(format!(
            "CFL number {cfl:.3} exceeds {CFL_LIMIT} (dt = {dt})"
        )));
    }
    if !tableau.is_lower_triangular(true) {
        return Err(Error::InvalidTableau("Euler solver needs an explicit tableau".into()));
    }
    let nu = tableau.stages();
    let mut divs: Vec<Option<Vec<[f64; 3]>>> = vec![None; nu];
    for i in 0..nu {
        let needed = (i + 1..nu).any(|r| tableau.a(r, i) != 0.0) || tableau.weights()[i] != 0.0;
        if !needed {
            continue;
        }
        let mut stage = state.cells.clone();
        for (j, d) in divs.iter().enumerate().take(i) {
            let a = tableau.a(i, j);
            if a == 0.0 {
                continue;
            }
            let d = d.as_ref().expect("stage divergence");
            for (u, dj) in stage.iter_mut().zip(d) {
                for k in 0..3 {
                    u[k] -= dt * a * dj[k];
                }
            }
        }
        divs[i] = Some(euler_divergence(&stage, &state.mesh, grid)?);
    }
    let mut cells = state.cells.clone();
    for (j, d) in divs.iter().enumerate() {
        let w = tableau.weights()[j];
        if w == 0.0 {
            continue;
        }
        let d = d.as_ref().expect("stage divergence");
        for (u, dj) in cells.iter_mut().zip(d) {
            for k in 0..3 {
                u[k] -= dt * w * dj[k];
            }
        }
    }
    for (i, u) in cells.iter().enumerate() {
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidState {
                cell: i,
                reason: "non-finite state".into(),
            });
        }
    }
    Ok(EulerState1D {
        mesh: state.mesh.clone(),
        cells,
    })
}

/// Riemann data `(ρ, w_x, T) = (1, 0, 1) | (0.125, 0, 0.8)` split at the
/// middle of the mesh.
pub fn sod_primitive(x: f64, x_max: f64) -> (f64, f64, f64) {
    if x < 0.5 * x_max {
        (1.0, 0.0, 1.0)
    } else {
        (0.125, 0.0, 0.8)
    }
}

pub fn sod_euler(mesh: &Mesh1D) -> EulerState1D {
    let cells = (0..mesh.cells())
        .map(|i| {
            let (rho, w, t) = sod_primitive(mesh.center(i), mesh.x_max());
            euler_conserved(rho, w, t)
        })
        .collect();
    EulerState1D {
        mesh: mesh.clone(),
        cells,
    }
}

impl EulerState1D {
    pub fn total_mass(&self) -> f64 {
        self.cells.iter().map(|u| u[0]).sum::<f64>() * self.mesh.dx()
    }

    pub fn densities(&self) -> Vec<f64> {
        self.cells.iter().map(|u| u[0]).collect()
    }
}

/// Writes `(t, x, ρ, w_x, E)` rows for a list of snapshots.
pub fn write_euler_trajectory(path: &Path, snapshots: &[(f64, EulerState1D)]) -> Result<()> {
    let mut out = String::from("t,x,rho,w_x,E\n");
    for (t, s) in snapshots {
        for (i, u) in s.cells.iter().enumerate() {
            out.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e}\n",
                t,
                s.mesh.center(i),
                u[0],
                u[1] / u[0],
                u[2]
            ));
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tableaux::builtin_pair;
    use crate::velocity::{l1_distance, moments};

    fn grid() -> VelocityGrid2D {
        VelocityGrid2D::standard(32).unwrap()
    }

    #[test]
    fn bkw_initial_profile() {
        let g = grid();
        let f = bkw(&g, 0.0, &BkwParams::default());
        for (i, &x) in f.values().iter().enumerate() {
            let [vx, vy] = g.node(i);
            let v2 = vx * vx + vy * vy;
            let expected = v2 * (-v2).exp() / std::f64::consts::PI;
            assert!((x - expected).abs() < 1e-15);
        }
        let centre = g.n() / 2;
        assert_eq!(f.at(centre, centre), 0.0);
    }

    #[test]
    fn bkw_moments_are_invariant() {
        let g = grid();
        for sigma in [1.0, 1.2] {
            let p = BkwParams::new(sigma).unwrap();
            for t in [0.0, 0.5, 2.0, 10.0] {
                let m = moments(&bkw(&g, t, &p)).unwrap();
                assert!((m.rho - 1.0).abs() < 1e-8);
                assert!(m.w[0].abs() < 1e-8 && m.w[1].abs() < 1e-8);
                assert!((m.energy - sigma * sigma).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn bkw_tends_to_maxwellian() {
        let g = grid();
        let f = bkw(&g, 200.0, &BkwParams::default());
        let m = maxwellian(&Moments::new(1.0, [0.0, 0.0], 1.0), &g).unwrap();
        assert!(l1_distance(&f, &m).unwrap() <= 1e-10);
    }

    #[test]
    fn bkw_is_nonnegative() {
        let g = grid();
        for t in [0.0, 0.1, 1.0, 5.0] {
            assert!(bkw(&g, t, &BkwParams::default()).min() >= 0.0);
        }
    }

    #[test]
    fn time_derivative_matches_difference_quotient() {
        let g = grid();
        let p = BkwParams::default();
        let h = 1e-5;
        let d = bkw_time_derivative(&g, 1.0, &p);
        let mut fd = bkw(&g, 1.0 + h, &p);
        fd.axpy(-1.0, &bkw(&g, 1.0 - h, &p));
        let fd = fd.scaled(0.5 / h);
        assert!(l1_distance(&d, &fd).unwrap() < 1e-8);
    }

    #[test]
    fn rejects_bad_sigma() {
        assert!(BkwParams::new(0.0).is_err());
        assert!(BkwParams::new(f64::NAN).is_err());
    }

    #[test]
    fn symmetric_flux_has_no_mass_flux() {
        let g = grid();
        let u = euler_conserved(1.0, 0.0, 1.0);
        let f = kinetic_flux_1d(&u, &u, &g).unwrap();
        assert!(f[0].abs() < 1e-12 && f[2].abs() < 1e-12);
        // Pressure ρT appears in the momentum flux.
        assert!((f[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn equal_states_recombine_to_full_flux() {
        let g = grid();
        let u = euler_conserved(0.7, 0.4, 1.3);
        let flux = kinetic_flux_1d(&u, &u, &g).unwrap();
        let m = maxwellian(&cell_moments(&u, 0).unwrap(), &g).unwrap();
        let mut direct = [0.0; 3];
        for (i, &x) in m.values().iter().enumerate() {
            let [vx, vy] = g.node(i);
            direct[0] += vx * x;
            direct[1] += vx * vx * x;
            direct[2] += vx * 0.5 * (vx * vx + vy * vy) * x;
        }
        for k in 0..3 {
            assert!((flux[k] - direct[k] * g.weight()).abs() < 1e-12);
        }
    }

    #[test]
    fn vacuum_state_is_invalid() {
        let g = grid();
        let u = [1e-16, 0.0, 1e-16];
        let ok = euler_conserved(1.0, 0.0, 1.0);
        assert!(matches!(
            kinetic_flux_1d(&u, &ok, &g),
            Err(Error::InvalidState { .. })
        ));
    }

    #[test]
    fn uniform_state_is_stationary() {
        let g = grid();
        let mesh = Mesh1D::new(20, 1.0, BoundaryCondition::Periodic).unwrap();
        let u = euler_conserved(0.9, 0.3, 1.1);
        let s = EulerState1D {
            mesh: mesh.clone(),
            cells: vec![u; 20],
        };
        let tab = builtin_pair("IMEX-BE(3,5,5)").unwrap().explicit().clone();
        let next = explicit_rk_euler_step(&s, 0.002, &tab, &g).unwrap();
        for c in &next.cells {
            for k in 0..3 {
                assert!((c[k] - u[k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn forward_euler_stage_matches_upwind_update() {
        let g = VelocityGrid2D::standard(16).unwrap();
        let mesh = Mesh1D::new(4, 1.0, BoundaryCondition::FreeFlow).unwrap();
        let cells = vec![
            euler_conserved(1.0, 0.1, 1.0),
            euler_conserved(0.8, 0.0, 0.9),
            euler_conserved(0.5, -0.2, 0.7),
            euler_conserved(0.4, 0.0, 0.8),
        ];
        let s = EulerState1D { mesh, cells: cells.clone() };
        let dt = 0.02;
        let fe = builtin_pair("IMEX-EULER(1,1,1)").unwrap().explicit().clone();
        let next = explicit_rk_euler_step(&s, dt, &fe, &g).unwrap();

        // Hand-written upwind: ghost cells copy the boundary cells.
        let flux = |a: usize, b: usize| kinetic_flux_1d(&cells[a], &cells[b], &g).unwrap();
        let dx = 0.25;
        for i in 0..4 {
            let fr = flux(i, (i + 1).min(3));
            let fl = flux(i.saturating_sub(1), i);
            for k in 0..3 {
                let expected = cells[i][k] - dt / dx * (fr[k] - fl[k]);
                assert!((next.cells[i][k] - expected).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn periodic_sod_conserves_mass() {
        let g = grid();
        let mesh = Mesh1D::new(100, 1.0, BoundaryCondition::Periodic).unwrap();
        let mut s = sod_euler(&mesh);
        let m0 = s.total_mass();
        let tab = builtin_pair("IMEX-BE(3,5,5)").unwrap().explicit().clone();
        let dt = 0.8 * mesh.dx() / g.v_max();
        for _ in 0..100 {
            s = explicit_rk_euler_step(&s, dt, &tab, &g).unwrap();
        }
        assert!((s.total_mass() - m0).abs() <= 1e-12);
    }

    #[test]
    fn cfl_violation_is_reported() {
        let g = grid();
        let mesh = Mesh1D::new(10, 1.0, BoundaryCondition::Periodic).unwrap();
        let s = sod_euler(&mesh);
        let tab = builtin_pair("IMEX-EULER(1,1,1)").unwrap().explicit().clone();
        assert!(matches!(
            explicit_rk_euler_step(&s, 1.0, &tab, &g),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn trajectory_csv() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = Mesh1D::new(3, 1.0, BoundaryCondition::FreeFlow).unwrap();
        let path = dir.path().join("euler.csv");
        write_euler_trajectory(&path, &[(0.0, sod_euler(&mesh))]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,x,rho,w_x,E");
        assert_eq!(lines.len(), 4);
    }
}
