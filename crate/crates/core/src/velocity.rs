//! Uniform 2D velocity grid, sampled distributions and their moments.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Uniform periodic grid on `[-v_max, v_max)^2` with `n` nodes per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityGrid2D {
    n: usize,
    v_max: f64,
}

impl VelocityGrid2D {
    pub fn new(n: usize, v_max: f64) -> Result<Self> {
        if n < 8 || !n.is_multiple_of(2) {
            return Err(Error::Grid(format!("N_v must be even and >= 8, got {n}")));
        }
        if !(v_max > 0.0) || !v_max.is_finite() {
            return Err(Error::Grid(format!("v_max must be positive, got {v_max}")));
        }
        Ok(Self { n, v_max })
    }

    /// `N_v` nodes on `[-3π, 3π)^2`.
    pub fn standard(n: usize) -> Result<Self> {
        Self::new(n, 3.0 * std::f64::consts::PI)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn dv(&self) -> f64 {
        2.0 * self.v_max / self.n as f64
    }

    /// Quadrature weight of every node.
    pub fn weight(&self) -> f64 {
        self.dv() * self.dv()
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of node `j` along either axis.
    pub fn coord(&self, j: usize) -> f64 {
        -self.v_max + j as f64 * self.dv()
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.coord(j)).collect()
    }

    /// Velocity of flat index `idx` (row-major, first index is `v_x`).
    pub fn node(&self, idx: usize) -> [f64; 2] {
        [self.coord(idx / self.n), self.coord(idx % self.n)]
    }

    pub fn same_as(&self, other: &VelocityGrid2D) -> bool {
        self.n == other.n && self.v_max.to_bits() == other.v_max.to_bits()
    }
}

/// A distribution sampled on a [`VelocityGrid2D`], stored row-major with the
/// `v_x` index outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: VelocityGrid2D,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: VelocityGrid2D) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: VelocityGrid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a {}x{} grid",
                values.len(),
                grid.n(),
                grid.n()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: VelocityGrid2D, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.node(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &VelocityGrid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, jx: usize, jy: usize) -> f64 {
        self.values[jx * self.grid.n + jy]
    }

    pub(crate) fn check_same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "({}, {}) vs ({}, {})",
                self.grid.n, self.grid.v_max, other.grid.n, other.grid.v_max
            )))
        }
    }

    pub fn scaled(&self, s: f64) -> GridFunction {
        GridFunction {
            grid: self.grid,
            values: self.values.iter().map(|x| s * x).collect(),
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &GridFunction) {
        debug_assert!(self.grid.same_as(&other.grid));
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    /// `Δv² Σ f`.
    pub fn mass(&self) -> f64 {
        self.grid.weight() * self.values.iter().sum::<f64>()
    }

    /// Quadrature of `f (1, v_x, v_y, |v|²/2)`.
    pub fn conserved(&self) -> Conserved {
        let grid = &self.grid;
        let xs = grid.coords();
        let mut acc = [0.0; 4];
        for (jx, &vx) in xs.iter().enumerate() {
            let row = &self.values[jx * grid.n..(jx + 1) * grid.n];
            for (&f, &vy) in row.iter().zip(&xs) {
                acc[0] += f;
                acc[1] += f * vx;
                acc[2] += f * vy;
                acc[3] += f * 0.5 * (vx * vx + vy * vy);
            }
        }
        let w = grid.weight();
        Conserved {
            mass: acc[0] * w,
            momentum: [acc[1] * w, acc[2] * w],
            energy: acc[3] * w,
        }
    }
}

/// Conserved moments `(ρ, ρw, E)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Conserved {
    pub mass: f64,
    pub momentum: [f64; 2],
    pub energy: f64,
}

impl Conserved {
    pub fn as_array(&self) -> [f64; 4] {
        [self.mass, self.momentum[0], self.momentum[1], self.energy]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            mass: a[0],
            momentum: [a[1], a[2]],
            energy: a[3],
        }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, s: f64, other: &Conserved) -> Conserved {
        let a = self.as_array();
        let b = other.as_array();
        Conserved::from_array([
            a[0] + s * b[0],
            a[1] + s * b[1],
            a[2] + s * b[2],
            a[3] + s * b[3],
        ])
    }

    pub fn max_abs_diff(&self, other: &Conserved) -> f64 {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Hydrodynamic fields of a distribution. In 2D, `E = ½ρ|w|² + ρT`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub rho: f64,
    pub w: [f64; 2],
    pub energy: f64,
    pub temperature: f64,
}

/// Densities at or below this are treated as vacuum.
pub const MIN_DENSITY: f64 = 1e-14;

impl Moments {
    /// From density, velocity and temperature.
    pub fn new(rho: f64, w: [f64; 2], temperature: f64) -> Self {
        let energy = 0.5 * rho * (w[0] * w[0] + w[1] * w[1]) + rho * temperature;
        Self {
            rho,
            w,
            energy,
            temperature,
        }
    }

    pub fn from_conserved(u: &Conserved) -> Result<Self> {
        let rho = u.mass;
        if !(rho > MIN_DENSITY) {
            return Err(Error::DegenerateState { rho });
        }
        let w = [u.momentum[0] / rho, u.momentum[1] / rho];
        let kinetic = rho * (w[0] * w[0] + w[1] * w[1]);
        let temperature = (2.0 * u.energy - kinetic) / (2.0 * rho);
        Ok(Self {
            rho,
            w,
            energy: u.energy,
            temperature,
        })
    }

    pub fn conserved(&self) -> Conserved {
        Conserved {
            mass: self.rho,
            momentum: [self.rho * self.w[0], self.rho * self.w[1]],
            energy: self.energy,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.rho > 0.0 && self.temperature > 0.0 && self.rho.is_finite() && self.temperature.is_finite()
    }
}

pub fn moments(f: &GridFunction) -> Result<Moments> {
    Moments::from_conserved(&f.conserved())
}

/// `ρ/(2πT) exp(-|v - w|²/(2T))` sampled on the grid nodes.
pub fn maxwellian(m: &Moments, grid: &VelocityGrid2D) -> Result<GridFunction> {
    if !m.is_valid() {
        return Err(Error::InvalidMoments {
            rho: m.rho,
            temperature: m.temperature,
        });
    }
    let xs = grid.coords();
    let two_t = 2.0 * m.temperature;
    let norm = m.rho / (std::f64::consts::PI * two_t);
    // The Gaussian factorises over the two axes.
    let gx: Vec<f64> = xs.iter().map(|v| (-(v - m.w[0]).powi(2) / two_t).exp()).collect();
    let gy: Vec<f64> = xs.iter().map(|v| (-(v - m.w[1]).powi(2) / two_t).exp()).collect();
    let mut values = Vec::with_capacity(grid.len());
    for ex in &gx {
        for ey in &gy {
            values.push(norm * ex * ey);
        }
    }
    Ok(GridFunction {
        grid: *grid,
        values,
    })
}

pub fn l1_distance(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    f.check_same_grid(g)?;
    let s: f64 = f.values.iter().zip(&g.values).map(|(a, b)| (a - b).abs()).sum();
    Ok(f.grid.weight() * s)
}

pub fn l1_norm(f: &GridFunction) -> f64 {
    f.grid.weight() * f.values.iter().map(|x| x.abs()).sum::<f64>()
}

/// Values above this negative threshold count as zero in [`entropy`].
pub const NEGATIVITY_TOL: f64 = 1e-12;

/// `Δv² Σ f log f`, with `0 log 0 = 0`.
pub fn entropy(f: &GridFunction) -> Result<f64> {
    let mut s = 0.0;
    for (i, &x) in f.values.iter().enumerate() {
        if x < -NEGATIVITY_TOL {
            return Err(Error::NegativeDensity { index: i, value: x });
        }
        if x > 0.0 {
            s += x * x.ln();
        }
    }
    Ok(f.grid.weight() * s)
}

// ---------------------------------------------------------------------------
// Snapshots: one header line `# nv=<N>,v_max=<v>` then N CSV rows, v_x index
// outermost. Values use shortest round-trip formatting.

pub fn snapshot_to_string(f: &GridFunction) -> String {
    let n = f.grid.n;
    let mut s = String::with_capacity(n * n * 24);
    let _ = writeln!(s, "# nv={},v_max={:?}", n, f.grid.v_max);
    for row in f.values.chunks(n) {
        let line: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

pub fn snapshot_from_str(text: &str) -> std::result::Result<GridFunction, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty snapshot")?;
    let header = header
        .strip_prefix("# ")
        .ok_or_else(|| format!("bad header `{header}`"))?;
    let mut n = None;
    let mut v_max = None;
    for kv in header.split(',') {
        match kv.split_once('=') {
            Some(("nv", v)) => n = v.trim().parse::<usize>().ok(),
            Some(("v_max", v)) => v_max = v.trim().parse::<f64>().ok(),
            _ => return Err(format!("bad header field `{kv}`")),
        }
    }
    let grid = VelocityGrid2D::new(
        n.ok_or("missing nv")?,
        v_max.ok_or("missing v_max")?,
    )
    .map_err(|e| e.to_string())?;
    let mut values = Vec::with_capacity(grid.len());
    for (r, line) in lines.enumerate() {
        for tok in line.split(',') {
            values.push(
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("row {}: bad value `{tok}`", r + 1))?,
            );
        }
    }
    GridFunction::from_values(grid, values).map_err(|e| e.to_string())
}

pub fn write_snapshot(f: &GridFunction, path: &Path) -> Result<()> {
    std::fs::write(path, snapshot_to_string(f)).map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<GridFunction> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    snapshot_from_str(&text).map_err(|message| Error::Parse {
        path: path.to_path_buf(),
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid32() -> VelocityGrid2D {
        VelocityGrid2D::standard(32).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(VelocityGrid2D::new(6, 1.0).is_err());
        assert!(VelocityGrid2D::new(9, 1.0).is_err());
        assert!(VelocityGrid2D::new(8, 0.0).is_err());
        let g = grid32();
        assert!((g.dv() - 6.0 * PI / 32.0).abs() < 1e-15);
        assert_eq!(g.coord(0), -3.0 * PI);
        assert_eq!(g.coord(16), 0.0);
    }

    #[test]
    fn maxwellian_at_origin() {
        let m = maxwellian(&Moments::new(1.0, [0.0, 0.0], 1.0), &grid32()).unwrap();
        assert!((m.at(16, 16) - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!(m.values().iter().all(|&x| x > 0.0));
    }

    #[test]
    fn maxwellian_rejects_bad_moments() {
        assert!(matches!(
            maxwellian(&Moments::new(1.0, [0.0, 0.0], -1.0), &grid32()),
            Err(Error::InvalidMoments { .. })
        ));
        assert!(maxwellian(&Moments::new(0.0, [0.0, 0.0], 1.0), &grid32()).is_err());
    }

    #[test]
    fn shifted_maxwellian_moments() {
        let m = maxwellian(&Moments::new(2.0, [1.0, 0.0], 0.5), &grid32()).unwrap();
        let mm = moments(&m).unwrap();
        assert!((mm.rho - 2.0).abs() < 1e-8);
        assert!((mm.w[0] - 1.0).abs() < 1e-8 && mm.w[1].abs() < 1e-8);
        assert!((mm.energy - 2.0).abs() < 1e-8);
        assert!((mm.temperature - 0.5).abs() < 1e-8);
    }

    #[test]
    fn zero_density_is_degenerate() {
        let z = GridFunction::zeros(grid32());
        assert!(matches!(moments(&z), Err(Error::DegenerateState { .. })));
    }

    #[test]
    fn l1_basics() {
        let g = grid32();
        let m = maxwellian(&Moments::new(1.0, [0.0, 0.0], 1.0), &g).unwrap();
        let m2 = m.scaled(2.0);
        assert_eq!(l1_distance(&m, &m).unwrap(), 0.0);
        assert!((l1_distance(&m, &m2).unwrap() - 1.0).abs() < 1e-8);
        assert_eq!(l1_distance(&m, &m2).unwrap(), l1_distance(&m2, &m).unwrap());
        let other = GridFunction::zeros(VelocityGrid2D::standard(16).unwrap());
        assert!(matches!(l1_distance(&m, &other), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn maxwellian_entropy() {
        let m = maxwellian(&Moments::new(1.0, [0.0, 0.0], 1.0), &grid32()).unwrap();
        let expected = (1.0 / (2.0 * PI)).ln() - 1.0;
        assert!((entropy(&m).unwrap() - expected).abs() < 1e-6);
    }

    #[test]
    fn entropy_rejects_negative_values() {
        let mut f = maxwellian(&Moments::new(1.0, [0.0, 0.0], 1.0), &grid32()).unwrap();
        f.values_mut()[5] = -1.0;
        assert!(matches!(entropy(&f), Err(Error::NegativeDensity { index: 5, .. })));
        // Tiny negative round-off is tolerated and contributes nothing.
        f.values_mut()[5] = -1e-14;
        assert!(entropy(&f).is_ok());
    }

    #[test]
    fn snapshot_roundtrip_is_exact() {
        let f = maxwellian(&Moments::new(1.3, [0.2, -0.1], 0.7), &VelocityGrid2D::standard(8).unwrap())
            .unwrap();
        let text = snapshot_to_string(&f);
        assert!(text.starts_with("# nv=8,v_max="));
        assert_eq!(snapshot_from_str(&text).unwrap(), f);
        assert!(snapshot_from_str("# nv=8\n").is_err());
    }
}
