//! IMEX Runge-Kutta double Butcher tableaux and their structural checks.
//!
//! A pair couples a strictly lower-triangular explicit tableau `(Ã, w̃, c̃)`
//! with a diagonally implicit one `(A, w, c)` sharing the stage count. Every
//! check returns a [`ConditionReport`] instead of failing, so a single report
//! can list every offending entry.

use std::fmt;
use std::path::Path;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack for every algebraic condition check.
pub const CONDITION_TOL: f64 = 1e-12;

/// Slack for comparing stored abscissae against row sums.
pub const ROW_SUM_TOL: f64 = 1e-14;

/// Dense row-major square matrix. Tableaux are tiny, so no linear-algebra
/// crate is pulled in for this.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidTableau(format!(
                    "row {} has {} entries, expected {n}",
                    i + 1,
                    row.len()
                )));
            }
            m.data[i * n..(i + 1) * n].copy_from_slice(row);
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn mul(&self, other: &SquareMatrix) -> SquareMatrix {
        let n = self.n;
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self[(i, k)];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += aik * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn max_abs_diff(&self, other: &SquareMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for SquareMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// One Runge-Kutta tableau `(A, w, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    a: SquareMatrix,
    w: Vec<f64>,
    c: Vec<f64>,
}

impl ButcherTableau {
    pub fn new(a: SquareMatrix, w: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        let n = a.dim();
        if n == 0 {
            return Err(Error::InvalidTableau("zero stages".into()));
        }
        if w.len() != n || c.len() != n {
            return Err(Error::InvalidTableau(format!(
                "stage count {n} but |w| = {}, |c| = {}",
                w.len(),
                c.len()
            )));
        }
        if a.data.iter().chain(&w).chain(&c).any(|x| !x.is_finite()) {
            return Err(Error::InvalidTableau("non-finite entry".into()));
        }
        Ok(Self { a, w, c })
    }

    /// Builds a tableau with `c` set to the row sums of `A`.
    pub fn with_row_sums(a: SquareMatrix, w: Vec<f64>) -> Result<Self> {
        let c = (0..a.dim()).map(|i| a.row(i).iter().sum()).collect();
        Self::new(a, w, c)
    }

    fn from_ratios(rows: &[&[(i64, i64)]], w: &[(i64, i64)], c: &[(i64, i64)]) -> Self {
        let conv = |&(p, q): &(i64, i64)| ratio_to_f64(Ratio::new(p as i128, q as i128));
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(conv).collect()).collect();
        let a = SquareMatrix::from_rows(&rows).expect("builtin tableau is square");
        Self::new(a, w.iter().map(conv).collect(), c.iter().map(conv).collect())
            .expect("builtin tableau is well-formed")
    }

    pub fn stages(&self) -> usize {
        self.a.dim()
    }

    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a[(i, j)]
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.a
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn abscissae(&self) -> &[f64] {
        &self.c
    }

    pub fn set_a(&mut self, i: usize, j: usize, value: f64) {
        self.a[(i, j)] = value;
    }

    pub fn set_weight(&mut self, i: usize, value: f64) {
        self.w[i] = value;
    }

    pub fn is_lower_triangular(&self, strict: bool) -> bool {
        let n = self.stages();
        (0..n).all(|i| {
            let start = if strict { i } else { i + 1 };
            (start..n).all(|j| self.a[(i, j)] == 0.0)
        })
    }
}

/// A named explicit/implicit tableau pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ImexPair {
    name: String,
    explicit: ButcherTableau,
    implicit: ButcherTableau,
}

/// `name(k, σ_E, σ_I)` decomposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchemeLabel {
    pub order: usize,
    pub explicit_evals: usize,
    pub implicit_evals: usize,
}

pub fn parse_scheme_label(name: &str) -> Option<(String, SchemeLabel)> {
    let open = name.find('(')?;
    let inner = name[open + 1..].strip_suffix(')')?;
    let family = name[..open].trim();
    if family.is_empty() {
        return None;
    }
    let nums: Vec<usize> = inner
        .split(',')
        .map(|s| s.trim().parse().ok())
        .collect::<Option<_>>()?;
    match nums[..] {
        [order, explicit_evals, implicit_evals] => Some((
            family.to_string(),
            SchemeLabel {
                order,
                explicit_evals,
                implicit_evals,
            },
        )),
        _ => None,
    }
}

impl ImexPair {
    pub fn new(
        name: impl Into<String>,
        explicit: ButcherTableau,
        implicit: ButcherTableau,
    ) -> Result<Self> {
        let name = name.into();
        if parse_scheme_label(&name).is_none() {
            return Err(Error::InvalidTableau(format!(
                "name `{name}` does not follow the name(k,sE,sI) convention"
            )));
        }
        if explicit.stages() != implicit.stages() {
            return Err(Error::InvalidTableau(format!(
                "explicit part has {} stages, implicit part {}",
                explicit.stages(),
                implicit.stages()
            )));
        }
        Ok(Self {
            name,
            explicit,
            implicit,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn label(&self) -> SchemeLabel {
        parse_scheme_label(&self.name)
            .map(|(_, l)| l)
            .expect("validated at construction")
    }

    pub fn stages(&self) -> usize {
        self.explicit.stages()
    }

    pub fn explicit(&self) -> &ButcherTableau {
        &self.explicit
    }

    pub fn implicit(&self) -> &ButcherTableau {
        &self.implicit
    }

    pub fn explicit_mut(&mut self) -> &mut ButcherTableau {
        &mut self.explicit
    }

    pub fn implicit_mut(&mut self) -> &mut ButcherTableau {
        &mut self.implicit
    }

    pub fn rename(&mut self, name: impl Into<String>) -> Result<()> {
        let name = name.into();
        if parse_scheme_label(&name).is_none() {
            return Err(Error::InvalidTableau(format!("bad scheme name `{name}`")));
        }
        self.name = name;
        Ok(())
    }

    /// Shorthand for [`is_globally_stiffly_accurate`]`(self).satisfied`.
    pub fn is_gsa(&self) -> bool {
        is_globally_stiffly_accurate(self).satisfied
    }
}

pub const BUILTIN_SCHEMES: [&str; 3] = ["IMEX-BE(2,2,4)", "IMEX-BE(3,5,5)", "IMEX-EULER(1,1,1)"];

pub fn builtin_pair(name: &str) -> Result<ImexPair> {
    const Z: (i64, i64) = (0, 1);
    const ONE: (i64, i64) = (1, 1);
    const HALF: (i64, i64) = (1, 2);
    let pair = match name {
        "IMEX-BE(2,2,4)" => {
            let explicit = ButcherTableau::from_ratios(
                &[
                    &[Z, Z, Z, Z],
                    &[Z, Z, Z, Z],
                    &[Z, ONE, Z, Z],
                    &[Z, HALF, HALF, Z],
                ],
                &[Z, HALF, HALF, Z],
                &[Z, Z, ONE, ONE],
            );
            let implicit = ButcherTableau::from_ratios(
                &[
                    &[(2, 1), Z, Z, Z],
                    &[(-2, 1), (2, 1), Z, Z],
                    &[Z, (-1, 1), (2, 1), Z],
                    &[Z, HALF, (-3, 2), (2, 1)],
                ],
                &[Z, HALF, (-3, 2), (2, 1)],
                &[(2, 1), Z, ONE, ONE],
            );
            ImexPair::new(name, explicit, implicit)?
        }
        "IMEX-BE(3,5,5)" => {
            let explicit = ButcherTableau::from_ratios(
                &[
                    &[Z, Z, Z, Z, Z],
                    &[ONE, Z, Z, Z, Z],
                    &[(4, 9), (2, 9), Z, Z, Z],
                    &[(1, 4), Z, (3, 4), Z, Z],
                    &[(1, 4), Z, (3, 4), Z, Z],
                ],
                &[(1, 4), Z, (3, 4), Z, Z],
                &[Z, ONE, (2, 3), ONE, ONE],
            );
            let implicit = ButcherTableau::from_ratios(
                &[
                    &[Z, Z, Z, Z, Z],
                    &[HALF, HALF, Z, Z, Z],
                    &[(5, 18), (-1, 9), HALF, Z, Z],
                    &[HALF, Z, Z, HALF, Z],
                    &[(1, 4), Z, (3, 4), (-1, 2), HALF],
                ],
                &[(1, 4), Z, (3, 4), (-1, 2), HALF],
                &[Z, ONE, (2, 3), ONE, ONE],
            );
            ImexPair::new(name, explicit, implicit)?
        }
        "IMEX-EULER(1,1,1)" => {
            let explicit = ButcherTableau::from_ratios(&[&[Z]], &[ONE], &[Z]);
            let implicit = ButcherTableau::from_ratios(&[&[ONE]], &[ONE], &[ONE]);
            ImexPair::new(name, explicit, implicit)?
        }
        _ => {
            return Err(Error::UnknownScheme {
                name: name.to_string(),
                available: BUILTIN_SCHEMES.join(", "),
            })
        }
    };
    Ok(pair)
}

/// Resolves a builtin name first, then falls back to a tableau JSON file.
pub fn resolve_pair(name_or_path: &str) -> Result<ImexPair> {
    match builtin_pair(name_or_path) {
        Ok(p) => Ok(p),
        Err(e @ Error::UnknownScheme { .. }) => {
            let path = Path::new(name_or_path);
            if path.is_file() {
                load_pair(path)
            } else {
                Err(e)
            }
        }
        Err(e) => Err(e),
    }
}

/// One entry in a [`ConditionReport`]. Indices are 1-based, matching the
/// usual tableau notation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionDetail {
    pub label: String,
    pub index: Vec<usize>,
    pub value: f64,
    /// Distance of `value` from its admissible set; zero when satisfied.
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub name: String,
    pub satisfied: bool,
    pub worst_violation: f64,
    pub details: Vec<ConditionDetail>,
    pub notes: Vec<String>,
}

impl ConditionReport {
    fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            satisfied: true,
            worst_violation: 0.0,
            details: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// Records `value` and its distance from the admissible set.
    fn record(&mut self, label: impl Into<String>, index: Vec<usize>, value: f64, violation: f64) {
        self.details.push(ConditionDetail {
            label: label.into(),
            index,
            value,
            violation,
        });
        self.observe(violation);
    }

    fn observe(&mut self, violation: f64) {
        let violation = if violation.is_nan() {
            f64::INFINITY
        } else {
            violation
        };
        self.worst_violation = self.worst_violation.max(violation);
    }

    fn finish(mut self, tol: f64) -> Self {
        self.satisfied = self.worst_violation <= tol;
        self
    }

    pub fn violations(&self) -> impl Iterator<Item = &ConditionDetail> {
        self.details.iter()
    }
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} (worst violation {:.3e})",
            self.name,
            if self.satisfied { "satisfied" } else { "VIOLATED" },
            self.worst_violation
        )
    }
}

/// Row-sum consistency and triangularity of both tableaux.
pub fn validate_pair(pair: &ImexPair) -> ConditionReport {
    let mut report = ConditionReport::new("structure");
    for (role, tab, strict) in [
        ("explicit", pair.explicit(), true),
        ("implicit", pair.implicit(), false),
    ] {
        let n = tab.stages();
        for i in 0..n {
            let sum: f64 = tab.matrix().row(i).iter().sum();
            let err = (tab.c[i] - sum).abs();
            if err > ROW_SUM_TOL {
                report.record(format!("{role} row sum"), vec![i + 1], err, err);
            } else {
                report.observe(err);
            }
            let start = if strict { i } else { i + 1 };
            for j in start..n {
                let v = tab.a(i, j);
                if v != 0.0 {
                    report.record(
                        format!("{role} upper entry"),
                        vec![i + 1, j + 1],
                        v,
                        v.abs(),
                    );
                }
            }
        }
    }
    report.finish(ROW_SUM_TOL)
}

/// `w_i = a_{νi}` and `w̃_i = ã_{νi}` for every `i`.
pub fn is_globally_stiffly_accurate(pair: &ImexPair) -> ConditionReport {
    let mut report = ConditionReport::new("globally stiffly accurate");
    for (role, tab) in [("explicit", pair.explicit()), ("implicit", pair.implicit())] {
        let last = tab.stages() - 1;
        for i in 0..tab.stages() {
            let err = (tab.w[i] - tab.a(last, i)).abs();
            if err > ROW_SUM_TOL {
                report.record(format!("{role} w - a_nu"), vec![i + 1], err, err);
            } else {
                report.observe(err);
            }
        }
    }
    report.finish(ROW_SUM_TOL)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// Classical order conditions of each tableau plus the coupling conditions
/// of the pair, up to `p <= 3`.
pub fn order_conditions(pair: &ImexPair, p: usize) -> Result<ConditionReport> {
    if !(1..=3).contains(&p) {
        return Err(Error::UnsupportedOrder(p));
    }
    let ex = pair.explicit();
    let im = pair.implicit();
    let weights = [("w~", ex.weights()), ("w", im.weights())];
    let abscissae = [("c~", ex.abscissae()), ("c", im.abscissae())];
    let matrices = [("A~", ex.matrix()), ("A", im.matrix())];

    let mut report = ConditionReport::new(format!("order {p}"));
    let mut check = |label: String, value: f64, target: f64| {
        let err = (value - target).abs();
        report.record(label, vec![], value, err);
    };

    for (wn, w) in weights {
        check(format!("sum {wn} = 1"), w.iter().sum(), 1.0);
    }
    if p >= 2 {
        for (wn, w) in weights {
            for (cn, c) in abscissae {
                check(format!("{wn}.{cn} = 1/2"), dot(w, c), 0.5);
            }
        }
    }
    if p >= 3 {
        for (wn, w) in weights {
            for (i, (cn, c)) in abscissae.iter().enumerate() {
                for (dn, d) in &abscissae[i..] {
                    check(format!("{wn}.({cn}*{dn}) = 1/3"), dot(w, &hadamard(c, d)), 1.0 / 3.0);
                }
            }
            for (mn, m) in matrices {
                for (cn, c) in abscissae {
                    check(format!("{wn}^T {mn} {cn} = 1/6"), dot(w, &m.mul_vec(c)), 1.0 / 6.0);
                }
            }
        }
    }
    Ok(report.finish(CONDITION_TOL))
}

/// `(λI + A)^{-1}` for the implicit (lower-triangular) tableau.
pub fn bhat_matrix(pair: &ImexPair, lambda: f64) -> Result<SquareMatrix> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::Config(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let a = pair.implicit();
    if !a.is_lower_triangular(false) {
        return Err(Error::InvalidTableau("implicit tableau is not lower triangular".into()));
    }
    let n = a.stages();
    let mut shifted = a.matrix().clone();
    for i in 0..n {
        shifted[(i, i)] += lambda;
    }
    let scale = (0..n)
        .flat_map(|i| shifted.row(i).to_vec())
        .fold(1.0_f64, |m, x| m.max(x.abs()));
    for i in 0..n {
        let d = shifted[(i, i)];
        if d.abs() <= 1e-14 * scale {
            return Err(Error::SingularMatrix { index: i + 1, value: d });
        }
    }
    // Forward substitution, column by column.
    let mut inv = SquareMatrix::zeros(n);
    for j in 0..n {
        inv[(j, j)] = 1.0 / shifted[(j, j)];
        for i in j + 1..n {
            let s: f64 = (j..i).map(|k| shifted[(i, k)] * inv[(k, j)]).sum();
            inv[(i, j)] = -s / shifted[(i, i)];
        }
    }
    Ok(inv)
}

fn interval_violation(v: f64) -> f64 {
    (-v).max(v - 1.0).max(0.0)
}

/// Sufficient convexity conditions for positivity of the space-homogeneous
/// scheme at stiffness ratio `λ = ε/(μΔt)`:
///
/// * `0 <= Σ_h b̂_ih c_h <= 1`
/// * `0 <= Σ_h b̂_ih (c_h - c̃_h) <= 1`
/// * `0 <= Σ_{h=j+1}^{i} b̂_ih ã_hj <= 1` for `j < i`
///
/// The global-stiff-accuracy precondition is recorded in `notes` and does
/// not gate the evaluation.
pub fn positivity_conditions(pair: &ImexPair, lambda: f64) -> Result<ConditionReport> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
    }
    let bhat = bhat_matrix(pair, lambda)?;
    let n = pair.stages();
    let c = pair.implicit().abscissae();
    let ct = pair.explicit().abscissae();
    let at = pair.explicit();

    let mut report = ConditionReport::new(format!("positivity (lambda = {lambda})"));
    for i in 0..n {
        let s1: f64 = (0..=i).map(|h| bhat[(i, h)] * c[h]).sum();
        report.record("sum b_ih c_h", vec![i + 1], s1, interval_violation(s1));
        let s2: f64 = (0..=i).map(|h| bhat[(i, h)] * (c[h] - ct[h])).sum();
        report.record("sum b_ih (c_h - c~_h)", vec![i + 1], s2, interval_violation(s2));
    }
    for i in 0..n {
        for j in 0..i {
            let s3: f64 = (j + 1..=i).map(|h| bhat[(i, h)] * at.a(h, j)).sum();
            report.record("sum b_ih a~_hj", vec![i + 1, j + 1], s3, interval_violation(s3));
        }
    }
    let gsa = pair.is_gsa();
    report.notes.push(format!("globally stiffly accurate: {gsa}"));
    Ok(report.finish(CONDITION_TOL))
}

// ---------------------------------------------------------------------------
// Tableau files

/// A numeric entry in a tableau file: a JSON number, or a string holding a
/// decimal (`"0.25"`, `"-1.5e-3"`) or a rational (`"-3/2"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Text(String),
    Number(f64),
}

impl Entry {
    pub fn value(&self) -> std::result::Result<f64, String> {
        match self {
            Entry::Number(x) => Ok(*x),
            Entry::Text(s) => parse_rational(s).map(ratio_to_f64),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableauSpec {
    #[serde(rename = "A")]
    pub a: Vec<Vec<Entry>>,
    pub w: Vec<Entry>,
    pub c: Vec<Entry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairFile {
    pub name: String,
    pub nu: usize,
    pub explicit: TableauSpec,
    pub implicit: TableauSpec,
}

fn ratio_to_f64(r: Ratio<i128>) -> f64 {
    // Exact numerator/denominator division rounds once.
    *r.numer() as f64 / *r.denom() as f64
}

/// Parses `p/q`, integers and plain or exponent decimals exactly.
pub fn parse_rational(s: &str) -> std::result::Result<Ratio<i128>, String> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p = parse_rational(p)?;
        let q = parse_rational(q)?;
        if *q.numer() == 0 {
            return Err(format!("zero denominator in `{s}`"));
        }
        return Ok(p / q);
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => {
            let e: i32 = s[pos + 1..]
                .parse()
                .map_err(|_| format!("bad exponent in `{s}`"))?;
            (&s[..pos], e)
        }
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty()
        || !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit())
    {
        return Err(format!("`{s}` is not a number"));
    }
    let all = format!("{int_part}{frac_part}");
    let numer: i128 = all
        .parse()
        .map_err(|_| format!("`{s}` does not fit an exact rational"))?;
    let scale = exponent - frac_part.len() as i32;
    let pow = |k: u32| 10_i128.checked_pow(k).ok_or_else(|| format!("`{s}` out of range"));
    let mut r = if scale >= 0 {
        Ratio::from_integer(
            numer
                .checked_mul(pow(scale as u32)?)
                .ok_or_else(|| format!("`{s}` out of range"))?,
        )
    } else {
        Ratio::new(numer, pow((-scale) as u32)?)
    };
    if negative {
        r = -r;
    }
    Ok(r)
}

fn tableau_from_spec(spec: &TableauSpec, nu: usize, role: &str) -> Result<ButcherTableau> {
    let bad = |msg: String| Error::InvalidTableau(format!("{role}: {msg}"));
    if spec.a.len() != nu {
        return Err(bad(format!("A has {} rows, nu = {nu}", spec.a.len())));
    }
    let rows = spec
        .a
        .iter()
        .map(|r| r.iter().map(Entry::value).collect::<std::result::Result<Vec<_>, _>>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(bad)?;
    let w = spec
        .w
        .iter()
        .map(Entry::value)
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(bad)?;
    let c = spec
        .c
        .iter()
        .map(Entry::value)
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(bad)?;
    ButcherTableau::new(SquareMatrix::from_rows(&rows)?, w, c)
}

impl PairFile {
    pub fn into_pair(self) -> Result<ImexPair> {
        let explicit = tableau_from_spec(&self.explicit, self.nu, "explicit")?;
        let implicit = tableau_from_spec(&self.implicit, self.nu, "implicit")?;
        ImexPair::new(self.name, explicit, implicit)
    }

    /// Decimal entries with round-trip precision.
    pub fn from_pair(pair: &ImexPair) -> Self {
        let spec = |t: &ButcherTableau| TableauSpec {
            a: t.matrix()
                .rows()
                .into_iter()
                .map(|r| r.into_iter().map(|x| Entry::Text(format!("{x:?}"))).collect())
                .collect(),
            w: t.weights().iter().map(|x| Entry::Text(format!("{x:?}"))).collect(),
            c: t.abscissae().iter().map(|x| Entry::Text(format!("{x:?}"))).collect(),
        };
        Self {
            name: pair.name().to_string(),
            nu: pair.stages(),
            explicit: spec(pair.explicit()),
            implicit: spec(pair.implicit()),
        }
    }
}

pub fn parse_pair(json: &str) -> std::result::Result<ImexPair, String> {
    let file: PairFile = serde_json::from_str(json).map_err(|e| e.to_string())?;
    file.into_pair().map_err(|e| e.to_string())
}

pub fn load_pair(path: &Path) -> Result<ImexPair> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pair(&text).map_err(|message| Error::Parse {
        path: path.to_path_buf(),
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-14
    }

    #[test]
    fn table1_implicit_entries() {
        let p = builtin_pair("IMEX-BE(2,2,4)").unwrap();
        let a = p.implicit();
        let expected = [
            [2.0, 0.0, 0.0, 0.0],
            [-2.0, 2.0, 0.0, 0.0],
            [0.0, -1.0, 2.0, 0.0],
            [0.0, 0.5, -1.5, 2.0],
        ];
        for (i, row) in expected.iter().enumerate() {
            assert_eq!(a.matrix().row(i), row);
        }
        assert_eq!(a.weights(), &[0.0, 0.5, -1.5, 2.0]);
    }

    #[test]
    fn table2_last_implicit_row_is_weights() {
        let p = builtin_pair("IMEX-BE(3,5,5)").unwrap();
        let a = p.implicit();
        let row: Vec<f64> = a.matrix().row(4).to_vec();
        assert_eq!(row, vec![0.25, 0.0, 0.75, -0.5, 0.5]);
        assert_eq!(a.weights(), &row[..]);
    }

    #[test]
    fn euler_pair() {
        let p = builtin_pair("IMEX-EULER(1,1,1)").unwrap();
        assert_eq!(p.explicit().a(0, 0), 0.0);
        assert_eq!(p.implicit().a(0, 0), 1.0);
        assert_eq!(p.explicit().weights(), &[1.0]);
    }

    #[test]
    fn unknown_name_lists_available() {
        let err = builtin_pair("RK4").unwrap_err().to_string();
        for name in BUILTIN_SCHEMES {
            assert!(err.contains(name), "{err}");
        }
    }

    #[test]
    fn builtins_are_consistent() {
        for name in BUILTIN_SCHEMES {
            let r = validate_pair(&builtin_pair(name).unwrap());
            assert!(r.satisfied, "{name}: {r:?}");
            assert!(r.worst_violation <= 1e-14);
        }
    }

    #[test]
    fn injected_diagonal_defect_is_reported() {
        let mut p = builtin_pair("IMEX-BE(2,2,4)").unwrap();
        p.implicit_mut().set_a(0, 0, 3.0);
        let r = validate_pair(&p);
        assert!(!r.satisfied);
        assert_eq!(r.worst_violation, 1.0);
        let d = &r.details[0];
        assert_eq!(d.index, vec![1]);
        assert_eq!(d.value, 1.0);
    }

    #[test]
    fn upper_entries_are_reported() {
        let mut p = builtin_pair("IMEX-BE(2,2,4)").unwrap();
        p.explicit_mut().set_a(1, 1, 0.5);
        let r = validate_pair(&p);
        assert!(!r.satisfied);
        assert!(r.details.iter().any(|d| d.label == "explicit upper entry" && d.index == vec![2, 2]));
    }

    #[test]
    fn gsa_status_of_builtins() {
        assert!(builtin_pair("IMEX-BE(3,5,5)").unwrap().is_gsa());
        assert!(builtin_pair("IMEX-BE(2,2,4)").unwrap().is_gsa());
        let euler = is_globally_stiffly_accurate(&builtin_pair("IMEX-EULER(1,1,1)").unwrap());
        assert!(!euler.satisfied);
        // Only the explicit weight disagrees: w~ = 1 while a~_11 = 0.
        assert_eq!(euler.details.len(), 1);
        assert_eq!(euler.details[0].label, "explicit w - a_nu");
    }

    #[test]
    fn gsa_flags_small_weight_perturbation() {
        for k in 0..4 {
            let mut p = builtin_pair("IMEX-BE(2,2,4)").unwrap();
            let w = p.implicit().weights()[k];
            p.implicit_mut().set_weight(k, w + 1e-10);
            assert!(!p.is_gsa());
            let mut q = builtin_pair("IMEX-BE(2,2,4)").unwrap();
            let w = q.explicit().weights()[k];
            q.explicit_mut().set_weight(k, w - 1e-10);
            assert!(!q.is_gsa());
        }
        // Zero-size simultaneous perturbation leaves the status untouched.
        let mut p = builtin_pair("IMEX-BE(3,5,5)").unwrap();
        let (w, a) = (p.implicit().weights()[2], p.implicit().a(4, 2));
        p.implicit_mut().set_weight(2, w + 0.0);
        p.implicit_mut().set_a(4, 2, a + 0.0);
        assert!(p.is_gsa());
    }

    #[test]
    fn table1_second_order_sums() {
        let p = builtin_pair("IMEX-BE(2,2,4)").unwrap();
        let ex = p.explicit();
        let im = p.implicit();
        assert!(approx(dot(im.weights(), im.abscissae()), 0.5));
        assert!(approx(dot(ex.weights(), ex.abscissae()), 0.5));
        let r = order_conditions(&p, 2).unwrap();
        assert!(r.satisfied, "{r:?}");
    }

    #[test]
    fn table2_third_order() {
        let p = builtin_pair("IMEX-BE(3,5,5)").unwrap();
        for order in 1..=3 {
            let r = order_conditions(&p, order).unwrap();
            assert!(r.satisfied, "{r:?}");
        }
        // 2 + 4 + (2*3 + 2*4) conditions.
        assert_eq!(order_conditions(&p, 3).unwrap().details.len(), 20);
    }

    #[test]
    fn euler_is_first_order_only() {
        let p = builtin_pair("IMEX-EULER(1,1,1)").unwrap();
        assert!(order_conditions(&p, 1).unwrap().satisfied);
        let r = order_conditions(&p, 2).unwrap();
        assert!(!r.satisfied);
        let wc = r.details.iter().find(|d| d.label == "w.c = 1/2").unwrap();
        assert_eq!(wc.value, 1.0);
    }

    #[test]
    fn unsupported_order() {
        let p = builtin_pair("IMEX-BE(3,5,5)").unwrap();
        assert!(matches!(order_conditions(&p, 4), Err(Error::UnsupportedOrder(4))));
        assert!(matches!(order_conditions(&p, 0), Err(Error::UnsupportedOrder(0))));
    }

    fn one_stage(a: f64) -> ImexPair {
        let ex = ButcherTableau::with_row_sums(SquareMatrix::zeros(1), vec![1.0]).unwrap();
        let im = ButcherTableau::with_row_sums(SquareMatrix::from_rows(&[vec![a]]).unwrap(), vec![1.0])
            .unwrap();
        ImexPair::new("T(1,1,1)", ex, im).unwrap()
    }

    #[test]
    fn scalar_bhat() {
        assert_eq!(bhat_matrix(&one_stage(2.0), 0.0).unwrap()[(0, 0)], 0.5);
        assert_eq!(bhat_matrix(&one_stage(1.0), 1.0).unwrap()[(0, 0)], 0.5);
    }

    #[test]
    fn bhat_singular_for_ck_type_at_zero() {
        let p = builtin_pair("IMEX-BE(3,5,5)").unwrap();
        match bhat_matrix(&p, 0.0) {
            Err(Error::SingularMatrix { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn bhat_residual() {
        for name in BUILTIN_SCHEMES {
            let p = builtin_pair(name).unwrap();
            for lambda in [1e-8, 1e-3, 1.0, 1e3] {
                let b = bhat_matrix(&p, lambda).unwrap();
                let mut m = p.implicit().matrix().clone();
                for i in 0..m.dim() {
                    m[(i, i)] += lambda;
                }
                let res = m.mul(&b).max_abs_diff(&SquareMatrix::identity(m.dim()));
                assert!(res <= 1e-12, "{name} lambda={lambda}: {res:e}");
            }
        }
    }

    #[test]
    fn table1_positivity_hand_values_at_one() {
        // (λI + A)^{-1} at λ = 1 worked by hand: row 4 = (0, 0, 1/6, 1/3).
        let p = builtin_pair("IMEX-BE(2,2,4)").unwrap();
        let b = bhat_matrix(&p, 1.0).unwrap();
        assert!(b[(3, 0)].abs() < 1e-16 && b[(3, 1)].abs() < 1e-16);
        assert!(approx(b[(3, 2)], 1.0 / 6.0));
        let r = positivity_conditions(&p, 1.0).unwrap();
        assert!(r.satisfied, "{r:?}");
        let first: Vec<f64> = r
            .details
            .iter()
            .filter(|d| d.label == "sum b_ih c_h")
            .map(|d| d.value)
            .collect();
        let expected = [2.0 / 3.0, 4.0 / 9.0, 13.0 / 27.0, 0.5];
        for (v, e) in first.iter().zip(expected) {
            assert!(approx(*v, e), "{v} vs {e}");
        }
    }

    #[test]
    fn table1_positivity_sweep() {
        let p = builtin_pair("IMEX-BE(2,2,4)").unwrap();
        for lambda in [0.1, 0.25, 0.5, 1.0] {
            let r = positivity_conditions(&p, lambda).unwrap();
            assert!(r.satisfied, "lambda={lambda}: {r}");
        }
        let r = positivity_conditions(&p, 10.0).unwrap();
        assert!(!r.satisfied);
        assert!(r.notes.iter().any(|n| n.contains("true")));
    }

    #[test]
    fn positivity_rejects_nonpositive_lambda() {
        let p = builtin_pair("IMEX-BE(2,2,4)").unwrap();
        assert!(positivity_conditions(&p, 0.0).is_err());
    }

    #[test]
    fn rational_parsing() {
        let r = |s| parse_rational(s).unwrap();
        assert_eq!(r("-3/2"), Ratio::new(-3, 2));
        assert_eq!(r("5/18"), Ratio::new(5, 18));
        assert_eq!(r("0.25"), Ratio::new(1, 4));
        assert_eq!(r("-1.5e-3"), Ratio::new(-3, 2000));
        assert_eq!(r("2e2"), Ratio::from_integer(200));
        assert_eq!(r("7"), Ratio::from_integer(7));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("").is_err());
    }

    #[test]
    fn pair_file_roundtrip() {
        let json = r#"{
            "name": "IMEX-EULER(1,1,1)", "nu": 1,
            "explicit": {"A": [["0"]], "w": ["1"], "c": ["0"]},
            "implicit": {"A": [["2/2"]], "w": [1.0], "c": ["1"]}
        }"#;
        let p = parse_pair(json).unwrap();
        assert_eq!(p, builtin_pair("IMEX-EULER(1,1,1)").unwrap());

        let q = builtin_pair("IMEX-BE(3,5,5)").unwrap();
        let text = serde_json::to_string(&PairFile::from_pair(&q)).unwrap();
        assert_eq!(parse_pair(&text).unwrap(), q);
    }

    #[test]
    fn pair_file_rejects_bad_shape() {
        let json = r#"{
            "name": "X(1,1,1)", "nu": 2,
            "explicit": {"A": [["0"]], "w": ["1"], "c": ["0"]},
            "implicit": {"A": [["1"]], "w": ["1"], "c": ["1"]}
        }"#;
        assert!(parse_pair(json).is_err());
    }

    #[test]
    fn scheme_label() {
        let (family, l) = parse_scheme_label("IMEX-BE(3,5,5)").unwrap();
        assert_eq!(family, "IMEX-BE");
        assert_eq!((l.order, l.explicit_evals, l.implicit_evals), (3, 5, 5));
        assert!(parse_scheme_label("IMEX-BE").is_none());
        assert!(parse_scheme_label("IMEX(1,2)").is_none());
    }
}
