//! Dense LP/QP solving in the standard form
//! `min 1/2 x^T P x + q^T x  s.t.  A x <= b, G x = h`.
//!
//! Linear programs go through a two-phase simplex applied to the dual
//! standard form, which returns exact vertex multipliers and explicit
//! recession or Farkas certificates. Quadratic programs use a
//! predictor-corrector interior point method.

mod ipm;
mod simplex;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use simplex::{solve_standard, StdOutcome};

#[derive(Debug, Clone, PartialEq)]
pub struct StandardForm {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
}

impl StandardForm {
    pub fn new(
        p: DMatrix<f64>,
        q: DVector<f64>,
        a: DMatrix<f64>,
        b: DVector<f64>,
        g: DMatrix<f64>,
        h: DVector<f64>,
    ) -> Result<Self> {
        let sf = Self { p, q, a, b, g, h };
        sf.validate()?;
        Ok(sf)
    }

    /// `min q^T x  s.t.  A x <= b`.
    pub fn lp(q: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let n = q.len();
        Self::new(DMatrix::zeros(n, n), q, a, b, DMatrix::zeros(0, n), DVector::zeros(0))
    }

    pub fn with_equalities(mut self, g: DMatrix<f64>, h: DVector<f64>) -> Result<Self> {
        self.g = g;
        self.h = h;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.q.len();
        let bad = self.p.shape() != (n, n)
            || self.a.ncols() != n
            || self.a.nrows() != self.b.len()
            || self.g.ncols() != n
            || self.g.nrows() != self.h.len();
        if bad {
            return Err(Error::Shape(format!(
                "P {:?}, q {}, A {:?}, b {}, G {:?}, h {}",
                self.p.shape(),
                n,
                self.a.shape(),
                self.b.len(),
                self.g.shape(),
                self.h.len()
            )));
        }
        let asym = (&self.p - self.p.transpose()).amax();
        if asym > 1e-12 * (1.0 + self.p.amax()) {
            return Err(Error::Parameter(format!("P is not symmetric (max asymmetry {asym:e})")));
        }
        let finite = self.p.iter().chain(self.q.iter()).chain(self.a.iter());
        if !finite.chain(self.b.iter()).chain(self.g.iter()).chain(self.h.iter()).all(|v| v.is_finite()) {
            return Err(Error::Parameter("non-finite entry in standard form".into()));
        }
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.q.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.b.len()
    }

    pub fn num_eq(&self) -> usize {
        self.h.len()
    }

    pub fn is_lp(&self) -> bool {
        self.p.iter().all(|&v| v == 0.0)
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        0.5 * x.dot(&(&self.p * &x)) + self.q.dot(&x)
    }

    /// Plain-text serialization with round-trip exact numbers.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let (n, m, me) = (self.num_vars(), self.num_ineq(), self.num_eq());
        writeln!(out, "standard_form {n} {m} {me}").unwrap();
        let mut block = |name: &str, rows: usize, cols: usize, at: &dyn Fn(usize, usize) -> f64| {
            writeln!(out, "{name}").unwrap();
            for i in 0..rows {
                let line: Vec<String> = (0..cols).map(|j| format!("{:?}", at(i, j))).collect();
                writeln!(out, "{}", line.join(" ")).unwrap();
            }
        };
        block("P", n, n, &|i, j| self.p[(i, j)]);
        block("q", 1, n, &|_, j| self.q[j]);
        block("A", m, n, &|i, j| self.a[(i, j)]);
        block("b", 1, m, &|_, j| self.b[j]);
        block("G", me, n, &|i, j| self.g[(i, j)]);
        block("h", 1, me, &|_, j| self.h[j]);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Parameter(format!("standard form text: {msg}"));
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty"))?.split_whitespace().collect();
        if header.len() != 4 || header[0] != "standard_form" {
            return Err(bad("missing header"));
        }
        let dims: Vec<usize> = header[1..]
            .iter()
            .map(|s| s.parse().map_err(|_| bad("bad dimension")))
            .collect::<Result<_>>()?;
        let (n, m, me) = (dims[0], dims[1], dims[2]);
        let mut read = |name: &str, rows: usize, cols: usize| -> Result<Vec<f64>> {
            if lines.next() != Some(name) {
                return Err(bad(&format!("expected block {name}")));
            }
            let mut vals = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let line = lines.next().ok_or_else(|| bad("truncated"))?;
                let row: Vec<f64> = line
                    .split_whitespace()
                    .map(|t| t.parse().map_err(|_| bad(&format!("bad number {t:?}"))))
                    .collect::<Result<_>>()?;
                if row.len() != cols {
                    return Err(bad(&format!("block {name} row has {} entries, expected {cols}", row.len())));
                }
                vals.extend(row);
            }
            Ok(vals)
        };
        let p = DMatrix::from_row_slice(n, n, &read("P", n, n)?);
        let q = DVector::from_vec(read("q", 1, n)?);
        let a = DMatrix::from_row_slice(m, n, &read("A", m, n)?);
        let b = DVector::from_vec(read("b", 1, m)?);
        let g = DMatrix::from_row_slice(me, n, &read("G", me, n)?);
        let h = DVector::from_vec(read("h", 1, me)?);
        Self::new(p, q, a, b, g, h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Simplex for LPs, interior point otherwise.
    Auto,
    Simplex,
    InteriorPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub feasibility_tol: f64,
    pub complementarity_tol: f64,
    pub pivot_tol: f64,
    pub max_iterations: usize,
    pub method: Method,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-8,
            complementarity_tol: 1e-8,
            pivot_tol: 1e-10,
            max_iterations: 200,
            method: Method::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Objective unbounded below along `direction`: `A v <= 0`, `G v = 0`,
    /// `q^T v < 0`.
    Unbounded { direction: Vec<f64> },
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    /// Multipliers of `A x <= b` (nonnegative).
    pub ineq_multipliers: Vec<f64>,
    /// Multipliers of `G x = h`.
    pub eq_multipliers: Vec<f64>,
    pub objective: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    pub diagnostics: Option<String>,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    fn bare(status: SolveStatus, sf: &StandardForm, iterations: usize) -> Self {
        Self {
            status,
            x: vec![0.0; sf.num_vars()],
            ineq_multipliers: vec![0.0; sf.num_ineq()],
            eq_multipliers: vec![0.0; sf.num_eq()],
            objective: f64::NAN,
            residuals: Residuals::default(),
            iterations,
            diagnostics: None,
        }
    }
}

fn amax(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Residuals of a primal-dual pair.
pub fn residuals(sf: &StandardForm, x: &[f64], lambda: &[f64], nu: &[f64]) -> Residuals {
    let xv = DVector::from_column_slice(x);
    let lv = DVector::from_column_slice(lambda);
    let nv = DVector::from_column_slice(nu);
    let slack = &sf.b - &sf.a * &xv;
    let primal = slack.iter().fold(0.0f64, |a, &s| a.max(-s)).max(amax(&(&sf.g * &xv - &sf.h)));
    let stat = &sf.p * &xv + &sf.q + sf.a.tr_mul(&lv) + sf.g.tr_mul(&nv);
    let dual = amax(&stat).max(lv.iter().fold(0.0f64, |a, &l| a.max(-l)));
    let complementarity = lv.iter().zip(slack.iter()).fold(0.0f64, |a, (l, s)| a.max((l * s).abs()));
    Residuals {
        primal,
        dual,
        complementarity,
    }
}

/// Solve `sf`. The result is a deterministic function of the input bits and
/// options.
pub fn solve(sf: &StandardForm, opts: &SolverOptions) -> SolveResult {
    solve_from(sf, opts, None)
}

/// Like [`solve`], with an optional initial point for the interior point path.
pub fn solve_from(sf: &StandardForm, opts: &SolverOptions, x0: Option<&[f64]>) -> SolveResult {
    let use_simplex = match opts.method {
        Method::Auto => sf.is_lp(),
        Method::Simplex => true,
        Method::InteriorPoint => false,
    };
    if use_simplex && sf.is_lp() {
        return solve_lp(sf, opts);
    }
    let out = ipm::solve(sf, opts, x0);
    let x: Vec<f64> = out.x.iter().copied().collect();
    let lam: Vec<f64> = out.lambda.iter().copied().collect();
    let nu: Vec<f64> = out.nu.iter().copied().collect();
    SolveResult {
        residuals: residuals(sf, &x, &lam, &nu),
        objective: sf.objective(&x),
        status: out.status,
        x,
        ineq_multipliers: lam,
        eq_multipliers: nu,
        iterations: out.iterations,
        diagnostics: out.diagnostics,
    }
}

/// LP path: the dual of `min q^T x, A x <= b, G x = h` is the standard-form
/// problem `min b^T l + h^T (n+ - n-)` over `A^T l + G^T (n+ - n-) = -q`,
/// `l, n+, n- >= 0`, whose row multipliers are the primal point.
fn solve_lp(sf: &StandardForm, opts: &SolverOptions) -> SolveResult {
    let (n, m, me) = (sf.num_vars(), sf.num_ineq(), sf.num_eq());
    let mut mm = DMatrix::zeros(n, m + 2 * me);
    mm.columns_mut(0, m).copy_from(&sf.a.transpose());
    mm.columns_mut(m, me).copy_from(&sf.g.transpose());
    mm.columns_mut(m + me, me).copy_from(&(-sf.g.transpose()));
    let mut c: Vec<f64> = sf.b.iter().copied().collect();
    c.extend(sf.h.iter());
    c.extend(sf.h.iter().map(|v| -v));
    let r: Vec<f64> = sf.q.iter().map(|v| -v).collect();
    let budget = opts.max_iterations.max(50 * (n + m + 2 * me));

    match solve_standard(&mm, &r, &c, opts.pivot_tol, budget) {
        StdOutcome::Optimal { w, y, iterations } => {
            let lam = w[..m].to_vec();
            let nu: Vec<f64> = (0..me).map(|i| w[m + i] - w[m + me + i]).collect();
            let mut res = SolveResult {
                residuals: residuals(sf, &y, &lam, &nu),
                objective: sf.objective(&y),
                status: SolveStatus::Optimal,
                x: y,
                ineq_multipliers: lam,
                eq_multipliers: nu,
                iterations,
                diagnostics: None,
            };
            let scale = 1.0 + amax(&sf.b).max(amax(&sf.q)).max(amax(&sf.h));
            if res.residuals.primal > opts.feasibility_tol * scale || res.residuals.dual > opts.feasibility_tol * scale {
                res.diagnostics = Some(format!("residuals {:?} exceed tolerance", res.residuals));
                res.status = SolveStatus::NumericalFailure;
            }
            res
        }
        StdOutcome::Infeasible { y, iterations } => {
            // y is an improving recession direction; the primal is unbounded
            // exactly when it is feasible.
            let zero = vec![0.0; n];
            match solve_standard(&mm, &zero, &c, opts.pivot_tol, budget) {
                StdOutcome::Optimal { y: x, iterations: more, .. } => {
                    let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let direction: Vec<f64> = y.iter().map(|v| clean(v / norm)).collect();
                    let mut res = SolveResult::bare(SolveStatus::Unbounded { direction }, sf, iterations + more);
                    res.objective = f64::NEG_INFINITY;
                    res.x = x;
                    res
                }
                StdOutcome::Unbounded { ray, iterations: more } => farkas(sf, ray, iterations + more),
                StdOutcome::Infeasible { iterations: more, .. } | StdOutcome::Failed { iterations: more, .. } => {
                    let mut res = SolveResult::bare(SolveStatus::NumericalFailure, sf, iterations + more);
                    res.diagnostics = Some("feasibility subproblem failed".into());
                    res
                }
            }
        }
        StdOutcome::Unbounded { ray, iterations } => farkas(sf, ray, iterations),
        StdOutcome::Failed { reason, iterations } => {
            let mut res = SolveResult::bare(SolveStatus::NumericalFailure, sf, iterations);
            res.diagnostics = Some(reason);
            res
        }
    }
}

fn clean(v: f64) -> f64 {
    if v.abs() < 1e-15 {
        0.0
    } else {
        v
    }
}

/// Infeasible result whose multipliers hold the Farkas certificate
/// `A^T l + G^T n = 0`, `l >= 0`, `b^T l + h^T n < 0`.
fn farkas(sf: &StandardForm, ray: Vec<f64>, iterations: usize) -> SolveResult {
    let (m, me) = (sf.num_ineq(), sf.num_eq());
    let mut res = SolveResult::bare(SolveStatus::Infeasible, sf, iterations);
    res.objective = f64::INFINITY;
    res.ineq_multipliers = ray[..m].to_vec();
    res.eq_multipliers = (0..me).map(|i| ray[m + i] - ray[m + me + i]).collect();
    res
}

/// Result of [`recession_probe`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Recession {
    /// A nonzero `v` with `A v <= 0`, normalized so its largest coordinate
    /// magnitude is one.
    Direction { direction: Vec<f64>, coordinate: usize, sign: f64 },
    /// No nonzero `v` satisfies `A v <= 0`.
    Bounded,
}

/// Search for a nonzero `v` with `A v <= 0` by enumerating the normalizations
/// `sign * v_i = 1`, `|v| <= 1` in coordinate order, positive sign first.
pub fn recession_probe(a: &DMatrix<f64>, opts: &SolverOptions) -> Result<Recession> {
    let (m, d) = a.shape();
    if d == 0 {
        return Err(Error::Shape("recession probe on zero columns".into()));
    }
    let mut rows = DMatrix::zeros(m + 2 * d, d);
    rows.rows_mut(0, m).copy_from(a);
    for i in 0..d {
        rows[(m + i, i)] = 1.0;
        rows[(m + d + i, i)] = -1.0;
    }
    let mut b = DVector::zeros(m + 2 * d);
    b.rows_mut(m, 2 * d).fill(1.0);
    let base = StandardForm::lp(DVector::zeros(d), rows, b)?;
    for i in 0..d {
        for sign in [1.0, -1.0] {
            let mut g = DMatrix::zeros(1, d);
            g[(0, i)] = sign;
            let sf = base.clone().with_equalities(g, DVector::from_element(1, 1.0))?;
            let res = solve(&sf, opts);
            match res.status {
                SolveStatus::Optimal => {
                    let mut direction: Vec<f64> = res.x.iter().map(|&v| clean(v)).collect();
                    direction[i] = sign;
                    return Ok(Recession::Direction {
                        direction,
                        coordinate: i,
                        sign,
                    });
                }
                SolveStatus::Infeasible => {}
                ref other => {
                    return Err(Error::Solver(format!("recession probe subproblem ended {other:?}")));
                }
            }
        }
    }
    Ok(Recession::Bounded)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub stationarity: f64,
    pub primal_feasibility: f64,
    pub dual_feasibility: f64,
    pub complementarity: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl KktReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct")
    }
}

/// Maximum KKT violations of `result` for `sf`. Complementarity is measured
/// relative to `1 + |objective|`.
pub fn verify_kkt(sf: &StandardForm, result: &SolveResult, tol: f64) -> KktReport {
    let x = DVector::from_column_slice(&result.x);
    let lam = DVector::from_column_slice(&result.ineq_multipliers);
    let nu = DVector::from_column_slice(&result.eq_multipliers);
    let stat = &sf.p * &x + &sf.q + sf.a.tr_mul(&lam) + sf.g.tr_mul(&nu);
    let slack = &sf.b - &sf.a * &x;
    let stationarity = amax(&stat);
    let primal_feasibility = slack.iter().fold(0.0f64, |a, &s| a.max(-s)).max(amax(&(&sf.g * &x - &sf.h)));
    let dual_feasibility = lam.iter().fold(0.0f64, |a, &l| a.max(-l));
    let obj = if result.objective.is_finite() { result.objective } else { 0.0 };
    let complementarity = lam
        .iter()
        .zip(slack.iter())
        .fold(0.0f64, |a, (l, s)| a.max((l * s).abs()))
        / (1.0 + obj.abs());
    let passed = result.status == SolveStatus::Optimal
        && stationarity <= tol
        && primal_feasibility <= tol
        && dual_feasibility <= tol
        && complementarity <= tol;
    KktReport {
        stationarity,
        primal_feasibility,
        dual_feasibility,
        complementarity,
        tolerance: tol,
        passed,
    }
}
