//! Convex Q-learning programs: the empirical loss, the batch LP and the
//! episodic proximal QP.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::envs::State;
use crate::error::{Error, Result};
use crate::features::{qbar, FeatureMap};
use crate::sampling::{tdiff, TrajectorySegment};
use crate::solver::{self, SolveResult, SolveStatus, SolverOptions, StandardForm};

/// `Gamma(theta) = (1/N) sum_k [tdiff_k(theta)]_-`.
pub fn gamma(theta: &[f64], segments: &[TrajectorySegment], features: &dyn FeatureMap) -> Result<f64> {
    if segments.is_empty() {
        return Err(Error::EmptyData("gamma needs at least one segment"));
    }
    let total: f64 = segments
        .iter()
        .map(|s| (-tdiff(theta, s, features)).max(0.0))
        .sum();
    Ok(total / segments.len() as f64)
}

/// `-Q^theta(z_start) + C + Q_bar^{theta_n}(x_next)`, affine in `theta`.
pub fn dqn_tdiff(theta: &[f64], theta_n: &[f64], seg: &TrajectorySegment, features: &dyn FeatureMap) -> f64 {
    -features.q_value(theta, &seg.x_start, seg.action) + dqn_target(theta_n, seg, features)
}

fn dqn_target(theta_n: &[f64], seg: &TrajectorySegment, features: &dyn FeatureMap) -> f64 {
    seg.cost + qbar(theta_n, &seg.x_next, features).0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuPolicy {
    /// Equal weight on every observed starting pair, repeats counted.
    Empirical,
    /// Equal weight on each distinct observed starting pair.
    UniformSupport,
    /// Every observed starting state paired with every action, equal weights.
    AllActions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuVector {
    pub psi_bar: Vec<f64>,
    pub support: Vec<(State, usize)>,
    pub weights: Vec<f64>,
}

impl MuVector {
    pub fn explicit(support: Vec<(State, usize)>, weights: Vec<f64>, features: &dyn FeatureMap) -> Result<Self> {
        if support.is_empty() || support.len() != weights.len() {
            return Err(Error::Parameter(format!(
                "{} support pairs with {} weights",
                support.len(),
                weights.len()
            )));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| !(w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!("mu weights are not a distribution (sum {total})")));
        }
        let mut psi_bar = vec![0.0; features.dim()];
        let mut psi = vec![0.0; features.dim()];
        for ((x, u), w) in support.iter().zip(&weights) {
            features.eval_into(x, *u, &mut psi);
            for (p, v) in psi_bar.iter_mut().zip(&psi) {
                *p += w * v;
            }
        }
        if psi_bar.iter().all(|&v| v == 0.0) {
            log::warn!("mu vector is zero; the linear objective is degenerate");
        }
        Ok(Self {
            psi_bar,
            support,
            weights,
        })
    }

    pub fn from_segments(policy: MuPolicy, segments: &[TrajectorySegment], features: &dyn FeatureMap) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::EmptyData("mu vector needs observed pairs"));
        }
        let pairs: Vec<(State, usize)> = segments.iter().map(|s| (s.x_start.clone(), s.action)).collect();
        let pairs = match policy {
            MuPolicy::Empirical => pairs,
            MuPolicy::UniformSupport => {
                let mut seen = BTreeMap::new();
                for p in pairs {
                    let key: (Vec<u64>, usize) = (p.0.iter().map(|v| v.to_bits()).collect(), p.1);
                    seen.entry(key).or_insert(p);
                }
                seen.into_values().collect()
            }
            MuPolicy::AllActions => {
                let n = features.num_actions();
                pairs
                    .into_iter()
                    .flat_map(|(x, _)| (0..n).map(move |u| (x.clone(), u)))
                    .collect()
            }
        };
        let w = 1.0 / pairs.len() as f64;
        let weights = vec![w; pairs.len()];
        Self::explicit(pairs, weights, features)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    None,
    /// `(kappa/B) sum_k D_dqn_k(theta)^2`, targets frozen at `theta_n`.
    DqnSquare,
    /// `(kappa/B) sum_k s_k^2` on the epigraph slacks.
    HingeSquare,
    /// `kappa |theta|^2`.
    L2,
    /// `kappa |theta|_1` through an epigraph.
    L1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodicUpdateSpec {
    pub kappa: f64,
    pub tol: f64,
    pub alpha: f64,
    pub regularizer: RegularizerKind,
    pub mu: MuPolicy,
}

impl Default for EpisodicUpdateSpec {
    fn default() -> Self {
        Self {
            kappa: 0.01,
            tol: 0.0,
            alpha: 1.0,
            regularizer: RegularizerKind::DqnSquare,
            mu: MuPolicy::Empirical,
        }
    }
}

impl EpisodicUpdateSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Parameter(format!("alpha = {} must be positive", self.alpha)));
        }
        if !(self.kappa >= 0.0) || !(self.tol >= 0.0) {
            return Err(Error::Parameter("kappa and tol must be nonnegative".into()));
        }
        Ok(())
    }
}

/// A program in minimization standard form over `[theta; extra]`, plus the
/// layout needed to read results back.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexProgram {
    pub form: StandardForm,
    /// Constant added to the standard-form objective to recover the true one.
    pub constant: f64,
    pub n_theta: usize,
    pub n_segments: usize,
    pub n_actions: usize,
}

impl ConvexProgram {
    /// Row of the Bellman constraint for segment `k` and action `u`.
    pub fn row(&self, k: usize, u: usize) -> usize {
        u * self.n_segments + k
    }

    pub fn theta<'a>(&self, result: &'a SolveResult) -> &'a [f64] {
        &result.x[..self.n_theta]
    }

    pub fn to_text(&self) -> String {
        self.form.to_text()
    }
}

/// Rows `psi(z_k) - psi(x_next_k, u)` stacked by action block.
fn bellman_rows(segments: &[TrajectorySegment], features: &dyn FeatureMap) -> DMatrix<f64> {
    let (n, d, nu) = (segments.len(), features.dim(), features.num_actions());
    let mut a = DMatrix::zeros(nu * n, d);
    let mut start = vec![0.0; d];
    let mut next = vec![0.0; d];
    for (k, s) in segments.iter().enumerate() {
        features.eval_into(&s.x_start, s.action, &mut start);
        for u in 0..nu {
            features.eval_into(&s.x_next, u, &mut next);
            for j in 0..d {
                a[(u * n + k, j)] = start[j] - next[j];
            }
        }
    }
    a
}

/// Batch LP `max psi_bar^T theta  s.t.  (psi(z_k) - psi(x_next_k, u))^T theta <= C_k`
/// for every segment `k` and action `u`, stored as `min -psi_bar^T theta`.
pub fn build_primal_lp(segments: &[TrajectorySegment], features: &dyn FeatureMap, psi_bar: &[f64]) -> Result<ConvexProgram> {
    if psi_bar.len() != features.dim() {
        return Err(Error::Shape(format!("psi_bar has {} entries, features {}", psi_bar.len(), features.dim())));
    }
    let nu = features.num_actions();
    let a = bellman_rows(segments, features);
    let b = DVector::from_fn(nu * segments.len(), |r, _| segments[r % segments.len()].cost);
    let q = -DVector::from_column_slice(psi_bar);
    Ok(ConvexProgram {
        form: StandardForm::lp(q, a, b)?,
        constant: 0.0,
        n_theta: features.dim(),
        n_segments: segments.len(),
        n_actions: nu,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum BatchOutcome {
    Optimal { theta: Vec<f64>, value: f64, result: SolveResult },
    Unbounded { direction: Vec<f64> },
}

/// Solve the batch LP. A zero objective returns `theta = 0`, which is always
/// feasible.
pub fn solve_batch(lp: &ConvexProgram, opts: &SolverOptions) -> Result<BatchOutcome> {
    if lp.form.q.iter().all(|&v| v == 0.0) {
        let mut result = solver::solve(&lp.form, opts);
        let theta = vec![0.0; lp.n_theta];
        result.x = theta.clone();
        result.objective = 0.0;
        return Ok(BatchOutcome::Optimal { theta, value: 0.0, result });
    }
    let result = solver::solve(&lp.form, opts);
    match &result.status {
        SolveStatus::Optimal => Ok(BatchOutcome::Optimal {
            theta: lp.theta(&result).to_vec(),
            value: -result.objective,
            result,
        }),
        SolveStatus::Unbounded { direction } => Ok(BatchOutcome::Unbounded {
            direction: direction[..lp.n_theta].to_vec(),
        }),
        SolveStatus::Infeasible => Err(Error::Solver(
            "batch LP reported infeasible although theta = 0 is feasible; costs must be nonnegative".into(),
        )),
        SolveStatus::NumericalFailure => Err(Error::Solver(format!(
            "batch LP failed: {} (residuals {:?})",
            result.diagnostics.as_deref().unwrap_or("no diagnostics"),
            result.residuals
        ))),
    }
}

/// Episodic QP over `[theta; s; t]`:
///
/// `min -psi_bar^T theta + kappa G(theta) + |theta - theta_n|^2 / (2 alpha)`
/// subject to `a_{k,u}^T theta - s_k <= C_k`, `s >= 0`, `mean(s) <= Tol`.
///
/// With `Tol = 0` the slacks are forced to zero and are dropped, leaving the
/// rows `a_{k,u}^T theta <= C_k`. The `t` block exists only for `L1`.
pub fn build_episodic_qp(
    theta_n: &[f64],
    segments: &[TrajectorySegment],
    spec: &EpisodicUpdateSpec,
    features: &dyn FeatureMap,
    psi_bar: &[f64],
) -> Result<ConvexProgram> {
    spec.validate()?;
    let d = features.dim();
    if theta_n.len() != d || psi_bar.len() != d {
        return Err(Error::Shape(format!(
            "theta_n {}, psi_bar {}, features {d}",
            theta_n.len(),
            psi_bar.len()
        )));
    }
    let bn = segments.len();
    if bn == 0 {
        return Err(Error::EmptyData("episodic update needs at least one segment"));
    }
    let nu = features.num_actions();
    let slacks = spec.tol > 0.0;
    let ns = if slacks { bn } else { 0 };
    let l1 = spec.regularizer == RegularizerKind::L1 && spec.kappa > 0.0;
    let nt = if l1 { d } else { 0 };
    let nv = d + ns + nt;

    let mut p = DMatrix::zeros(nv, nv);
    let mut q = DVector::zeros(nv);
    let inv_a = 1.0 / spec.alpha;
    let mut constant = 0.5 * inv_a * theta_n.iter().map(|v| v * v).sum::<f64>();
    for i in 0..d {
        p[(i, i)] += inv_a;
        q[i] += -psi_bar[i] - inv_a * theta_n[i];
    }
    let kb = spec.kappa / bn as f64;
    match spec.regularizer {
        RegularizerKind::None => {}
        _ if spec.kappa == 0.0 => {}
        RegularizerKind::DqnSquare => {
            let mut psi = vec![0.0; d];
            for s in segments {
                features.eval_into(&s.x_start, s.action, &mut psi);
                let t = dqn_target(theta_n, s, features);
                for i in 0..d {
                    if psi[i] == 0.0 {
                        continue;
                    }
                    q[i] -= 2.0 * kb * t * psi[i];
                    for j in 0..d {
                        p[(i, j)] += 2.0 * kb * psi[i] * psi[j];
                    }
                }
                constant += kb * t * t;
            }
        }
        RegularizerKind::HingeSquare => {
            for k in 0..ns {
                p[(d + k, d + k)] += 2.0 * kb;
            }
        }
        RegularizerKind::L2 => {
            for i in 0..d {
                p[(i, i)] += 2.0 * spec.kappa;
            }
        }
        RegularizerKind::L1 => {
            for i in 0..nt {
                q[d + ns + i] = spec.kappa;
            }
        }
    }

    let rows = bellman_rows(segments, features);
    let n_rows = nu * bn + if slacks { bn + 1 } else { 0 } + 2 * nt;
    let mut a = DMatrix::zeros(n_rows, nv);
    let mut b = DVector::zeros(n_rows);
    a.view_mut((0, 0), (nu * bn, d)).copy_from(&rows);
    for r in 0..nu * bn {
        b[r] = segments[r % bn].cost;
        if slacks {
            a[(r, d + r % bn)] = -1.0;
        }
    }
    let mut r = nu * bn;
    if slacks {
        for k in 0..bn {
            a[(r + k, d + k)] = -1.0;
        }
        r += bn;
        for k in 0..bn {
            a[(r, d + k)] = 1.0 / bn as f64;
        }
        b[r] = spec.tol;
        r += 1;
    }
    for i in 0..nt {
        a[(r + 2 * i, i)] = 1.0;
        a[(r + 2 * i, d + ns + i)] = -1.0;
        a[(r + 2 * i + 1, i)] = -1.0;
        a[(r + 2 * i + 1, d + ns + i)] = -1.0;
    }
    let form = StandardForm::new(p, q, a, b, DMatrix::zeros(0, nv), DVector::zeros(0))?;
    Ok(ConvexProgram {
        form,
        constant,
        n_theta: d,
        n_segments: bn,
        n_actions: nu,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodicOutcome {
    pub theta: Vec<f64>,
    /// `None` when the update was skipped.
    pub result: Option<SolveResult>,
}

/// One episodic update. An empty episode carries `theta_n` forward; a failed
/// solve is an error with the solver diagnostics.
pub fn episodic_update(
    theta_n: &[f64],
    segments: &[TrajectorySegment],
    spec: &EpisodicUpdateSpec,
    features: &dyn FeatureMap,
    opts: &SolverOptions,
) -> Result<EpisodicOutcome> {
    if segments.is_empty() {
        return Ok(EpisodicOutcome {
            theta: theta_n.to_vec(),
            result: None,
        });
    }
    let mu = MuVector::from_segments(spec.mu, segments, features)?;
    let qp = build_episodic_qp(theta_n, segments, spec, features, &mu.psi_bar)?;
    let mut x0 = vec![0.0; qp.form.num_vars()];
    x0[..theta_n.len()].copy_from_slice(theta_n);
    let result = solver::solve_from(&qp.form, opts, Some(&x0));
    match result.status {
        SolveStatus::Optimal => Ok(EpisodicOutcome {
            theta: qp.theta(&result).to_vec(),
            result: Some(result),
        }),
        ref status => Err(Error::Solver(format!(
            "episodic QP ended {status:?}: {} (residuals {:?})",
            result.diagnostics.as_deref().unwrap_or("no diagnostics"),
            result.residuals
        ))),
    }
}
