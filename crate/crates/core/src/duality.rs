//! Dual LP, complementary slackness and occupancy audits, and the
//! covariance-rank boundedness diagnostic.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::envs::{Environment, GridWorld, State};
use crate::error::{Error, Result};
use crate::features::{FeatureMap, TabularBasis};
use crate::program::{build_primal_lp, solve_batch, BatchOutcome, ConvexProgram, MuVector};
use crate::sampling::{segment, tdiff, TrajectorySegment};
use crate::solver::{recession_probe, solve, Recession, SolveResult, SolverOptions, StandardForm};

/// `min sum_{k,u} varpi_{k,u} C_k  s.t.  sum varpi_{k,u} (psi(z_k) - psi(x_next_k, u)) = psi_bar`,
/// `varpi >= 0`, with variables in the primal row order.
pub fn build_dual_lp(segments: &[TrajectorySegment], features: &dyn FeatureMap, psi_bar: &[f64]) -> Result<ConvexProgram> {
    let primal = build_primal_lp(segments, features, psi_bar)?;
    dual_of(&primal)
}

/// Textbook dual of a primal LP `max psi_bar^T theta, A theta <= C`.
pub fn dual_of(primal: &ConvexProgram) -> Result<ConvexProgram> {
    let f = &primal.form;
    let nv = f.num_ineq();
    let form = StandardForm::new(
        DMatrix::zeros(nv, nv),
        f.b.clone(),
        -DMatrix::identity(nv, nv),
        DVector::zeros(nv),
        f.a.transpose(),
        -&f.q,
    )?;
    Ok(ConvexProgram {
        form,
        constant: 0.0,
        n_theta: nv,
        n_segments: primal.n_segments,
        n_actions: primal.n_actions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    /// `varpi[u * N + k]`.
    pub varpi: Vec<f64>,
    pub n_segments: usize,
    pub n_actions: usize,
    pub objective: f64,
    /// `|A^T varpi - psi_bar|_inf`.
    pub equality_residual: f64,
}

impl DualCertificate {
    /// Multipliers of a solved primal LP.
    pub fn from_primal(primal: &ConvexProgram, result: &SolveResult) -> Result<Self> {
        Self::new(primal, result.ineq_multipliers.clone())
    }

    pub fn new(primal: &ConvexProgram, varpi: Vec<f64>) -> Result<Self> {
        let f = &primal.form;
        if varpi.len() != f.num_ineq() {
            return Err(Error::Shape(format!("{} multipliers for {} rows", varpi.len(), f.num_ineq())));
        }
        if let Some(v) = varpi.iter().find(|&&v| !(v >= 0.0)) {
            return Err(Error::Parameter(format!("negative occupancy weight {v}")));
        }
        let w = DVector::from_column_slice(&varpi);
        let objective = f.b.dot(&w);
        let equality_residual = (f.a.tr_mul(&w) + &f.q).amax();
        Ok(Self {
            varpi,
            n_segments: primal.n_segments,
            n_actions: primal.n_actions,
            objective,
            equality_residual,
        })
    }

    pub fn get(&self, k: usize, u: usize) -> f64 {
        self.varpi[u * self.n_segments + k]
    }

    /// `sum_k varpi_{k,u}` for each action.
    pub fn action_sums(&self) -> Vec<f64> {
        (0..self.n_actions)
            .map(|u| (0..self.n_segments).map(|k| self.get(k, u)).sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlacknessFinding {
    pub segment: usize,
    pub action: usize,
    pub varpi: f64,
    /// `min_u {-Q(z_k) + C_k + Q(x_next_k, u)}`; should be zero.
    pub bellman_residual: f64,
    /// `Q(x_next_k, u) - min_v Q(x_next_k, v)`; should be zero.
    pub argmin_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlacknessReport {
    pub checked: usize,
    pub violations: Vec<SlacknessFinding>,
    pub tolerance: f64,
}

impl SlacknessReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check both primal-dual optimality conditions at every `varpi_{k,u} > tol`.
pub fn slackness_audit(
    theta: &[f64],
    cert: &DualCertificate,
    segments: &[TrajectorySegment],
    features: &dyn FeatureMap,
    tol: f64,
) -> Result<SlacknessReport> {
    slackness_audit_with(theta, cert, segments, features, tol, tol)
}

/// As `slackness_audit`, checking weights above `weight_tol` to within `tol`.
pub fn slackness_audit_with(
    theta: &[f64],
    cert: &DualCertificate,
    segments: &[TrajectorySegment],
    features: &dyn FeatureMap,
    weight_tol: f64,
    tol: f64,
) -> Result<SlacknessReport> {
    if cert.n_segments != segments.len() || cert.n_actions != features.num_actions() || theta.len() != features.dim() {
        return Err(Error::Shape(format!(
            "certificate {}x{}, {} segments, {} actions, theta {} vs d {}",
            cert.n_segments,
            cert.n_actions,
            segments.len(),
            features.num_actions(),
            theta.len(),
            features.dim()
        )));
    }
    let mut checked = 0;
    let mut violations = Vec::new();
    for (k, seg) in segments.iter().enumerate() {
        let q_next = features.q_values(theta, &seg.x_next);
        let (q_min, _) = crate::features::argmin_first(&q_next);
        for u in 0..cert.n_actions {
            let w = cert.get(k, u);
            if w <= weight_tol {
                continue;
            }
            checked += 1;
            let bellman_residual = tdiff(theta, seg, features);
            let argmin_gap = q_next[u] - q_min;
            if bellman_residual.abs() > tol || argmin_gap > tol {
                violations.push(SlacknessFinding {
                    segment: k,
                    action: u,
                    varpi: w,
                    bellman_residual,
                    argmin_gap,
                });
            }
        }
    }
    Ok(SlacknessReport {
        checked,
        violations,
        tolerance: tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyReport {
    pub observed: Vec<f64>,
    pub expected: Vec<f64>,
    pub max_abs_error: f64,
}

/// An optimal path from one support pair of `mu`: its weight and the
/// actions of the successor pairs, ending with `u^e` at the equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedPath {
    pub weight: f64,
    pub actions: Vec<usize>,
}

/// Compare `sum_k varpi_{k,u}` with weighted action counts along the oracle
/// optimal paths. Only meaningful for tabular bases.
pub fn occupancy_audit(cert: &DualCertificate, features: &dyn FeatureMap, paths: &[WeightedPath]) -> Result<OccupancyReport> {
    if !features.is_tabular() {
        return Err(Error::Unsupported(format!(
            "occupancy audit needs a tabular basis, got {}",
            features.describe()
        )));
    }
    let observed = cert.action_sums();
    let mut expected = vec![0.0; cert.n_actions];
    for p in paths {
        for &u in &p.actions {
            if u >= cert.n_actions {
                return Err(Error::InvalidAction {
                    action: u,
                    n_actions: cert.n_actions,
                });
            }
            expected[u] += p.weight;
        }
    }
    let max_abs_error = observed
        .iter()
        .zip(&expected)
        .fold(0.0f64, |a, (o, e)| a.max((o - e).abs()));
    Ok(OccupancyReport {
        observed,
        expected,
        max_abs_error,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceReport {
    pub psi_bar: DVector<f64>,
    pub r: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    /// Eigenvalues of `sigma`, descending.
    pub eigenvalues: Vec<f64>,
    pub rank: usize,
    pub threshold: f64,
    pub n_samples: usize,
}

#[derive(Serialize)]
struct CovarianceJson<'a> {
    n_samples: usize,
    dim: usize,
    rank: usize,
    threshold: f64,
    eigenvalues: &'a [f64],
    psi_bar: Vec<f64>,
}

impl CovarianceReport {
    pub fn dim(&self) -> usize {
        self.psi_bar.len()
    }

    pub fn full_rank(&self) -> bool {
        self.rank == self.dim()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&CovarianceJson {
            n_samples: self.n_samples,
            dim: self.dim(),
            rank: self.rank,
            threshold: self.threshold,
            eigenvalues: &self.eigenvalues,
            psi_bar: self.psi_bar.iter().copied().collect(),
        })
        .expect("plain struct")
    }
}

pub const DEFAULT_RANK_THRESHOLD: f64 = 1e-8;

/// Empirical mean, second moment and covariance of `psi` over `pairs`.
/// Rank counts eigenvalues above `threshold * lambda_max`.
pub fn covariance_report(pairs: &[(State, usize)], features: &dyn FeatureMap, threshold: f64) -> Result<CovarianceReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyData("covariance needs samples"));
    }
    let d = features.dim();
    if pairs.len() < d {
        log::warn!("covariance from {} samples for d = {d}", pairs.len());
    }
    let n = pairs.len() as f64;
    let mut psi = vec![0.0; d];
    let mut data = DMatrix::zeros(pairs.len(), d);
    for (i, (x, u)) in pairs.iter().enumerate() {
        features.eval_into(x, *u, &mut psi);
        data.row_mut(i).copy_from_slice(&psi);
    }
    let psi_bar = DVector::from_fn(d, |j, _| data.column(j).sum() / n);
    let r = data.tr_mul(&data) / n;
    let mut sigma = &r - &psi_bar * psi_bar.transpose();
    // Symmetrize away rounding.
    sigma = (&sigma + sigma.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sigma.clone());
    let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    let lmax = eigenvalues.first().copied().unwrap_or(0.0);
    let rank = if lmax > 0.0 {
        eigenvalues.iter().filter(|&&l| l > threshold * lmax).count()
    } else {
        0
    };
    Ok(CovarianceReport {
        psi_bar,
        r,
        sigma,
        eigenvalues,
        rank,
        threshold,
        n_samples: pairs.len(),
    })
}

/// Starting pairs of the segments.
pub fn segment_pairs(segments: &[TrajectorySegment]) -> Vec<(State, usize)> {
    segments.iter().map(|s| (s.x_start.clone(), s.action)).collect()
}

/// Homogeneous constraint rows `psi(z_k) - psi(x_next_k, u)`.
pub fn homogeneous_rows(segments: &[TrajectorySegment], features: &dyn FeatureMap) -> Result<DMatrix<f64>> {
    Ok(build_primal_lp(segments, features, &vec![0.0; features.dim()])?.form.a)
}

/// `Q^v(x_next_k, u) - Q^v(z_k)` for every segment and action; all
/// nonnegative exactly when `v` is a recession direction.
pub fn qincreasing_residuals(direction: &[f64], segments: &[TrajectorySegment], features: &dyn FeatureMap) -> Vec<f64> {
    let mut out = Vec::with_capacity(segments.len() * features.num_actions());
    for s in segments {
        let q0 = features.q_value(direction, &s.x_start, s.action);
        out.extend(features.q_values(direction, &s.x_next).iter().map(|q| q - q0));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Bounded,
    UnboundedCertified,
    InconclusiveShortData,
}

/// Probe infeasibility proves boundedness. A direction with rank-deficient
/// covariance is reported as certified unboundedness; a direction despite full
/// rank means the data are still too short.
pub fn boundedness_verdict(report: &CovarianceReport, probe: &Recession) -> Verdict {
    match probe {
        Recession::Bounded => Verdict::Bounded,
        Recession::Direction { .. } if report.full_rank() => Verdict::InconclusiveShortData,
        Recession::Direction { .. } => Verdict::UnboundedCertified,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: usize,
    pub rank: usize,
    pub probe_bounded: bool,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundednessReport {
    pub checkpoints: Vec<Checkpoint>,
    pub verdict: Verdict,
}

/// Verdicts on the prefixes `segments[..n]` for each checkpoint `n`. The
/// overall verdict is `Bounded` only if the probe stays infeasible from its
/// first infeasible checkpoint through the last one.
pub fn boundedness_over_n(
    segments: &[TrajectorySegment],
    features: &dyn FeatureMap,
    checkpoints: &[usize],
    threshold: f64,
    opts: &SolverOptions,
) -> Result<BoundednessReport> {
    let mut out = Vec::new();
    for &n in checkpoints {
        let n = n.min(segments.len());
        if n == 0 {
            continue;
        }
        let data = &segments[..n];
        let report = covariance_report(&segment_pairs(data), features, threshold)?;
        let probe = recession_probe(&homogeneous_rows(data, features)?, opts)?;
        out.push(Checkpoint {
            n,
            rank: report.rank,
            probe_bounded: probe == Recession::Bounded,
            verdict: boundedness_verdict(&report, &probe),
        });
    }
    let Some(last) = out.last() else {
        return Err(Error::EmptyData("no nonempty checkpoint"));
    };
    let verdict = match out.iter().position(|c| c.probe_bounded) {
        Some(first) if out[first..].iter().all(|c| c.probe_bounded) => Verdict::Bounded,
        Some(_) => Verdict::InconclusiveShortData,
        None => last.verdict,
    };
    Ok(BoundednessReport {
        checkpoints: out,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularAudit {
    /// `max <psi_bar, theta>` over the primal feasible set.
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub duality_gap: f64,
    /// Largest entrywise gap between the LP solution and value-iteration `Q*`.
    pub max_q_error: f64,
    pub slackness: SlacknessReport,
    pub occupancy: OccupancyReport,
}

impl TabularAudit {
    pub fn passed(&self, gap_tol: f64, q_tol: f64) -> bool {
        self.duality_gap <= gap_tol * (1.0 + self.primal_objective.abs())
            && self.max_q_error <= q_tol
            && self.slackness.passed()
            && self.occupancy.max_abs_error <= 1e-9
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("audit serializes")
    }
}

/// Solve the primal and dual LPs on data covering every pair of `grid` once,
/// with `mu` uniform on `support`, and run the slackness and occupancy audits
/// (weights above `weight_tol` checked to within `tol`).
pub fn tabular_audit(
    grid: &GridWorld,
    support: &[(State, usize)],
    weight_tol: f64,
    tol: f64,
    opts: &SolverOptions,
) -> Result<TabularAudit> {
    if support.is_empty() {
        return Err(Error::EmptyData("mu support"));
    }
    let basis = TabularBasis::new(grid.states(), grid.num_actions(), grid.equilibrium())?;
    let segments: Vec<TrajectorySegment> = (0..grid.num_states())
        .flat_map(|s| (0..grid.num_actions()).map(move |u| (s, u)))
        .map(|(s, u)| segment(grid, &grid.cell(s), u, 1))
        .collect::<Result<_>>()?;
    let w = 1.0 / support.len() as f64;
    let mu = MuVector::explicit(support.to_vec(), vec![w; support.len()], &basis)?;
    let primal = build_primal_lp(&segments, &basis, &mu.psi_bar)?;
    let (theta, result) = match solve_batch(&primal, opts)? {
        BatchOutcome::Optimal { theta, result, .. } => (theta, result),
        BatchOutcome::Unbounded { .. } => return Err(Error::Solver("tabular primal LP unbounded".into())),
    };
    let primal_objective: f64 = theta.iter().zip(&mu.psi_bar).map(|(t, p)| t * p).sum();
    let dual = build_dual_lp(&segments, &basis, &mu.psi_bar)?;
    let dres = solve(&dual.form, opts);
    if !dres.is_optimal() {
        return Err(Error::Solver(format!("tabular dual LP ended {:?}", dres.status)));
    }
    let model = grid.model();
    let q_star = model.q_star();
    let max_q_error = theta
        .iter()
        .zip(basis.theta_from_table(&q_star))
        .fold(0.0f64, |a, (t, q)| a.max((t - q).abs()));
    let cert = DualCertificate::from_primal(&primal, &result)?;
    let slackness = slackness_audit_with(&theta, &cert, &segments, &basis, weight_tol, tol)?;
    let n_actions = grid.num_actions();
    let paths: Vec<WeightedPath> = support
        .iter()
        .map(|(x, u)| WeightedPath {
            weight: w,
            actions: model
                .optimal_successors(&q_star, grid.pair_index(x, *u))
                .iter()
                .map(|z| z % n_actions)
                .collect(),
        })
        .collect();
    let occupancy = occupancy_audit(&cert, &basis, &paths)?;
    Ok(TabularAudit {
        primal_objective,
        dual_objective: dres.objective,
        duality_gap: (primal_objective - dres.objective).abs(),
        max_q_error,
        slackness,
        occupancy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{QuadraticLqrBasis, WithConstant};
    use std::sync::Arc;

    fn grid() -> (GridWorld, TabularBasis) {
        let g = GridWorld::new(3, 3).with_perturbation(1e-9);
        let b = TabularBasis::new(g.states(), 4, g.equilibrium()).unwrap();
        (g, b)
    }

    fn all_pairs(g: &GridWorld) -> Vec<TrajectorySegment> {
        (0..g.num_states())
            .flat_map(|s| (0..4).map(move |u| (s, u)))
            .map(|(s, u)| segment(g, &g.cell(s), u, 1).unwrap())
            .collect()
    }

    fn solved(g: &GridWorld, b: &TabularBasis, mu: &MuVector) -> (Vec<TrajectorySegment>, ConvexProgram, Vec<f64>, DualCertificate) {
        let segs = all_pairs(g);
        let lp = build_primal_lp(&segs, b, &mu.psi_bar).unwrap();
        let BatchOutcome::Optimal { theta, result, .. } = solve_batch(&lp, &SolverOptions::default()).unwrap() else {
            panic!("unbounded tabular LP");
        };
        let cert = DualCertificate::from_primal(&lp, &result).unwrap();
        (segs, lp, theta, cert)
    }

    #[test]
    fn dual_dimensions() {
        let b = QuadraticLqrBasis::new(vec![-1.0, 1.0]);
        let seg = TrajectorySegment {
            x_start: vec![1.0],
            action: 0,
            cost: 0.2,
            x_next: vec![0.9],
            len: 1,
        };
        let dual = build_dual_lp(&[seg], &b, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(dual.form.num_vars(), 2);
        assert_eq!(dual.form.num_eq(), 3);
    }

    #[test]
    fn dual_is_structural_transpose() {
        let (g, b) = grid();
        let segs = all_pairs(&g);
        let mu = MuVector::from_segments(crate::program::MuPolicy::Empirical, &segs, &b).unwrap();
        let primal = build_primal_lp(&segs, &b, &mu.psi_bar).unwrap();
        let dual = build_dual_lp(&segs, &b, &mu.psi_bar).unwrap();
        assert_eq!(dual.form.g, primal.form.a.transpose());
        assert_eq!(dual.form.h, -&primal.form.q);
        assert_eq!(dual.form.q, primal.form.b);
        assert!(dual.form.b.iter().all(|&v| v == 0.0));
        assert_eq!(dual.form.a, -DMatrix::<f64>::identity(primal.form.num_ineq(), primal.form.num_ineq()));
    }

    #[test]
    fn strong_duality_on_tabular_instance() {
        let (g, b) = grid();
        let segs = all_pairs(&g);
        let mu = MuVector::from_segments(crate::program::MuPolicy::Empirical, &segs, &b).unwrap();
        let (_, _, theta, cert) = solved(&g, &b, &mu);
        let dual = build_dual_lp(&segs, &b, &mu.psi_bar).unwrap();
        let dres = solve(&dual.form, &SolverOptions::default());
        assert!(dres.is_optimal());
        let primal_value: f64 = theta.iter().zip(&mu.psi_bar).map(|(t, p)| t * p).sum();
        let q_star = b.theta_from_table(&g.model().q_star());
        let oracle: f64 = q_star.iter().zip(&mu.psi_bar).map(|(t, p)| t * p).sum();
        assert!((primal_value - oracle).abs() < 1e-9);
        assert!((dres.objective - primal_value).abs() <= 1e-7 * (1.0 + primal_value.abs()));
        assert!((cert.objective - primal_value).abs() <= 1e-7 * (1.0 + primal_value.abs()));
        assert!(cert.equality_residual < 1e-9);
    }

    #[test]
    fn zero_cost_dual_is_zero() {
        let (g, b) = grid();
        let (xe, ue) = g.equilibrium();
        let seg = segment(&g, &xe, ue, 1).unwrap();
        assert_eq!(seg.cost, 0.0);
        let psi_bar = vec![0.0; 35];
        let dual = build_dual_lp(&[seg], &b, &psi_bar).unwrap();
        let res = solve(&dual.form, &SolverOptions::default());
        assert!(res.is_optimal());
        assert_eq!(res.objective, 0.0);
    }

    #[test]
    fn slackness_on_oracle_instance_and_fault_injection() {
        let (g, b) = grid();
        let segs = all_pairs(&g);
        let mu = MuVector::from_segments(crate::program::MuPolicy::Empirical, &segs, &b).unwrap();
        let (segs, lp, theta, cert) = solved(&g, &b, &mu);
        let report = slackness_audit(&theta, &cert, &segs, &b, 1e-8).unwrap();
        assert!(report.checked > 0 && report.passed(), "{report:?}");

        // Inject weight on a row the optimizer leaves slack: segment 0 with a
        // non-greedy next action.
        let k = 0;
        let q_next = b.q_values(&theta, &segs[k].x_next);
        let (_, best) = crate::features::argmin_first(&q_next);
        let u = (0..4).find(|&u| q_next[u] > q_next[best] + 0.5).unwrap();
        let mut varpi = cert.varpi.clone();
        varpi[lp.row(k, u)] += 0.3;
        let bad = DualCertificate::new(&lp, varpi).unwrap();
        let report = slackness_audit(&theta, &bad, &segs, &b, 1e-8).unwrap();
        assert!(report.violations.iter().any(|f| f.segment == k && f.action == u));

        let zero = DualCertificate::new(&lp, vec![0.0; cert.varpi.len()]).unwrap();
        let report = slackness_audit(&theta, &zero, &segs, &b, 1e-8).unwrap();
        assert_eq!(report.checked, 0);
        assert!(report.passed());
        assert!(slackness_audit(&theta, &cert, &segs[1..], &b, 1e-8).is_err());
    }

    fn occupancy_for(g: &GridWorld, b: &TabularBasis, support: Vec<(State, usize)>) -> OccupancyReport {
        let w = 1.0 / support.len() as f64;
        let mu = MuVector::explicit(support.clone(), vec![w; support.len()], b).unwrap();
        let (_, _, _, cert) = solved(g, b, &mu);
        let model = g.model();
        let q = model.q_star();
        let paths: Vec<WeightedPath> = support
            .iter()
            .map(|(x, u)| WeightedPath {
                weight: w,
                actions: model
                    .optimal_successors(&q, g.pair_index(x, *u))
                    .iter()
                    .map(|z| z % 4)
                    .collect(),
            })
            .collect();
        occupancy_audit(&cert, b, &paths).unwrap()
    }

    #[test]
    fn occupancy_two_steps_right() {
        let (g, b) = grid();
        // (0, 0) --right--> (1, 0) --right--> (2, 0) = x^e.
        let report = occupancy_for(&g, &b, vec![(vec![0.0, 0.0], GridWorld::RIGHT)]);
        assert_eq!(report.expected[GridWorld::RIGHT], 2.0);
        assert!(report.max_abs_error < 1e-9, "{report:?}");
    }

    #[test]
    fn occupancy_at_equilibrium_is_zero() {
        let (g, b) = grid();
        let report = occupancy_for(&g, &b, vec![g.equilibrium()]);
        assert!(report.observed.iter().all(|&v| v.abs() < 1e-12));
        assert!(report.expected.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn occupancy_two_state_average() {
        let (g, b) = grid();
        let report = occupancy_for(&g, &b, vec![(vec![0.0, 2.0], GridWorld::DOWN), (vec![1.0, 1.0], GridWorld::LEFT)]);
        assert!(report.max_abs_error < 1e-9, "{report:?}");
        assert!(report.expected.iter().sum::<f64>() > 2.0);
    }

    #[test]
    fn tabular_audit_passes_on_perturbed_grid() {
        let (g, _) = grid();
        let support: Vec<_> = (0..9).flat_map(|s| (0..4).map(move |u| (s, u))).map(|(s, u)| (g.cell(s), u)).collect();
        let audit = tabular_audit(&g, &support, 1e-8, 1e-6, &SolverOptions::default()).unwrap();
        assert!(audit.passed(1e-7, 1e-6), "{}", audit.to_json());
        assert!(audit.slackness.checked > 0);
        assert!(tabular_audit(&g, &[], 1e-8, 1e-6, &SolverOptions::default()).is_err());
    }

    #[test]
    fn occupancy_rejects_non_tabular() {
        let b = QuadraticLqrBasis::new(vec![0.0]);
        let cert = DualCertificate {
            varpi: vec![],
            n_segments: 0,
            n_actions: 1,
            objective: 0.0,
            equality_residual: 0.0,
        };
        assert!(matches!(occupancy_audit(&cert, &b, &[]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn covariance_examples() {
        let (g, b) = grid();
        // Every pair once, including z^e: multinomial covariance.
        let pairs: Vec<_> = (0..9).flat_map(|s| (0..4).map(move |u| (s, u))).map(|(s, u)| (g.cell(s), u)).collect();
        let rep = covariance_report(&pairs, &b, DEFAULT_RANK_THRESHOLD).unwrap();
        assert_eq!(rep.rank, 35);
        let p = 1.0 / 36.0;
        assert!((rep.eigenvalues[0] - p).abs() < 1e-12);
        assert!((rep.eigenvalues[34] - p * p).abs() < 1e-12);
        assert!((rep.eigenvalues[33] - p).abs() < 1e-12);
        assert!((&rep.sigma - rep.sigma.transpose()).amax() < 1e-10);

        let f = WithConstant::new(Arc::new(b.clone()), g.equilibrium());
        let (xe, ue) = g.equilibrium();
        let no_eq: Vec<_> = pairs.iter().filter(|(x, u)| !(*x == xe && *u == ue)).cloned().collect();
        let rep = covariance_report(&no_eq, &f, DEFAULT_RANK_THRESHOLD).unwrap();
        assert!(!rep.full_rank());
        assert!(rep.sigma[(35, 35)].abs() < 1e-15);

        let rep = covariance_report(&vec![(g.cell(0), 0); 5], &b, DEFAULT_RANK_THRESHOLD).unwrap();
        assert!(rep.sigma.iter().all(|&v| v == 0.0));
        assert_eq!(rep.rank, 0);
        let json: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
        assert_eq!(json["rank"], 0);
    }

    #[test]
    fn verdicts() {
        let (g, b) = grid();
        let full = all_pairs(&g);
        let cov = covariance_report(&segment_pairs(&full), &b, DEFAULT_RANK_THRESHOLD).unwrap();
        let probe = recession_probe(&homogeneous_rows(&full, &b).unwrap(), &SolverOptions::default()).unwrap();
        assert_eq!(probe, Recession::Bounded);
        assert_eq!(boundedness_verdict(&cov, &probe), Verdict::Bounded);

        // Avoid x^e and append the constant feature.
        let (xe, _) = g.equilibrium();
        let avoid: Vec<_> = full.iter().filter(|s| s.x_start != xe && s.x_next != xe).cloned().collect();
        let f = WithConstant::new(Arc::new(b.clone()), g.equilibrium());
        let cov = covariance_report(&segment_pairs(&avoid), &f, DEFAULT_RANK_THRESHOLD).unwrap();
        let probe = recession_probe(&homogeneous_rows(&avoid, &f).unwrap(), &SolverOptions::default()).unwrap();
        let Recession::Direction { direction, .. } = &probe else {
            panic!("expected a direction");
        };
        assert!(qincreasing_residuals(direction, &avoid, &f).iter().all(|&r| r >= -1e-10));
        assert_eq!(boundedness_verdict(&cov, &probe), Verdict::UnboundedCertified);

        let short = &full[..2];
        let probe = recession_probe(&homogeneous_rows(short, &b).unwrap(), &SolverOptions::default()).unwrap();
        assert!(matches!(probe, Recession::Direction { .. }));
        assert_eq!(boundedness_verdict(&cov_full_rank(), &probe), Verdict::InconclusiveShortData);
    }

    fn cov_full_rank() -> CovarianceReport {
        CovarianceReport {
            psi_bar: DVector::zeros(1),
            r: DMatrix::identity(1, 1),
            sigma: DMatrix::identity(1, 1),
            eigenvalues: vec![1.0],
            rank: 1,
            threshold: DEFAULT_RANK_THRESHOLD,
            n_samples: 2,
        }
    }

    #[test]
    fn checkpointed_verdict_persists() {
        let (g, b) = grid();
        let full = all_pairs(&g);
        let report = boundedness_over_n(&full, &b, &[2, 10, 36], DEFAULT_RANK_THRESHOLD, &SolverOptions::default()).unwrap();
        assert_eq!(report.checkpoints.len(), 3);
        assert!(!report.checkpoints[0].probe_bounded);
        assert!(report.checkpoints[2].probe_bounded);
        assert_eq!(report.verdict, Verdict::Bounded);
    }
}
