//! Watkins Q-learning with linear features, and its closed-form scalar LQR
//! specialization.

use std::collections::VecDeque;
use std::io::Write;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::envs::{Lqr1d, State};
use crate::error::{Error, Result};
use crate::features::{qbar, FeatureMap, QuadraticLqrBasis};

pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e6;

/// One observed transition `(x, u, c, x_next)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub x: State,
    pub action: usize,
    pub cost: f64,
    pub x_next: State,
}

/// Scalar LQR transition with a continuous input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LqrTransition {
    pub x: f64,
    pub u: f64,
    pub cost: f64,
    pub x_next: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DivergenceEvent {
    NormExceeded { iteration: usize, norm: f64 },
    NonFinite { iteration: usize },
    UndefinedMinimizer { iteration: usize, theta3: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WatkinsState {
    pub theta: Vec<f64>,
    /// Constant step size `alpha_{k+1}`.
    pub step_size: f64,
    pub threshold: f64,
    pub iteration: usize,
    pub divergence: Option<DivergenceEvent>,
    history: VecDeque<(usize, Vec<f64>)>,
    history_len: usize,
}

impl WatkinsState {
    pub fn new(theta: Vec<f64>, step_size: f64) -> Result<Self> {
        if !(step_size >= 0.0 && step_size.is_finite()) {
            return Err(Error::Parameter(format!("step size {step_size} must be nonnegative")));
        }
        Ok(Self {
            theta,
            step_size,
            threshold: DEFAULT_DIVERGENCE_THRESHOLD,
            iteration: 0,
            divergence: None,
            history: VecDeque::new(),
            history_len: 0,
        })
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    /// Keep the last `len` parameter vectors.
    pub fn with_history(mut self, len: usize) -> Self {
        self.history_len = len;
        self
    }

    pub fn diverged(&self) -> bool {
        self.divergence.is_some()
    }

    pub fn history(&self) -> impl Iterator<Item = &(usize, Vec<f64>)> {
        self.history.iter()
    }

    fn apply(&mut self, d: f64, zeta: &[f64]) {
        for (t, z) in self.theta.iter_mut().zip(zeta) {
            *t += self.step_size * d * z;
        }
        self.iteration += 1;
        let norm = self.theta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() {
            self.latch(DivergenceEvent::NonFinite {
                iteration: self.iteration,
            });
        } else if norm > self.threshold {
            self.latch(DivergenceEvent::NormExceeded {
                iteration: self.iteration,
                norm,
            });
        }
        if self.history_len > 0 {
            if self.history.len() == self.history_len {
                self.history.pop_front();
            }
            self.history.push_back((self.iteration, self.theta.clone()));
        }
    }

    fn latch(&mut self, event: DivergenceEvent) {
        if self.divergence.is_none() {
            self.divergence = Some(event);
        }
    }
}

/// `D = -theta^T psi(z) + c + Q_bar^theta(x_next)`;
/// `theta <- theta + alpha D psi(z)`. No-op once diverged. Returns `D`.
pub fn watkins_step(state: &mut WatkinsState, tr: &Transition, features: &dyn FeatureMap) -> f64 {
    if state.diverged() {
        return 0.0;
    }
    let psi = features.eval(&tr.x, tr.action);
    let q = crate::features::dot(&state.theta, &psi);
    let d = -q + tr.cost + qbar(&state.theta, &tr.x_next, features).0;
    state.apply(d, &psi);
    d
}

/// `Q_bar^theta(x) = beta_theta x^2`, minimizing over all real inputs.
pub fn lqr_qbar(theta: &[f64], x: f64) -> Result<f64> {
    Ok(QuadraticLqrBasis::qbar_continuous(theta, x)?.0)
}

/// Watkins step on the quadratic basis with the continuous minimizer. A
/// nonpositive `theta3` latches an undefined-minimizer event.
pub fn lqr_watkins_step(state: &mut WatkinsState, tr: &LqrTransition) -> Option<f64> {
    if state.diverged() {
        return None;
    }
    let next = match lqr_qbar(&state.theta, tr.x_next) {
        Ok(v) => v,
        Err(_) => {
            let theta3 = state.theta[2];
            state.latch(DivergenceEvent::UndefinedMinimizer {
                iteration: state.iteration,
                theta3,
            });
            return None;
        }
    };
    let psi = QuadraticLqrBasis::features(tr.x, tr.u);
    let d = -crate::features::dot(&state.theta, &psi) + tr.cost + next;
    state.apply(d, &psi);
    Some(d)
}

/// Empirical mean flow `(1/N) sum_k D_k(theta) psi(z_k)`.
pub fn mean_flow_estimate(theta: &[f64], transitions: &[Transition], features: &dyn FeatureMap) -> Result<Vec<f64>> {
    if transitions.is_empty() {
        return Err(Error::EmptyData("mean flow needs transitions"));
    }
    let mut out = vec![0.0; features.dim()];
    for tr in transitions {
        let psi = features.eval(&tr.x, tr.action);
        let d = -crate::features::dot(theta, &psi) + tr.cost + qbar(theta, &tr.x_next, features).0;
        for (o, p) in out.iter_mut().zip(&psi) {
            *o += d * p;
        }
    }
    let n = transitions.len() as f64;
    Ok(out.into_iter().map(|v| v / n).collect())
}

/// Mean flow on the quadratic basis with the continuous minimizer.
pub fn lqr_mean_flow_estimate(theta: &[f64], transitions: &[LqrTransition]) -> Result<Vec<f64>> {
    if transitions.is_empty() {
        return Err(Error::EmptyData("mean flow needs transitions"));
    }
    let mut out = [0.0; 3];
    for tr in transitions {
        let psi = QuadraticLqrBasis::features(tr.x, tr.u);
        let d = -crate::features::dot(theta, &psi) + tr.cost + lqr_qbar(theta, tr.x_next)?;
        for (o, p) in out.iter_mut().zip(&psi) {
            *o += d * p;
        }
    }
    let n = transitions.len() as f64;
    Ok(out.iter().map(|v| v / n).collect())
}

/// Solution of the scalar Riccati equation for `Lqr1d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LqrSolution {
    /// Value function `p x^2`.
    pub p: f64,
    /// Optimal feedback `u = -gain x`.
    pub gain: f64,
    /// Coefficients of `Q*` in the basis `[x^2, 2xu, u^2]`.
    pub theta: [f64; 3],
}

impl LqrSolution {
    pub fn from_p(dt: f64, p: f64) -> Self {
        Self {
            p,
            gain: p / (1.0 + dt * p),
            theta: [dt + p, p * dt, dt + p * dt * dt],
        }
    }
}

/// Closed form for `x+ = x + dt u`, `c = dt (x^2 + u^2)`:
/// `p = (dt + sqrt(dt^2 + 4)) / 2`, `K = 1/p`.
pub fn riccati(dt: f64) -> LqrSolution {
    let p = 0.5 * (dt + (dt * dt + 4.0).sqrt());
    LqrSolution::from_p(dt, p)
}

/// Finite-horizon value iteration `p <- dt + p - dt p^2 / (1 + dt p)` from
/// `p = 0`.
pub fn riccati_value_iteration(dt: f64, iterations: usize) -> LqrSolution {
    let mut p = 0.0;
    for _ in 0..iterations {
        p = dt + p - dt * p * p / (1.0 + dt * p);
    }
    LqrSolution::from_p(dt, p)
}

/// Exploration input `amplitude * sum_i sin(omega_i t)` with
/// `omega_i = 10 + 40 v_i`, `v_i ~ U[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineExploration {
    pub frequencies: Vec<f64>,
    pub amplitude: f64,
}

impl SineExploration {
    pub fn sample(n: usize, amplitude: f64, rng: &mut dyn RngCore) -> Self {
        let frequencies = (0..n).map(|_| 10.0 + 40.0 * rng.gen_range(-1.0..=1.0)).collect();
        Self { frequencies, amplitude }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.amplitude * self.frequencies.iter().map(|w| (w * t).sin()).sum::<f64>()
    }
}

/// Continuous-input trajectory under `u = -gain x + exploration(k dt)`.
pub fn lqr_trajectory(env: &Lqr1d, gain: f64, input: &SineExploration, x0: f64, steps: usize) -> Vec<LqrTransition> {
    let mut x = x0;
    (0..steps)
        .map(|k| {
            let u = -gain * x + input.value(k as f64 * env.dt);
            let x_next = env.step_continuous(x, u);
            let tr = LqrTransition {
                x,
                u,
                cost: env.cost_continuous(x, u),
                x_next,
            };
            x = x_next;
            tr
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WatkinsRun {
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub divergence: Option<DivergenceEvent>,
    /// `(iteration, theta)` every `record_every` iterations.
    pub trace: Vec<(usize, Vec<f64>)>,
}

/// Run the LQR Watkins recursion over `transitions`, stopping at divergence.
pub fn lqr_watkins_run(theta0: [f64; 3], alpha: f64, transitions: &[LqrTransition], record_every: usize) -> Result<WatkinsRun> {
    let mut st = WatkinsState::new(theta0.to_vec(), alpha)?;
    let mut trace = vec![(0, st.theta.clone())];
    for tr in transitions {
        if lqr_watkins_step(&mut st, tr).is_none() {
            break;
        }
        if record_every > 0 && st.iteration % record_every == 0 {
            trace.push((st.iteration, st.theta.clone()));
        }
        if st.diverged() {
            break;
        }
    }
    Ok(WatkinsRun {
        theta: st.theta,
        iterations: st.iteration,
        divergence: st.divergence,
        trace,
    })
}

/// Write `(iteration, theta)` rows as CSV.
pub fn write_theta_trace<W: Write>(trace: &[(usize, Vec<f64>)], out: W) -> Result<()> {
    let d = trace.first().map_or(0, |t| t.1.len());
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["iteration".to_string()];
    header.extend((0..d).map(|i| format!("theta{i}")));
    wtr.write_record(&header)?;
    for (k, theta) in trace {
        let mut rec = vec![k.to_string()];
        rec.extend(theta.iter().map(|v| format!("{v:?}")));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
