use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{uniform_in_box, Environment, State, StateBox};

/// Euler-discretized scalar integrator `x+ = x + dt * u` with cost `dt * (x^2 + u^2)`.
///
/// Inputs are restricted to an odd grid of equally spaced points on
/// `[-u_max, u_max]`, so the middle action is exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Lqr1d {
    pub dt: f64,
    pub u_max: f64,
    pub n_actions: usize,
    pub init_range: (f64, f64),
    pub bounds: (f64, f64),
}

impl Default for Lqr1d {
    fn default() -> Self {
        Self {
            dt: 0.1,
            u_max: 3.0,
            n_actions: 41,
            init_range: (-1.0, 1.0),
            bounds: (-2.0, 2.0),
        }
    }
}

impl Lqr1d {
    pub fn action_grid(&self) -> Vec<f64> {
        (0..self.n_actions).map(|i| self.action_value(i)).collect()
    }

    /// Index of the grid point nearest to `u`, clipping to the grid range.
    pub fn nearest_action(&self, u: f64) -> usize {
        if self.n_actions == 1 {
            return 0;
        }
        let step = 2.0 * self.u_max / (self.n_actions - 1) as f64;
        let idx = ((u + self.u_max) / step).round();
        idx.clamp(0.0, (self.n_actions - 1) as f64) as usize
    }

    pub fn step_continuous(&self, x: f64, u: f64) -> f64 {
        x + self.dt * u
    }

    pub fn cost_continuous(&self, x: f64, u: f64) -> f64 {
        self.dt * (x * x + u * u)
    }
}

impl Environment for Lqr1d {
    fn name(&self) -> &'static str {
        "lqr1d"
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn num_actions(&self) -> usize {
        self.n_actions
    }

    fn action_value(&self, action: usize) -> f64 {
        if self.n_actions == 1 {
            return 0.0;
        }
        let half = (self.n_actions - 1) / 2;
        // Exact zero at the middle index.
        (action as f64 - half as f64) * self.u_max / half as f64
    }

    fn transition(&self, x: &[f64], action: usize) -> State {
        vec![self.step_continuous(x[0], self.action_value(action))]
    }

    fn stage_cost(&self, x: &[f64], action: usize) -> f64 {
        self.cost_continuous(x[0], self.action_value(action))
    }

    fn equilibrium(&self) -> (State, usize) {
        (vec![0.0], self.n_actions / 2)
    }

    fn is_goal(&self, _x: &[f64]) -> bool {
        false
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> State {
        uniform_in_box(&[self.init_range], rng)
    }

    fn state_bounds(&self) -> StateBox {
        vec![self.bounds]
    }
}
