use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{uniform_in_box, Environment, State, StateBox};

/// Classic cart-pole with Euler integration. State `(x, x_dot, theta, theta_dot)`,
/// actions `{left, right}`.
///
/// The failure set (cart off the track or pole past the angle limit) is the
/// absorbing terminal set. The only cost is a unit charge on the transition
/// that enters it, so balancing forever costs nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CartPole {
    pub gravity: f64,
    pub mass_cart: f64,
    pub mass_pole: f64,
    /// Half the pole length.
    pub length: f64,
    pub force_mag: f64,
    pub tau: f64,
    pub x_threshold: f64,
    pub theta_threshold: f64,
    pub failure_cost: f64,
}

impl Default for CartPole {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            mass_cart: 1.0,
            mass_pole: 0.1,
            length: 0.5,
            force_mag: 10.0,
            tau: 0.02,
            x_threshold: 2.4,
            theta_threshold: 12.0 * 2.0 * std::f64::consts::PI / 360.0,
            failure_cost: 1.0,
        }
    }
}

impl CartPole {
    fn integrate(&self, x: &[f64], action: usize) -> State {
        let force = self.action_value(action);
        let (pos, vel, th, om) = (x[0], x[1], x[2], x[3]);
        let total_mass = self.mass_cart + self.mass_pole;
        let pm_len = self.mass_pole * self.length;
        let (s, c) = th.sin_cos();
        let temp = (force + pm_len * om * om * s) / total_mass;
        let th_acc = (self.gravity * s - c * temp)
            / (self.length * (4.0 / 3.0 - self.mass_pole * c * c / total_mass));
        let x_acc = temp - pm_len * th_acc * c / total_mass;
        vec![
            pos + self.tau * vel,
            vel + self.tau * x_acc,
            th + self.tau * om,
            om + self.tau * th_acc,
        ]
    }
}

impl Environment for CartPole {
    fn name(&self) -> &'static str {
        "cartpole"
    }

    fn state_dim(&self) -> usize {
        4
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn action_value(&self, action: usize) -> f64 {
        if action == 0 {
            -self.force_mag
        } else {
            self.force_mag
        }
    }

    fn transition(&self, x: &[f64], action: usize) -> State {
        if self.is_goal(x) {
            return x.to_vec();
        }
        self.integrate(x, action)
    }

    fn stage_cost(&self, x: &[f64], action: usize) -> f64 {
        if !self.is_goal(x) && self.is_goal(&self.integrate(x, action)) {
            self.failure_cost
        } else {
            0.0
        }
    }

    fn equilibrium(&self) -> (State, usize) {
        (vec![0.0, 0.0, 2.0 * self.theta_threshold, 0.0], 0)
    }

    fn is_goal(&self, x: &[f64]) -> bool {
        x[0].abs() > self.x_threshold || x[2].abs() > self.theta_threshold
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> State {
        uniform_in_box(&[(-0.05, 0.05); 4], rng)
    }

    fn state_bounds(&self) -> StateBox {
        vec![
            (-self.x_threshold, self.x_threshold),
            (-3.0, 3.0),
            (-self.theta_threshold, self.theta_threshold),
            (-3.5, 3.5),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::rollout;

    #[test]
    fn constant_push_fails_and_pays_once() {
        let env = CartPole::default();
        let r = rollout(&env, |_| 1, vec![0.0; 4], 500);
        assert!(r.reached_goal);
        assert_eq!(r.total_cost(), 1.0);
        assert_eq!(*r.costs.last().unwrap(), 1.0);
    }

    #[test]
    fn upright_rest_is_momentarily_still() {
        let env = CartPole::default();
        let next = env.step(&[0.0; 4], 1).unwrap();
        // Positions integrate velocity first, so they stay put for one step.
        assert_eq!(next[0], 0.0);
        assert_eq!(next[2], 0.0);
        assert!(next[1] > 0.0 && next[3] < 0.0);
    }
}
