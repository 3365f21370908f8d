use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{uniform_in_box, Environment, State, StateBox};

pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const MAX_SPEED: f64 = 0.07;

/// Classic mountain car. State `(position, velocity)`, actions `{-1, 0, +1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MountainCar {
    pub force: f64,
    pub gravity: f64,
    pub goal_position: f64,
    /// Initial positions are uniform on this interval, velocity zero.
    pub init_position: (f64, f64),
    /// Cost per raw step outside the goal.
    pub step_cost: f64,
}

impl Default for MountainCar {
    fn default() -> Self {
        Self {
            force: 1e-3,
            gravity: 2.5e-3,
            goal_position: 0.5,
            init_position: (-0.6, -0.4),
            step_cost: 1.0,
        }
    }
}

impl MountainCar {
    pub const ACTIONS: [f64; 3] = [-1.0, 0.0, 1.0];

    /// The conventional start at the bottom of the valley.
    pub fn standard_start() -> State {
        vec![-0.5, 0.0]
    }
}

impl Environment for MountainCar {
    fn name(&self) -> &'static str {
        "mountain_car"
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn num_actions(&self) -> usize {
        3
    }

    fn action_value(&self, action: usize) -> f64 {
        Self::ACTIONS[action]
    }

    fn transition(&self, x: &[f64], action: usize) -> State {
        if self.is_goal(x) {
            return x.to_vec();
        }
        let (p, v) = (x[0], x[1]);
        let mut v = v + Self::ACTIONS[action] * self.force - self.gravity * (3.0 * p).cos();
        v = v.clamp(-MAX_SPEED, MAX_SPEED);
        let mut p = (p + v).clamp(MIN_POSITION, MAX_POSITION);
        if p <= MIN_POSITION && v < 0.0 {
            p = MIN_POSITION;
            v = 0.0;
        }
        vec![p, v]
    }

    fn stage_cost(&self, x: &[f64], _action: usize) -> f64 {
        if self.is_goal(x) {
            0.0
        } else {
            self.step_cost
        }
    }

    fn equilibrium(&self) -> (State, usize) {
        (vec![self.goal_position, 0.0], 1)
    }

    fn is_goal(&self, x: &[f64]) -> bool {
        x[0] >= self.goal_position
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> State {
        uniform_in_box(&[self.init_position, (0.0, 0.0)], rng)
    }

    fn state_bounds(&self) -> StateBox {
        vec![(MIN_POSITION, MAX_POSITION), (-MAX_SPEED, MAX_SPEED)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::rollout;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn coasting_step_from_rest() {
        let env = MountainCar::default();
        let next = env.step(&[-0.5, 0.0], 1).unwrap();
        let v = -0.0025 * (-1.5f64).cos();
        assert_eq!(next[1], v);
        assert_eq!(next[0], -0.5 + v);
    }

    #[test]
    fn goal_is_absorbing_with_zero_cost() {
        let env = MountainCar::default();
        for a in 0..3 {
            assert_eq!(env.step(&[0.55, 0.01], a).unwrap(), vec![0.55, 0.01]);
            assert_eq!(env.cost(&[0.55, 0.01], a).unwrap(), 0.0);
        }
        assert_eq!(env.cost(&[-0.3, 0.0], 2).unwrap(), 1.0);
    }

    #[test]
    fn energy_pumping_reaches_goal() {
        let env = MountainCar::default();
        let policy = |x: &[f64]| if x[1] < 0.0 { 0 } else { 2 };
        let r = rollout(&env, policy, MountainCar::standard_start(), 1000);
        assert!(r.reached_goal);
        assert!(r.len() < 200, "took {} steps", r.len());
        assert_eq!(r.total_cost(), r.len() as f64);
    }

    #[test]
    fn initial_draws_stay_in_box() {
        let env = MountainCar::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for _ in 0..10_000 {
            let x = env.reset(&mut rng);
            assert_eq!(x[1], 0.0);
            lo = lo.min(x[0]);
            hi = hi.max(x[0]);
        }
        assert!(lo >= -0.6 && hi <= -0.4);
        // Uniform draws fill the interval.
        assert!(lo < -0.599 && hi > -0.401);
    }

    #[test]
    fn clamping_keeps_states_in_box() {
        let env = MountainCar::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut x = MountainCar::standard_start();
        for _ in 0..1_000_000 {
            let a = rng.gen_range(0..3);
            x = env.transition(&x, a);
            assert!((MIN_POSITION..=MAX_POSITION).contains(&x[0]));
            assert!((-MAX_SPEED..=MAX_SPEED).contains(&x[1]));
            if env.is_goal(&x) {
                x = vec![rng.gen_range(-1.2..0.5), rng.gen_range(-0.07..0.07)];
            }
        }
    }
}
