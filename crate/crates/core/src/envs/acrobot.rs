use std::f64::consts::PI;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{uniform_in_box, Environment, State, StateBox};

/// Two-link acrobot, state `(theta1, theta2, omega1, omega2)`, torques `{-1, 0, +1}`.
///
/// Uses the conventional book dynamics. Each decision step of length `dt` is
/// integrated with `substeps` explicit Euler steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Acrobot {
    pub dt: f64,
    pub substeps: usize,
    pub link_length_1: f64,
    pub link_mass_1: f64,
    pub link_mass_2: f64,
    pub link_com_1: f64,
    pub link_com_2: f64,
    pub link_moi: f64,
    pub gravity: f64,
    pub max_vel_1: f64,
    pub max_vel_2: f64,
}

impl Default for Acrobot {
    fn default() -> Self {
        Self {
            dt: 0.2,
            substeps: 4,
            link_length_1: 1.0,
            link_mass_1: 1.0,
            link_mass_2: 1.0,
            link_com_1: 0.5,
            link_com_2: 0.5,
            link_moi: 1.0,
            gravity: 9.8,
            max_vel_1: 4.0 * PI,
            max_vel_2: 9.0 * PI,
        }
    }
}

fn wrap(angle: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut a = (angle + PI).rem_euclid(two_pi) - PI;
    if a >= PI {
        a -= two_pi;
    }
    a
}

impl Acrobot {
    pub const TORQUES: [f64; 3] = [-1.0, 0.0, 1.0];

    fn derivatives(&self, s: &[f64; 4], torque: f64) -> [f64; 4] {
        let (m1, m2) = (self.link_mass_1, self.link_mass_2);
        let (l1, lc1, lc2) = (self.link_length_1, self.link_com_1, self.link_com_2);
        let (i1, i2) = (self.link_moi, self.link_moi);
        let g = self.gravity;
        let [th1, th2, w1, w2] = *s;
        let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * th2.cos()) + i1 + i2;
        let d2 = m2 * (lc2 * lc2 + l1 * lc2 * th2.cos()) + i2;
        let phi2 = m2 * lc2 * g * (th1 + th2 - PI / 2.0).cos();
        let phi1 = -m2 * l1 * lc2 * w2 * w2 * th2.sin()
            - 2.0 * m2 * l1 * lc2 * w2 * w1 * th2.sin()
            + (m1 * lc1 + m2 * l1) * g * (th1 - PI / 2.0).cos()
            + phi2;
        let acc2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * w1 * w1 * th2.sin() - phi2)
            / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
        let acc1 = -(d2 * acc2 + phi1) / d1;
        [w1, w2, acc1, acc2]
    }
}

impl Environment for Acrobot {
    fn name(&self) -> &'static str {
        "acrobot"
    }

    fn state_dim(&self) -> usize {
        4
    }

    fn num_actions(&self) -> usize {
        3
    }

    fn action_value(&self, action: usize) -> f64 {
        Self::TORQUES[action]
    }

    fn transition(&self, x: &[f64], action: usize) -> State {
        if self.is_goal(x) {
            return x.to_vec();
        }
        let torque = Self::TORQUES[action];
        let h = self.dt / self.substeps.max(1) as f64;
        let mut s = [x[0], x[1], x[2], x[3]];
        for _ in 0..self.substeps.max(1) {
            let ds = self.derivatives(&s, torque);
            for (si, di) in s.iter_mut().zip(ds) {
                *si += h * di;
            }
        }
        vec![
            wrap(s[0]),
            wrap(s[1]),
            s[2].clamp(-self.max_vel_1, self.max_vel_1),
            s[3].clamp(-self.max_vel_2, self.max_vel_2),
        ]
    }

    fn stage_cost(&self, x: &[f64], _action: usize) -> f64 {
        if self.is_goal(x) {
            0.0
        } else {
            1.0
        }
    }

    fn equilibrium(&self) -> (State, usize) {
        (vec![-PI, 0.0, 0.0, 0.0], 1)
    }

    fn is_goal(&self, x: &[f64]) -> bool {
        -x[0].cos() - (x[0] + x[1]).cos() > 1.0
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> State {
        uniform_in_box(&[(-0.1, 0.1); 4], rng)
    }

    fn state_bounds(&self) -> StateBox {
        vec![
            (-PI, PI),
            (-PI, PI),
            (-self.max_vel_1, self.max_vel_1),
            (-self.max_vel_2, self.max_vel_2),
        ]
    }
}
