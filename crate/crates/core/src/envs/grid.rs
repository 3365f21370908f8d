use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{Environment, State, StateBox};

/// Deterministic grid world used as the tabular reference problem.
///
/// States are cells `(col, row)`; actions are `left, right, down, up`, and a
/// move into a wall leaves the state unchanged. The equilibrium is the
/// bottom-right corner with the action `right` (pushing into the wall).
/// Every other pair costs `1 + cost_perturbation * pair_index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridWorld {
    pub width: usize,
    pub height: usize,
    pub cost_perturbation: f64,
}

impl Default for GridWorld {
    fn default() -> Self {
        Self::new(3, 3)
    }
}

impl GridWorld {
    pub const LEFT: usize = 0;
    pub const RIGHT: usize = 1;
    pub const DOWN: usize = 2;
    pub const UP: usize = 3;

    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            cost_perturbation: 0.0,
        }
    }

    pub fn with_perturbation(mut self, eps: f64) -> Self {
        self.cost_perturbation = eps;
        self
    }

    pub fn num_states(&self) -> usize {
        self.width * self.height
    }

    pub fn cell(&self, index: usize) -> State {
        vec![(index % self.width) as f64, (index / self.width) as f64]
    }

    pub fn state_index(&self, x: &[f64]) -> usize {
        let col = (x[0].round().max(0.0) as usize).min(self.width - 1);
        let row = (x[1].round().max(0.0) as usize).min(self.height - 1);
        row * self.width + col
    }

    pub fn pair_index(&self, x: &[f64], action: usize) -> usize {
        self.state_index(x) * 4 + action
    }

    pub fn states(&self) -> Vec<State> {
        (0..self.num_states()).map(|i| self.cell(i)).collect()
    }

    /// Tabulated model of this grid.
    pub fn model(&self) -> TabularModel {
        let states = self.states();
        let n_actions = 4;
        let mut next = Vec::with_capacity(states.len() * n_actions);
        let mut cost = Vec::with_capacity(states.len() * n_actions);
        for x in &states {
            for a in 0..n_actions {
                next.push(self.state_index(&self.transition(x, a)));
                cost.push(self.stage_cost(x, a));
            }
        }
        let (xe, ue) = self.equilibrium();
        TabularModel {
            n_states: states.len(),
            n_actions,
            next,
            cost,
            equilibrium: self.state_index(&xe) * n_actions + ue,
        }
    }

    /// A uniformly random walk of `steps` transitions that ignores the goal.
    pub fn random_walk(&self, start: State, steps: usize, rng: &mut dyn RngCore) -> (Vec<State>, Vec<usize>) {
        let mut states = vec![start];
        let mut actions = Vec::with_capacity(steps);
        for _ in 0..steps {
            let a = rng.gen_range(0..4);
            let x = states.last().expect("nonempty");
            states.push(self.transition(x, a));
            actions.push(a);
        }
        (states, actions)
    }
}

impl Environment for GridWorld {
    fn name(&self) -> &'static str {
        "grid"
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn num_actions(&self) -> usize {
        4
    }

    fn action_value(&self, action: usize) -> f64 {
        action as f64
    }

    fn transition(&self, x: &[f64], action: usize) -> State {
        let (col, row) = (x[0], x[1]);
        let max_col = (self.width - 1) as f64;
        let max_row = (self.height - 1) as f64;
        match action {
            Self::LEFT => vec![(col - 1.0).max(0.0), row],
            Self::RIGHT => vec![(col + 1.0).min(max_col), row],
            Self::DOWN => vec![col, (row - 1.0).max(0.0)],
            _ => vec![col, (row + 1.0).min(max_row)],
        }
    }

    fn stage_cost(&self, x: &[f64], action: usize) -> f64 {
        let (xe, ue) = self.equilibrium();
        if action == ue && self.state_index(x) == self.state_index(&xe) {
            0.0
        } else {
            1.0 + self.cost_perturbation * self.pair_index(x, action) as f64
        }
    }

    fn equilibrium(&self) -> (State, usize) {
        (vec![(self.width - 1) as f64, 0.0], Self::RIGHT)
    }

    fn is_goal(&self, _x: &[f64]) -> bool {
        false
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> State {
        self.cell(rng.gen_range(0..self.num_states()))
    }

    fn state_bounds(&self) -> StateBox {
        vec![(0.0, (self.width - 1) as f64), (0.0, (self.height - 1) as f64)]
    }
}

/// A finite deterministic control model with tabulated transitions and costs.
/// Pairs are indexed `state * n_actions + action`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularModel {
    pub n_states: usize,
    pub n_actions: usize,
    pub next: Vec<usize>,
    pub cost: Vec<f64>,
    pub equilibrium: usize,
}

impl TabularModel {
    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    /// Optimal total-cost Q-function with `Q(z^e) = 0`, by value iteration.
    pub fn q_star(&self) -> Vec<f64> {
        let n = self.n_pairs();
        let mut q = vec![0.0; n];
        for _ in 0..(10 * n + 100) {
            let v = self.state_values(&q);
            let mut changed = false;
            for z in 0..n {
                let new = if z == self.equilibrium {
                    0.0
                } else {
                    self.cost[z] + v[self.next[z]]
                };
                if new != q[z] {
                    changed = true;
                    q[z] = new;
                }
            }
            if !changed {
                break;
            }
        }
        q
    }

    /// `min_u Q(x, u)` per state.
    pub fn state_values(&self, q: &[f64]) -> Vec<f64> {
        (0..self.n_states)
            .map(|s| {
                q[s * self.n_actions..(s + 1) * self.n_actions]
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    /// Greedy action at `state`, lowest index on ties.
    pub fn greedy(&self, q: &[f64], state: usize) -> usize {
        let row = &q[state * self.n_actions..(state + 1) * self.n_actions];
        let mut best = 0;
        for (a, &v) in row.iter().enumerate() {
            if v < row[best] {
                best = a;
            }
        }
        best
    }

    /// Optimal path from pair `z0` to the equilibrium: the pairs
    /// `z(1), ..., z(m)` visited after `z0`, with `z(m) = z^e`. Empty when
    /// `z0` is the equilibrium itself.
    pub fn optimal_successors(&self, q: &[f64], z0: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut z = z0;
        while z != self.equilibrium && path.len() <= self.n_pairs() {
            let s = self.next[z];
            z = s * self.n_actions + self.greedy(q, s);
            path.push(z);
        }
        path
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn walls_block_moves() {
        let g = GridWorld::new(3, 3);
        assert_eq!(g.transition(&[0.0, 0.0], GridWorld::LEFT), vec![0.0, 0.0]);
        assert_eq!(g.transition(&[0.0, 0.0], GridWorld::UP), vec![0.0, 1.0]);
        assert_eq!(g.transition(&[2.0, 2.0], GridWorld::RIGHT), vec![2.0, 2.0]);
    }

    #[test]
    fn q_star_is_manhattan_distance_plus_first_step() {
        let g = GridWorld::new(3, 3);
        let m = g.model();
        let q = m.q_star();
        let v = m.state_values(&q);
        for s in 0..9 {
            let x = g.cell(s);
            let dist = (2.0 - x[0]) + x[1];
            assert_eq!(v[s], dist, "state {s}");
        }
        assert_eq!(q[m.equilibrium], 0.0);
        // (goal, down) bumps the wall once and then rests.
        assert_eq!(q[g.pair_index(&[2.0, 0.0], GridWorld::DOWN)], 1.0);
    }

    #[test]
    fn optimal_path_ends_at_equilibrium() {
        let g = GridWorld::new(3, 3);
        let m = g.model();
        let q = m.q_star();
        let z0 = g.pair_index(&[0.0, 0.0], GridWorld::RIGHT);
        let path = m.optimal_successors(&q, z0);
        assert_eq!(*path.last().unwrap(), m.equilibrium);
        assert_eq!(path.len(), 2);
        assert!(m.optimal_successors(&q, m.equilibrium).is_empty());
    }
}
