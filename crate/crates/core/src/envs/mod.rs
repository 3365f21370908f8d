//! Deterministic discrete-time control environments.
//!
//! Every environment is an immutable description: `step` and `cost` are pure
//! functions of `(x, u)`. Actions are indices into a fixed ordered action set
//! that is the same at every state. Goal states are absorbing with zero cost,
//! so the infinite-horizon cost-to-go stays finite.

mod acrobot;
mod cartpole;
mod grid;
mod lqr;
mod mountain_car;

pub use acrobot::Acrobot;
pub use cartpole::CartPole;
pub use grid::{GridWorld, TabularModel};
pub use lqr::Lqr1d;
pub use mountain_car::MountainCar;

use rand::RngCore;

use crate::error::{Error, Result};

/// A point in the state space.
pub type State = Vec<f64>;

/// Axis-aligned box, one `(low, high)` pair per coordinate.
pub type StateBox = Vec<(f64, f64)>;

pub trait Environment: Send + Sync {
    fn name(&self) -> &'static str;

    fn state_dim(&self) -> usize;

    fn num_actions(&self) -> usize;

    /// Physical value of an action (force, torque, input), for reporting.
    fn action_value(&self, action: usize) -> f64;

    /// Next state without validating the action index.
    fn transition(&self, x: &[f64], action: usize) -> State;

    /// Per-step cost without validating the action index.
    fn stage_cost(&self, x: &[f64], action: usize) -> f64;

    /// The equilibrium pair `z^e = (x^e, u^e)`.
    fn equilibrium(&self) -> (State, usize);

    /// Membership in the absorbing goal set.
    fn is_goal(&self, x: &[f64]) -> bool;

    /// Draw an initial condition from the initial-condition set.
    fn sample_initial(&self, rng: &mut dyn RngCore) -> State;

    /// Box used for feature rescaling and binning.
    fn state_bounds(&self) -> StateBox;

    /// Validated transition.
    fn step(&self, x: &[f64], action: usize) -> Result<State> {
        self.check_action(action)?;
        Ok(self.transition(x, action))
    }

    /// Validated cost.
    fn cost(&self, x: &[f64], action: usize) -> Result<f64> {
        self.check_action(action)?;
        Ok(self.stage_cost(x, action))
    }

    fn check_action(&self, action: usize) -> Result<()> {
        let n_actions = self.num_actions();
        if action < n_actions {
            Ok(())
        } else {
            Err(Error::InvalidAction { action, n_actions })
        }
    }

    /// Draw an initial condition. Reproducible for a fixed RNG state.
    fn reset(&self, rng: &mut dyn RngCore) -> State {
        self.sample_initial(rng)
    }
}

/// Assert the equilibrium invariants of an environment instance.
pub fn check_equilibrium(env: &dyn Environment) -> Result<()> {
    let (xe, ue) = env.equilibrium();
    env.check_action(ue)?;
    let next = env.transition(&xe, ue);
    if next != xe {
        return Err(Error::Parameter(format!(
            "{}: equilibrium {xe:?} is not a fixed point (maps to {next:?})",
            env.name()
        )));
    }
    let c = env.stage_cost(&xe, ue);
    if c != 0.0 {
        return Err(Error::Parameter(format!(
            "{}: cost at equilibrium is {c}, expected 0",
            env.name()
        )));
    }
    Ok(())
}

/// One recorded trajectory: `states` is one longer than `actions`/`costs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub states: Vec<State>,
    pub actions: Vec<usize>,
    pub costs: Vec<f64>,
    pub reached_goal: bool,
}

impl Rollout {
    pub fn total_cost(&self) -> f64 {
        self.costs.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Simulate `policy` from `x0` until the goal is entered or `max_steps` steps.
pub fn rollout<P>(env: &dyn Environment, mut policy: P, x0: State, max_steps: usize) -> Rollout
where
    P: FnMut(&[f64]) -> usize,
{
    let mut states = vec![x0];
    let mut actions = Vec::new();
    let mut costs = Vec::new();
    let mut reached_goal = env.is_goal(&states[0]);
    while !reached_goal && actions.len() < max_steps {
        let x = states.last().expect("nonempty");
        let a = policy(x);
        let c = env.stage_cost(x, a);
        let next = env.transition(x, a);
        reached_goal = env.is_goal(&next);
        actions.push(a);
        costs.push(c);
        states.push(next);
    }
    Rollout {
        states,
        actions,
        costs,
        reached_goal,
    }
}

pub(crate) fn uniform_in_box(bx: &[(f64, f64)], rng: &mut dyn RngCore) -> State {
    use rand::Rng;
    bx.iter()
        .map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..hi) } else { lo })
        .collect()
}
