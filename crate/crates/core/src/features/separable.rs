use std::sync::Arc;

use super::{FeatureMap, RandomFourierFeatures};

/// Predicate selecting states whose features are pinned to zero.
pub type ZeroSet = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// Separable basis `psi_{i,j}(x, u) = k_i(x) 1{u = u^j}`, zero at `z^e` and on
/// the optional zero set (absorbing goal states).
///
/// Coordinates are laid out block by action: block `j` holds the `d_x` state
/// features for action `j`.
#[derive(Clone)]
pub struct SeparableBasis {
    state_features: RandomFourierFeatures,
    n_actions: usize,
    equilibrium: (Vec<f64>, usize),
    zero_set: Option<ZeroSet>,
}

impl std::fmt::Debug for SeparableBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SeparableBasis")
            .field("d_x", &self.state_features.len())
            .field("n_actions", &self.n_actions)
            .field("equilibrium", &self.equilibrium)
            .field("zero_set", &self.zero_set.is_some())
            .finish()
    }
}

impl SeparableBasis {
    pub fn new(
        state_features: RandomFourierFeatures,
        n_actions: usize,
        equilibrium: (Vec<f64>, usize),
    ) -> Self {
        Self {
            state_features,
            n_actions,
            equilibrium,
            zero_set: None,
        }
    }

    pub fn with_zero_set(mut self, zero_set: ZeroSet) -> Self {
        self.zero_set = Some(zero_set);
        self
    }

    pub fn state_dim(&self) -> usize {
        self.state_features.len()
    }

    pub fn state_features(&self) -> &RandomFourierFeatures {
        &self.state_features
    }

    fn is_zero_state(&self, x: &[f64]) -> bool {
        self.zero_set.as_ref().is_some_and(|z| z(x))
    }

    fn is_equilibrium(&self, x: &[f64], action: usize) -> bool {
        action == self.equilibrium.1 && x == self.equilibrium.0.as_slice()
    }
}

impl FeatureMap for SeparableBasis {
    fn dim(&self) -> usize {
        self.state_features.len() * self.n_actions
    }

    fn num_actions(&self) -> usize {
        self.n_actions
    }

    fn eval_into(&self, x: &[f64], action: usize, out: &mut [f64]) {
        out.fill(0.0);
        if self.is_zero_state(x) || self.is_equilibrium(x, action) {
            return;
        }
        let dx = self.state_features.len();
        self.state_features
            .eval_into(x, &mut out[action * dx..(action + 1) * dx]);
    }

    fn q_value(&self, theta: &[f64], x: &[f64], action: usize) -> f64 {
        self.q_values(theta, x)[action]
    }

    fn q_values(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        if self.is_zero_state(x) {
            return vec![0.0; self.n_actions];
        }
        let k = self.state_features.eval(x);
        let dx = k.len();
        (0..self.n_actions)
            .map(|a| {
                if self.is_equilibrium(x, a) {
                    0.0
                } else {
                    super::dot(&theta[a * dx..(a + 1) * dx], &k)
                }
            })
            .collect()
    }

    fn describe(&self) -> String {
        format!(
            "separable_rff(d_x={}, n_U={}, sigma={:?})",
            self.state_features.len(),
            self.n_actions,
            self.state_features.bandwidths()
        )
    }
}
