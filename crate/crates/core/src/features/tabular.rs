use std::collections::HashMap;

use super::FeatureMap;
use crate::error::{Error, Result};

fn key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

/// Indicator basis over every state-action pair except `z^e`, so
/// `d = |X| * n_U - 1` and `Q^theta(z^i) = theta_i`.
///
/// Pairs are ordered state-major, action-minor, with the equilibrium removed.
/// States outside the enumerated set evaluate to the zero vector.
#[derive(Debug, Clone)]
pub struct TabularBasis {
    n_states: usize,
    n_actions: usize,
    index: HashMap<Vec<u64>, usize>,
    equilibrium_pair: usize,
}

impl TabularBasis {
    pub fn new(states: Vec<Vec<f64>>, n_actions: usize, equilibrium: (Vec<f64>, usize)) -> Result<Self> {
        let index: HashMap<_, _> = states.iter().enumerate().map(|(i, s)| (key(s), i)).collect();
        if index.len() != states.len() {
            return Err(Error::Parameter("duplicate states in tabular basis".into()));
        }
        let (xe, ue) = equilibrium;
        let se = *index
            .get(&key(&xe))
            .ok_or_else(|| Error::Parameter(format!("equilibrium state {xe:?} not in state set")))?;
        if ue >= n_actions {
            return Err(Error::Parameter(format!(
                "equilibrium action {ue} outside {n_actions} actions"
            )));
        }
        Ok(Self {
            n_states: states.len(),
            n_actions,
            index,
            equilibrium_pair: se * n_actions + ue,
        })
    }

    /// Pair index `state * n_U + action` of `(x, u)`, if `x` is enumerated.
    pub fn pair_index(&self, x: &[f64], action: usize) -> Option<usize> {
        self.index.get(&key(x)).map(|s| s * self.n_actions + action)
    }

    /// Coordinate of pair `z` in `theta`, `None` for the equilibrium.
    pub fn coordinate(&self, pair: usize) -> Option<usize> {
        use std::cmp::Ordering::*;
        match pair.cmp(&self.equilibrium_pair) {
            Less => Some(pair),
            Equal => None,
            Greater => Some(pair - 1),
        }
    }

    /// Inverse of [`TabularBasis::coordinate`].
    pub fn pair_of(&self, coordinate: usize) -> usize {
        if coordinate < self.equilibrium_pair {
            coordinate
        } else {
            coordinate + 1
        }
    }

    pub fn equilibrium_pair(&self) -> usize {
        self.equilibrium_pair
    }

    /// Convert a full pair table (length `|X| n_U`) into parameters.
    pub fn theta_from_table(&self, table: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|i| table[self.pair_of(i)]).collect()
    }

    /// Expand parameters into a full pair table with `Q(z^e) = 0`.
    pub fn table_from_theta(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.n_states * self.n_actions)
            .map(|z| self.coordinate(z).map_or(0.0, |i| theta[i]))
            .collect()
    }
}

impl FeatureMap for TabularBasis {
    fn dim(&self) -> usize {
        self.n_states * self.n_actions - 1
    }

    fn num_actions(&self) -> usize {
        self.n_actions
    }

    fn eval_into(&self, x: &[f64], action: usize, out: &mut [f64]) {
        out.fill(0.0);
        if let Some(i) = self.pair_index(x, action).and_then(|z| self.coordinate(z)) {
            out[i] = 1.0;
        }
    }

    fn q_value(&self, theta: &[f64], x: &[f64], action: usize) -> f64 {
        self.pair_index(x, action)
            .and_then(|z| self.coordinate(z))
            .map_or(0.0, |i| theta[i])
    }

    fn describe(&self) -> String {
        format!("tabular(|X|={}, n_U={})", self.n_states, self.n_actions)
    }

    fn is_tabular(&self) -> bool {
        true
    }
}
