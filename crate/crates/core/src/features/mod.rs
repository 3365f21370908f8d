//! Linear function-approximation bases `psi: Z -> R^d` with `psi(z^e) = 0`.
//!
//! `Q^theta(z) = theta . psi(z)`. All maps are immutable after construction.

mod quadratic;
mod rff;
mod separable;
mod tabular;

use std::io::Write;
use std::sync::Arc;

pub use quadratic::QuadraticLqrBasis;
pub use rff::RandomFourierFeatures;
pub use separable::SeparableBasis;
pub use tabular::TabularBasis;

use crate::error::Result;

pub trait FeatureMap: Send + Sync {
    /// Parameter dimension `d`.
    fn dim(&self) -> usize;

    fn num_actions(&self) -> usize;

    /// Write `psi(x, action)` into `out` (length `dim()`), overwriting it.
    fn eval_into(&self, x: &[f64], action: usize, out: &mut [f64]);

    /// Short label for manifests.
    fn describe(&self) -> String;

    /// True for one-hot bases over an enumerated pair set.
    fn is_tabular(&self) -> bool {
        false
    }

    fn eval(&self, x: &[f64], action: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, action, &mut out);
        out
    }

    fn q_value(&self, theta: &[f64], x: &[f64], action: usize) -> f64 {
        dot(theta, &self.eval(x, action))
    }

    /// `Q^theta(x, u)` for every action, in action order.
    fn q_values(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        (0..self.num_actions())
            .map(|a| self.q_value(theta, x, a))
            .collect()
    }
}

pub type SharedFeatures = Arc<dyn FeatureMap>;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Index of the first minimum; ties go to the lowest index.
pub fn argmin_first(values: &[f64]) -> (f64, usize) {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    (values[best], best)
}

/// `Q_bar^theta(x) = min_u Q^theta(x, u)` together with the first minimizing action.
pub fn qbar(theta: &[f64], x: &[f64], features: &dyn FeatureMap) -> (f64, usize) {
    argmin_first(&features.q_values(theta, x))
}

/// Greedy policy `phi^theta(x)`.
pub fn greedy_action(theta: &[f64], x: &[f64], features: &dyn FeatureMap) -> usize {
    qbar(theta, x, features).1
}

/// Appends one feature equal to 1 everywhere except at the equilibrium pair.
///
/// The result is linearly dependent in the tabular case and constant along any
/// data that avoids `z^e`, which makes the constraint region unbounded.
pub struct WithConstant {
    inner: SharedFeatures,
    equilibrium: (Vec<f64>, usize),
}

impl WithConstant {
    pub fn new(inner: SharedFeatures, equilibrium: (Vec<f64>, usize)) -> Self {
        Self { inner, equilibrium }
    }
}

impl FeatureMap for WithConstant {
    fn dim(&self) -> usize {
        self.inner.dim() + 1
    }

    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }

    fn eval_into(&self, x: &[f64], action: usize, out: &mut [f64]) {
        let d = self.inner.dim();
        self.inner.eval_into(x, action, &mut out[..d]);
        let at_eq = action == self.equilibrium.1 && x == self.equilibrium.0.as_slice();
        out[d] = if at_eq { 0.0 } else { 1.0 };
    }

    fn describe(&self) -> String {
        format!("{}+constant", self.inner.describe())
    }
}

/// Write one CSV row per `(x, u)` pair: state coordinates, action, then features.
pub fn write_feature_matrix<W: Write>(
    features: &dyn FeatureMap,
    pairs: &[(Vec<f64>, usize)],
    out: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let n = pairs.first().map_or(0, |p| p.0.len());
    let mut header: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    header.push("u".into());
    header.extend((0..features.dim()).map(|i| format!("psi{i}")));
    wtr.write_record(&header)?;
    for (x, u) in pairs {
        let mut rec: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        rec.push(u.to_string());
        rec.extend(features.eval(x, *u).iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Environment, GridWorld};
    use proptest::prelude::*;

    fn grid_basis() -> (GridWorld, TabularBasis) {
        let g = GridWorld::new(3, 3);
        let b = TabularBasis::new(g.states(), 4, g.equilibrium()).unwrap();
        (g, b)
    }

    #[test]
    fn qbar_of_zero_theta_is_first_action() {
        let (_, b) = grid_basis();
        let theta = vec![0.0; b.dim()];
        assert_eq!(qbar(&theta, &[1.0, 1.0], &b), (0.0, 0));
    }

    #[test]
    fn qbar_matches_oracle_state_values() {
        let (g, b) = grid_basis();
        let m = g.model();
        let q = m.q_star();
        let theta = b.theta_from_table(&q);
        let v = m.state_values(&q);
        for s in 0..9 {
            let x = g.cell(s);
            let (val, a) = qbar(&theta, &x, &b);
            assert_eq!(val, v[s]);
            assert_eq!(a, m.greedy(&q, s));
        }
    }

    #[test]
    fn constant_feature_zero_only_at_equilibrium() {
        let (g, b) = grid_basis();
        let wc = WithConstant::new(Arc::new(b), g.equilibrium());
        assert_eq!(wc.dim(), 36);
        let (xe, ue) = g.equilibrium();
        assert!(wc.eval(&xe, ue).iter().all(|&v| v == 0.0));
        assert_eq!(wc.eval(&xe, 0)[35], 1.0);
    }

    #[test]
    fn feature_matrix_csv_has_header_and_rows() {
        let (g, b) = grid_basis();
        let mut buf = Vec::new();
        write_feature_matrix(&b, &[(g.cell(0), 0), (g.cell(1), 2)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("x0,x1,u,psi0"));
    }

    proptest! {
        #[test]
        fn qbar_is_concave_in_theta(
            ta in proptest::collection::vec(-5.0..5.0f64, 35),
            tb in proptest::collection::vec(-5.0..5.0f64, 35),
            s in 0usize..9,
        ) {
            let (g, b) = grid_basis();
            let x = g.cell(s);
            let mid: Vec<f64> = ta.iter().zip(&tb).map(|(a, b)| 0.5 * (a + b)).collect();
            let lhs = qbar(&mid, &x, &b).0;
            let rhs = 0.5 * (qbar(&ta, &x, &b).0 + qbar(&tb, &x, &b).0);
            prop_assert!(lhs >= rhs - 1e-12);
        }

        #[test]
        fn qbar_tie_break_is_deterministic(t in proptest::collection::vec(-1i32..2, 35)) {
            let (g, b) = grid_basis();
            let theta: Vec<f64> = t.iter().map(|&v| v as f64).collect();
            let x = g.cell(4);
            let first = qbar(&theta, &x, &b);
            let q = b.q_values(&theta, &x);
            let lowest = q.iter().position(|&v| v == first.0).unwrap();
            prop_assert_eq!(first.1, lowest);
            prop_assert_eq!(first, qbar(&theta, &x, &b));
        }
    }
}
