use super::FeatureMap;
use crate::error::{Error, Result};

/// Quadratic basis for the scalar LQR problem: `psi(x, u) = [x^2, 2xu, u^2]`,
/// so `Q^theta(x, u) = theta1 x^2 + 2 theta2 x u + theta3 u^2`.
///
/// Actions index into `action_values`; the continuous-input minimizer is
/// available through [`QuadraticLqrBasis::qbar_continuous`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticLqrBasis {
    action_values: Vec<f64>,
}

impl QuadraticLqrBasis {
    pub fn new(action_values: Vec<f64>) -> Self {
        Self { action_values }
    }

    pub fn features(x: f64, u: f64) -> [f64; 3] {
        [x * x, 2.0 * x * u, u * u]
    }

    pub fn action_values(&self) -> &[f64] {
        &self.action_values
    }

    /// Greedy gain `K^theta = theta2 / theta3`, with `phi^theta(x) = -K^theta x`.
    pub fn gain(theta: &[f64]) -> Result<f64> {
        if theta[2] > 0.0 {
            Ok(theta[1] / theta[2])
        } else {
            Err(Error::UndefinedMinimizer { theta3: theta[2] })
        }
    }

    /// `beta_theta = theta1 - theta2^2 / theta3`.
    pub fn beta(theta: &[f64]) -> Result<f64> {
        let k = Self::gain(theta)?;
        Ok(theta[0] - theta[1] * k)
    }

    /// Minimum over the real line: `(beta_theta x^2, -K^theta x)`.
    pub fn qbar_continuous(theta: &[f64], x: f64) -> Result<(f64, f64)> {
        let beta = Self::beta(theta)?;
        let k = Self::gain(theta)?;
        Ok((beta * x * x, -k * x))
    }
}

impl FeatureMap for QuadraticLqrBasis {
    fn dim(&self) -> usize {
        3
    }

    fn num_actions(&self) -> usize {
        self.action_values.len()
    }

    fn eval_into(&self, x: &[f64], action: usize, out: &mut [f64]) {
        out.copy_from_slice(&Self::features(x[0], self.action_values[action]));
    }

    fn describe(&self) -> String {
        format!("quadratic_lqr(n_U={})", self.action_values.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_at_origin() {
        assert_eq!(QuadraticLqrBasis::features(0.0, 0.0), [0.0; 3]);
    }

    #[test]
    fn q_expands_to_quadratic_form() {
        let b = QuadraticLqrBasis::new(vec![-1.0, 0.5]);
        let theta = [1.5, -0.25, 2.0];
        let (x, u) = (0.7, 0.5);
        let q = b.q_value(&theta, &[x], 1);
        assert!((q - (1.5 * x * x + 2.0 * -0.25 * x * u + 2.0 * u * u)).abs() < 1e-14);
    }

    #[test]
    fn continuous_minimizer() {
        let theta = [2.0, 1.0, 1.0];
        let (v, u) = QuadraticLqrBasis::qbar_continuous(&theta, 1.0).unwrap();
        assert_eq!(v, 1.0);
        assert_eq!(u, -1.0);
        // The minimum over a fine grid approaches the closed form from above.
        let grid: Vec<f64> = (0..=4000).map(|i| -2.0 + i as f64 * 1e-3).collect();
        let b = QuadraticLqrBasis::new(grid);
        let (gv, _) = super::super::qbar(&theta, &[1.0], &b);
        assert!(gv >= v && gv - v < 1e-6);
        assert!(QuadraticLqrBasis::qbar_continuous(&[1.0, 0.0, 0.0], 1.0).is_err());
        assert!(QuadraticLqrBasis::qbar_continuous(&[1.0, 0.0, -1.0], 1.0).is_err());
    }
}
