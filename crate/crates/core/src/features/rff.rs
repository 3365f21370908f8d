use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Random Fourier state features approximating a Gaussian kernel on the
/// state rescaled to the unit box.
///
/// `k_i(x) = sqrt(2/d_x) cos(omega_i . x~ + b_i)` with `omega_i ~ N(0, I / sigma^2)`
/// for the bandwidth block of feature `i` and `b_i ~ U[0, 2 pi)`. The `d_x`
/// features are split evenly across the bandwidth list, so
/// `sum_i k_i(x) k_i(y)` approximates the average over blocks of
/// `exp(-|x~ - y~|^2 / (2 sigma^2))`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomFourierFeatures {
    omega: Vec<Vec<f64>>,
    offset: Vec<f64>,
    bounds: Vec<(f64, f64)>,
    bandwidths: Vec<f64>,
    scale: f64,
}

impl RandomFourierFeatures {
    pub const DEFAULT_BANDWIDTHS: [f64; 10] =
        [0.05, 0.49, 0.93, 1.37, 1.81, 2.24, 2.68, 3.12, 3.56, 4.00];

    pub fn new(d_x: usize, bandwidths: &[f64], bounds: &[(f64, f64)], seed: u64) -> Result<Self> {
        if bandwidths.is_empty() {
            return Err(Error::Parameter("empty bandwidth list".into()));
        }
        if let Some(bad) = bandwidths.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::Parameter(format!("bandwidth {bad} must be positive")));
        }
        if d_x == 0 || d_x % bandwidths.len() != 0 {
            return Err(Error::Parameter(format!(
                "d_x = {d_x} is not a positive multiple of {} bandwidths",
                bandwidths.len()
            )));
        }
        if bounds.is_empty() || bounds.iter().any(|(lo, hi)| !(hi > lo)) {
            return Err(Error::Parameter(format!("degenerate state bounds {bounds:?}")));
        }
        let per_block = d_x / bandwidths.len();
        let n = bounds.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut omega = Vec::with_capacity(d_x);
        let mut offset = Vec::with_capacity(d_x);
        for &sigma in bandwidths {
            let normal = Normal::new(0.0, 1.0 / sigma).expect("positive std");
            for _ in 0..per_block {
                omega.push((0..n).map(|_| normal.sample(&mut rng)).collect());
                offset.push(rng.gen_range(0.0..2.0 * PI));
            }
        }
        Ok(Self {
            omega,
            offset,
            bounds: bounds.to_vec(),
            bandwidths: bandwidths.to_vec(),
            scale: (2.0 / d_x as f64).sqrt(),
        })
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn features_per_bandwidth(&self) -> usize {
        self.omega.len() / self.bandwidths.len()
    }

    pub fn frequencies(&self) -> &[Vec<f64>] {
        &self.omega
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offset
    }

    /// State rescaled to the unit box.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.bounds)
            .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
            .collect()
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let xt = self.normalize(x);
        for ((o, w), b) in out.iter_mut().zip(&self.omega).zip(&self.offset) {
            let arg: f64 = w.iter().zip(&xt).map(|(a, c)| a * c).sum::<f64>() + b;
            *o = self.scale * arg.cos();
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(x, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_list_splits_into_blocks_of_25() {
        let rff = RandomFourierFeatures::new(
            250,
            &RandomFourierFeatures::DEFAULT_BANDWIDTHS,
            &[(-1.2, 0.6), (-0.07, 0.07)],
            0,
        )
        .unwrap();
        assert_eq!(rff.len(), 250);
        assert_eq!(rff.features_per_bandwidth(), 25);
    }

    #[test]
    fn same_seed_same_features() {
        let b = [(-1.0, 1.0), (0.0, 2.0)];
        let a = RandomFourierFeatures::new(40, &[0.5, 1.0], &b, 17).unwrap();
        let c = RandomFourierFeatures::new(40, &[0.5, 1.0], &b, 17).unwrap();
        assert_eq!(a, c);
        assert_eq!(a.eval(&[0.3, 1.1]), c.eval(&[0.3, 1.1]));
        let other = RandomFourierFeatures::new(40, &[0.5, 1.0], &b, 18).unwrap();
        assert_ne!(a.eval(&[0.3, 1.1]), other.eval(&[0.3, 1.1]));
    }

    #[test]
    fn parameter_errors() {
        let b = [(0.0, 1.0)];
        assert!(RandomFourierFeatures::new(10, &[0.0], &b, 0).is_err());
        assert!(RandomFourierFeatures::new(10, &[-1.0, 1.0], &b, 0).is_err());
        assert!(RandomFourierFeatures::new(10, &[1.0, 2.0, 3.0], &b, 0).is_err());
        assert!(RandomFourierFeatures::new(10, &[1.0], &[(1.0, 1.0)], 0).is_err());
    }

    #[test]
    fn monte_carlo_kernel_matches_gaussian() {
        let sigma = 0.3;
        let b = [(0.0, 1.0), (0.0, 1.0)];
        let rff = RandomFourierFeatures::new(2000, &[sigma], &b, 2024).unwrap();
        let pts = [[0.1, 0.2], [0.15, 0.25], [0.4, 0.1], [0.9, 0.9], [0.5, 0.5]];
        for x in &pts {
            for y in &pts {
                let kx = rff.eval(x);
                let ky = rff.eval(y);
                let approx: f64 = kx.iter().zip(&ky).map(|(a, b)| a * b).sum();
                let d2 = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
                let exact = (-d2 / (2.0 * sigma * sigma)).exp();
                assert!((approx - exact).abs() < 0.1, "{x:?} {y:?}: {approx} vs {exact}");
            }
        }
    }
}
