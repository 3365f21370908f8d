//! Dense two-phase tableau simplex with Bland's rule on
//! `min c^T w  s.t.  M w = r, w >= 0`.

use nalgebra::{DMatrix, DVector};

/// Outcome of a standard-form solve.
#[derive(Debug, Clone, PartialEq)]
pub enum StdOutcome {
    /// Optimal basic solution `w` and row multipliers `y` with
    /// `M^T y <= c` and `r^T y = c^T w`.
    Optimal { w: Vec<f64>, y: Vec<f64>, iterations: usize },
    /// No `w >= 0` solves `M w = r`; `y` satisfies `M^T y <= 0`, `r^T y > 0`.
    Infeasible { y: Vec<f64>, iterations: usize },
    /// Objective unbounded below along the ray `w >= 0`, `M w = 0`, `c^T w < 0`.
    Unbounded { ray: Vec<f64>, iterations: usize },
    /// Pivot budget exhausted or the final basis is singular.
    Failed { reason: String, iterations: usize },
}

struct Tableau {
    n_rows: usize,
    /// Original columns followed by one artificial per row.
    n_cols: usize,
    n_orig: usize,
    /// Row-major `n_rows x (n_cols + 1)`; the last column is the right-hand side.
    t: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn width(&self) -> usize {
        self.n_cols + 1
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width() + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.n_cols)
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.width();
        let p = self.t[row * w + col];
        for v in &mut self.t[row * w..(row + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.t[row * w..(row + 1) * w].to_vec();
        for i in 0..self.n_rows {
            if i == row {
                continue;
            }
            let f = self.t[i * w + col];
            if f != 0.0 {
                for (v, pv) in self.t[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                self.t[i * w + col] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for (i, &bi) in self.basis.iter().enumerate() {
            let cb = cost[bi];
            if cb != 0.0 {
                for (j, dj) in d.iter_mut().enumerate() {
                    *dj -= cb * self.at(i, j);
                }
            }
        }
        d
    }

    /// Bland pivots until optimal; `Err(col)` reports an unbounded column.
    fn run(&mut self, cost: &[f64], allowed: usize, eps: f64, budget: &mut usize) -> Result<(), Option<usize>> {
        loop {
            let d = self.reduced_costs(cost);
            let Some(col) = (0..allowed).find(|&j| d[j] < -eps && !self.basis.contains(&j)) else {
                return Ok(());
            };
            let mut best: Option<(f64, usize, usize)> = None;
            for i in 0..self.n_rows {
                let a = self.at(i, col);
                if a > eps {
                    let ratio = self.rhs(i).max(0.0) / a;
                    let better = match best {
                        None => true,
                        Some((r, _, b)) => {
                            let tie = (ratio - r).abs() <= 1e-12 * (1.0 + r.abs());
                            ratio < r && !tie || tie && self.basis[i] < b
                        }
                    };
                    if better {
                        best = Some((ratio, i, self.basis[i]));
                    }
                }
            }
            let Some((_, row, _)) = best else {
                return Err(Some(col));
            };
            if *budget == 0 {
                return Err(None);
            }
            *budget -= 1;
            self.pivot(row, col);
        }
    }

    fn basis_matrix(&self, m: &DMatrix<f64>, sign: &[f64]) -> DMatrix<f64> {
        let n = self.n_rows;
        DMatrix::from_fn(n, n, |i, k| {
            let j = self.basis[k];
            if j < self.n_orig {
                sign[i] * m[(i, j)]
            } else if j - self.n_orig == i {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// Solve `min c^T w  s.t.  M w = r, w >= 0`. Redundant rows are allowed;
/// their multipliers are reported as zero.
pub fn solve_standard(m: &DMatrix<f64>, r: &[f64], c: &[f64], eps: f64, max_pivots: usize) -> StdOutcome {
    let (n, n_orig) = m.shape();
    let sign: Vec<f64> = r.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
    let n_cols = n_orig + n;
    let width = n_cols + 1;
    let mut t = vec![0.0; n * width];
    for i in 0..n {
        for j in 0..n_orig {
            t[i * width + j] = sign[i] * m[(i, j)];
        }
        t[i * width + n_orig + i] = 1.0;
        t[i * width + n_cols] = sign[i] * r[i];
    }
    let mut tab = Tableau {
        n_rows: n,
        n_cols,
        n_orig,
        t,
        basis: (n_orig..n_cols).collect(),
    };
    let mut budget = max_pivots;
    let scale = 1.0 + r.iter().fold(0.0f64, |a, v| a.max(v.abs()));

    // Phase 1.
    let mut cost1 = vec![0.0; n_cols];
    cost1[n_orig..].fill(1.0);
    if tab.run(&cost1, n_orig, eps, &mut budget).is_err() {
        return failed(max_pivots - budget, "phase 1 did not terminate");
    }
    let infeasibility: f64 = (0..n).filter(|&i| tab.basis[i] >= n_orig).map(|i| tab.rhs(i)).sum();
    if infeasibility > eps * scale {
        return match basis_multipliers(&tab, m, &sign, &cost1) {
            Some(y) => StdOutcome::Infeasible {
                y,
                iterations: max_pivots - budget,
            },
            None => failed(max_pivots - budget, "singular phase 1 basis"),
        };
    }

    // Drive zero-level artificials out of the basis where possible.
    for i in 0..n {
        if tab.basis[i] >= n_orig {
            let col = (0..n_orig).find(|&j| tab.at(i, j).abs() > eps && !tab.basis.contains(&j));
            if let Some(j) = col {
                tab.pivot(i, j);
            }
        }
    }

    // Phase 2.
    let mut cost2 = c.to_vec();
    cost2.resize(n_cols, 0.0);
    match tab.run(&cost2, n_orig, eps, &mut budget) {
        Ok(()) => {}
        Err(Some(col)) => {
            let mut ray = vec![0.0; n_orig];
            ray[col] = 1.0;
            for i in 0..n {
                if tab.basis[i] < n_orig {
                    ray[tab.basis[i]] = -tab.at(i, col);
                }
            }
            return StdOutcome::Unbounded {
                ray,
                iterations: max_pivots - budget,
            };
        }
        Err(None) => return failed(max_pivots - budget, "pivot budget exhausted"),
    }
    let iterations = max_pivots - budget;
    let bmat = tab.basis_matrix(m, &sign);
    let Some(lu) = Some(bmat.lu()).filter(|lu| lu.is_invertible()) else {
        return failed(iterations, "singular final basis");
    };
    let rhs = DVector::from_iterator(n, (0..n).map(|i| sign[i] * r[i]));
    let wb = lu.solve(&rhs).expect("invertible");
    let mut w = vec![0.0; n_orig];
    for (k, &j) in tab.basis.iter().enumerate() {
        if j < n_orig {
            w[j] = wb[k].max(0.0);
        }
    }
    match basis_multipliers(&tab, m, &sign, &cost2) {
        Some(y) => StdOutcome::Optimal { w, y, iterations },
        None => failed(iterations, "singular final basis"),
    }
}

/// `y = sign * B^{-T} c_B`, with zero multipliers on rows whose artificial
/// stays basic at zero cost.
fn basis_multipliers(tab: &Tableau, m: &DMatrix<f64>, sign: &[f64], cost: &[f64]) -> Option<Vec<f64>> {
    let n = tab.n_rows;
    let bmat = tab.basis_matrix(m, sign);
    let cb = DVector::from_iterator(n, tab.basis.iter().map(|&j| cost[j]));
    let y = bmat.transpose().lu().solve(&cb)?;
    Some((0..n).map(|i| sign[i] * y[i]).collect())
}

fn failed(iterations: usize, reason: &str) -> StdOutcome {
    StdOutcome::Failed {
        reason: reason.into(),
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_standard_form() {
        // min -w0 - w1 s.t. w0 + w1 + w2 = 1.
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        match solve_standard(&m, &[1.0], &[-1.0, -1.0, 0.0], 1e-10, 100) {
            StdOutcome::Optimal { w, y, .. } => {
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!((y[0] + 1.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn infeasible_standard_form() {
        // w0 = -1 has no nonnegative solution.
        let m = DMatrix::from_row_slice(1, 1, &[1.0]);
        match solve_standard(&m, &[-1.0], &[0.0], 1e-10, 100) {
            StdOutcome::Infeasible { y, .. } => {
                assert!(y[0] * 1.0 <= 0.0 && -y[0] > 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unbounded_standard_form() {
        // min -w0 s.t. w0 - w1 = 0.
        let m = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        match solve_standard(&m, &[0.0], &[-1.0, 0.0], 1e-10, 100) {
            StdOutcome::Unbounded { ray, .. } => {
                assert!(ray[0] > 0.0 && (ray[0] - ray[1]).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn redundant_rows_are_tolerated() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        match solve_standard(&m, &[1.0, 2.0], &[1.0, 2.0], 1e-10, 100) {
            StdOutcome::Optimal { w, .. } => assert_eq!(w, vec![1.0, 0.0]),
            other => panic!("{other:?}"),
        }
    }
}
