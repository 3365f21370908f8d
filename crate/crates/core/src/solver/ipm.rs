//! Mehrotra predictor-corrector interior point method for
//! `min 1/2 x^T P x + q^T x  s.t.  A x <= b, G x = h`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{SolveStatus, SolverOptions, StandardForm};

#[derive(Debug, Clone)]
pub struct IpmOutput {
    pub status: SolveStatus,
    pub x: DVector<f64>,
    pub lambda: DVector<f64>,
    pub nu: DVector<f64>,
    pub iterations: usize,
    pub diagnostics: Option<String>,
}

struct Newton {
    chol: Cholesky<f64, Dyn>,
    /// Cholesky of `G H^{-1} G^T`, when equalities are present.
    schur: Option<(Cholesky<f64, Dyn>, DMatrix<f64>)>,
}

fn factor(h: DMatrix<f64>, base: f64) -> Option<Cholesky<f64, Dyn>> {
    let n = h.nrows();
    let mut delta = base;
    for _ in 0..12 {
        let mut m = h.clone();
        for i in 0..n {
            m[(i, i)] += delta;
        }
        if let Some(c) = m.cholesky() {
            return Some(c);
        }
        delta = if delta == 0.0 { 1e-12 } else { delta * 100.0 };
    }
    None
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&x, &d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}

pub fn solve(sf: &StandardForm, opts: &SolverOptions, x0: Option<&[f64]>) -> IpmOutput {
    let n = sf.num_vars();
    let m = sf.num_ineq();
    let me = sf.num_eq();
    let (a, b, g, h, p, q) = (&sf.a, &sf.b, &sf.g, &sf.h, &sf.p, &sf.q);

    let mut x = match x0 {
        Some(v) => DVector::from_column_slice(v),
        None => DVector::zeros(n),
    };
    let mut s = (b - a * &x).map(|v| v.max(1.0));
    let mut lam = DVector::from_element(m, 1.0);
    let mut nu = DVector::zeros(me);

    let bn = 1.0 + b.amax().max(h.amax());
    let qn = 1.0 + q.amax();
    let mut diagnostics = None;

    for it in 0..opts.max_iterations {
        let r_d = p * &x + q + a.tr_mul(&lam) + g.tr_mul(&nu);
        let r_p = a * &x + &s - b;
        let r_e = g * &x - h;
        let mu = if m > 0 { s.dot(&lam) / m as f64 } else { 0.0 };
        let obj = 0.5 * x.dot(&(p * &x)) + q.dot(&x);
        let done = r_p.amax() <= opts.feasibility_tol * bn
            && r_e.amax() <= opts.feasibility_tol * bn
            && r_d.amax() <= opts.feasibility_tol * qn
            && mu <= opts.complementarity_tol * (1.0 + obj.abs());
        if done {
            return IpmOutput {
                status: SolveStatus::Optimal,
                x,
                lambda: lam,
                nu,
                iterations: it,
                diagnostics: None,
            };
        }
        if !x.iter().chain(lam.iter()).all(|v| v.is_finite()) || lam.amax() > 1e14 || x.amax() > 1e14 {
            diagnostics = Some(format!("iterates diverged at iteration {it}"));
            break;
        }

        // Normal matrix H = P + A^T W A with W = lambda / s.
        let w = lam.component_div(&s);
        let mut aw = a.clone();
        for (i, mut row) in aw.row_iter_mut().enumerate() {
            row *= w[i].sqrt();
        }
        let mut hm = p.clone();
        hm.gemm_tr(1.0, &aw, &aw, 1.0);
        let Some(chol) = factor(hm, 1e-12 * (1.0 + p.amax())) else {
            diagnostics = Some(format!("normal matrix not factorizable at iteration {it}"));
            break;
        };
        let schur = if me > 0 {
            let hinv_gt = chol.solve(&g.transpose());
            let sm = g * &hinv_gt;
            match factor(sm, 1e-14) {
                Some(c) => Some((c, hinv_gt)),
                None => {
                    diagnostics = Some(format!("equality Schur complement singular at iteration {it}"));
                    break;
                }
            }
        } else {
            None
        };
        let newton = Newton { chol, schur };

        let direction = |r_c: &DVector<f64>| {
            let t = w.component_mul(&r_p) - r_c.component_div(&s);
            let f = -&r_d - a.tr_mul(&t);
            let hinv_f = newton.chol.solve(&f);
            let (dx, dnu) = match &newton.schur {
                Some((sc, hinv_gt)) => {
                    let dnu = sc.solve(&(g * &hinv_f + &r_e));
                    (&hinv_f - hinv_gt * &dnu, dnu)
                }
                None => (hinv_f, DVector::zeros(0)),
            };
            let adx = a * &dx;
            let dlam = w.component_mul(&(&adx + &r_p)) - r_c.component_div(&s);
            let ds = -&r_p - adx;
            (dx, ds, dlam, dnu)
        };

        let r_aff = s.component_mul(&lam);
        let (_, ds_a, dl_a, _) = direction(&r_aff);
        let alpha_aff = max_step(&s, &ds_a).min(max_step(&lam, &dl_a)).min(1.0);
        let sigma = if m > 0 {
            let mu_aff = (&s + alpha_aff * &ds_a).dot(&(&lam + alpha_aff * &dl_a)) / m as f64;
            (mu_aff / mu).powi(3).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let r_c = &r_aff + ds_a.component_mul(&dl_a) - DVector::from_element(m, sigma * mu);
        let (dx, ds, dlam, dnu) = direction(&r_c);
        let alpha = (0.99 * max_step(&s, &ds).min(max_step(&lam, &dlam))).min(1.0);
        x += alpha * dx;
        s += alpha * ds;
        lam += alpha * dlam;
        nu += alpha * dnu;
        for v in s.iter_mut().chain(lam.iter_mut()) {
            *v = v.max(1e-300);
        }
    }
    IpmOutput {
        status: SolveStatus::NumericalFailure,
        x,
        lambda: lam,
        nu,
        iterations: opts.max_iterations,
        diagnostics: Some(diagnostics.unwrap_or_else(|| "iteration limit reached".into())),
    }
}
