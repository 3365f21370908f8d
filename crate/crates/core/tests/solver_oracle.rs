use cvxq::solver::{recession_probe, solve, verify_kkt, Method, Recession, SolveStatus, SolverOptions, StandardForm};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Feasible, bounded LP: `b > 0` keeps the origin feasible and
/// `q = -A^T l` with `l >= 0` makes the dual feasible.
fn random_lp(rng: &mut impl Rng) -> StandardForm {
    let d = rng.gen_range(1..=4);
    let m = rng.gen_range(d..=8);
    let a = DMatrix::from_fn(m, d, |_, _| rng.gen_range(-1.0..1.0));
    let b = DVector::from_fn(m, |_, _| rng.gen_range(0.1..2.0));
    let l = DVector::from_fn(m, |_, _| if rng.gen_bool(0.6) { rng.gen_range(0.0..1.0) } else { 0.0 });
    let q = -a.tr_mul(&l);
    StandardForm::lp(q, a, b).unwrap()
}

fn subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if m < k {
        return vec![];
    }
    let mut out = subsets(m - 1, k);
    for mut s in subsets(m - 1, k - 1) {
        s.push(m - 1);
        out.push(s);
    }
    out
}

/// Minimum objective over basic feasible solutions.
fn vertex_oracle(sf: &StandardForm) -> Option<f64> {
    let d = sf.num_vars();
    let mut best: Option<f64> = None;
    for rows in subsets(sf.num_ineq(), d) {
        let sub = DMatrix::from_fn(d, d, |i, j| sf.a[(rows[i], j)]);
        let rhs = DVector::from_fn(d, |i, _| sf.b[rows[i]]);
        let lu = sub.lu();
        if lu.determinant().abs() < 1e-9 {
            continue;
        }
        let x = lu.solve(&rhs).unwrap();
        let feasible = (&sf.a * &x - &sf.b).iter().all(|&v| v <= 1e-9);
        if feasible {
            let f = sf.q.dot(&x);
            best = Some(best.map_or(f, |b: f64| b.min(f)));
        }
    }
    best
}

#[test]
fn random_lps_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let opts = SolverOptions::default();
    let mut checked = 0;
    while checked < 50 {
        let sf = random_lp(&mut rng);
        let Some(oracle) = vertex_oracle(&sf) else { continue };
        let res = solve(&sf, &opts);
        assert_eq!(res.status, SolveStatus::Optimal, "{}", sf.to_text());
        assert!((res.objective - oracle).abs() <= 1e-8, "{} vs {oracle}", res.objective);
        // Strong duality with the returned multipliers.
        let dual = -sf.b.dot(&DVector::from_column_slice(&res.ineq_multipliers));
        assert!((dual - res.objective).abs() <= 1e-8 * (1.0 + res.objective.abs()));
        assert!(verify_kkt(&sf, &res, 1e-9).passed);
        checked += 1;
    }
}

#[test]
fn solves_are_bit_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..20 {
        let sf = random_lp(&mut rng);
        let a = solve(&sf, &SolverOptions::default());
        let b = solve(&sf, &SolverOptions::default());
        assert_eq!(a, b);
        let ipm = SolverOptions {
            method: Method::InteriorPoint,
            ..SolverOptions::default()
        };
        assert_eq!(solve(&sf, &ipm), solve(&sf, &ipm));
    }
}

#[test]
fn unbounded_fixtures_carry_recession_certificates() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..30 {
        // Rows all have a nonpositive first coordinate, so e_0 recedes; the
        // objective pulls along it.
        let d = rng.gen_range(1..=4);
        let m = rng.gen_range(1..=8);
        let a = DMatrix::from_fn(m, d, |_, j| if j == 0 { -rng.gen_range(0.5..1.0) } else { rng.gen_range(-1.0..1.0) });
        let b = DVector::from_fn(m, |_, _| rng.gen_range(0.0..1.0));
        let mut q = DVector::from_fn(d, |_, _| rng.gen_range(-0.1..0.1));
        q[0] = -5.0;
        let sf = StandardForm::lp(q.clone(), a.clone(), b).unwrap();
        match solve(&sf, &SolverOptions::default()).status {
            SolveStatus::Unbounded { direction } => {
                let v = DVector::from_vec(direction);
                assert!((&a * &v).iter().all(|&r| r <= 1e-12), "{:?}", &a * &v);
                assert!(q.dot(&v) < 0.0);
            }
            other => panic!("{other:?}"),
        }
    }
}

#[test]
fn probe_on_random_cones() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let d = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=6);
        let a = DMatrix::from_fn(m, d, |_, _| rng.gen_range(-1.0..1.0));
        if let Recession::Direction { direction, .. } = recession_probe(&a, &SolverOptions::default()).unwrap() {
            let v = DVector::from_vec(direction);
            assert!((&a * &v).iter().all(|&r| r <= 1e-10));
            assert!((v.amax() - 1.0).abs() < 1e-12);
        }
    }
    // An outward-pointing simplex cone has only the trivial solution.
    let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, -1.0]);
    assert_eq!(recession_probe(&a, &SolverOptions::default()).unwrap(), Recession::Bounded);
}

proptest! {
    #[test]
    fn weak_duality_on_random_lps(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sf = random_lp(&mut rng);
        let res = solve(&sf, &SolverOptions::default());
        prop_assert!(res.is_optimal());
        // Any feasible point scores at least the dual bound -b^T l.
        let l = DVector::from_column_slice(&res.ineq_multipliers);
        prop_assert!(l.iter().all(|&v| v >= 0.0));
        let dual = -sf.b.dot(&l);
        for _ in 0..20 {
            let x = DVector::from_fn(sf.num_vars(), |_, _| rng.gen_range(-1.0..1.0));
            if (&sf.a * &x - &sf.b).iter().all(|&v| v <= 0.0) {
                prop_assert!(sf.q.dot(&x) >= dual - 1e-9);
            }
        }
        prop_assert!(res.objective >= dual - 1e-8 * (1.0 + dual.abs()));
    }

    #[test]
    fn interior_point_agrees_on_random_qps(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = random_lp(&mut rng);
        let d = lp.num_vars();
        let r = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
        let p = r.tr_mul(&r) + DMatrix::identity(d, d) * 0.1;
        let sf = StandardForm::new(p, lp.q.clone(), lp.a.clone(), lp.b.clone(), DMatrix::zeros(0, d), DVector::zeros(0)).unwrap();
        let res = solve(&sf, &SolverOptions::default());
        prop_assert!(res.is_optimal(), "{:?}", res.diagnostics);
        prop_assert!(verify_kkt(&sf, &res, 1e-6).passed);
        // Optimality against random feasible perturbations.
        for _ in 0..20 {
            let dx = DVector::from_fn(d, |_, _| rng.gen_range(-0.1..0.1));
            let y = DVector::from_column_slice(&res.x) + dx;
            if (&sf.a * &y - &sf.b).iter().all(|&v| v <= 0.0) {
                prop_assert!(sf.objective(y.as_slice()) >= res.objective - 1e-7);
            }
        }
    }
}
