//! The dual active-set QP against exhaustive active-set enumeration.

use duet_core::qp::{kkt_residuals, solve_qp, QpOptions, QpProblem, QpStatus};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every inequality as `(normal, bound)` with `normal . x >= bound`.
fn all_constraints(p: &QpProblem) -> Vec<(DVector<f64>, f64)> {
    let n = p.dim();
    let mut out = Vec::new();
    for i in 0..p.lower.len() {
        out.push((p.a.row(i).transpose(), p.lower[i]));
    }
    for k in 0..n {
        if p.box_lower[k].is_finite() {
            out.push((DVector::from_fn(n, |j, _| if j == k { 1.0 } else { 0.0 }), p.box_lower[k]));
        }
        if p.box_upper[k].is_finite() {
            out.push((DVector::from_fn(n, |j, _| if j == k { -1.0 } else { 0.0 }), -p.box_upper[k]));
        }
    }
    out
}

fn subsets(m: usize, max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for i in 0..m {
        let grown: Vec<Vec<usize>> = out
            .iter()
            .filter(|s| s.len() < max)
            .map(|s| {
                let mut t = s.clone();
                t.push(i);
                t
            })
            .collect();
        out.extend(grown);
    }
    out
}

/// Minimizer by trying every active set: solve the equality KKT system and
/// keep primal- and dual-feasible candidates.
fn brute_force(p: &QpProblem) -> Option<DVector<f64>> {
    let n = p.dim();
    let cons = all_constraints(p);
    let mut best: Option<(f64, DVector<f64>)> = None;
    for set in subsets(cons.len(), n) {
        let k = set.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
        for k_ in 0..n {
            rhs[k_] = -p.g[k_];
        }
        for (r, &c) in set.iter().enumerate() {
            for j in 0..n {
                kkt[(j, n + r)] = -cons[c].0[j];
                kkt[(n + r, j)] = cons[c].0[j];
            }
            rhs[n + r] = cons[c].1;
        }
        let Some(sol) = kkt.clone().lu().solve(&rhs) else {
            continue;
        };
        if (&kkt * &sol - &rhs).amax() > 1e-9 {
            continue;
        }
        let x = sol.rows(0, n).into_owned();
        if (0..k).any(|r| sol[n + r] < -1e-9) || p.max_violation(&x) > 1e-9 {
            continue;
        }
        let f = p.objective(&x);
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, x));
        }
    }
    best.map(|b| b.1)
}

fn random_problem(rng: &mut ChaCha8Rng) -> QpProblem {
    let n = rng.gen_range(1..=5);
    let m = rng.gen_range(0..=4);
    let mut u = |lo: f64, hi: f64| rng.gen_range(lo..hi);
    let base = DMatrix::from_fn(n, n, |_, _| u(-1.0, 1.0));
    let h = base.tr_mul(&base) + DMatrix::identity(n, n) * u(0.05, 0.5);
    let g = DVector::from_fn(n, |_, _| u(-3.0, 3.0));
    let x0 = DVector::from_fn(n, |_, _| u(-1.0, 1.0));
    let a = DMatrix::from_fn(m, n, |_, _| u(-1.0, 1.0));
    let ax0 = &a * &x0;
    let lower = DVector::from_fn(m, |i, _| ax0[i] - u(0.0, 0.5));
    let box_lower = DVector::from_fn(n, |k, _| if u(0.0, 1.0) < 0.2 { f64::NEG_INFINITY } else { x0[k] - u(0.05, 1.0) });
    let box_upper = DVector::from_fn(n, |k, _| if u(0.0, 1.0) < 0.2 { f64::INFINITY } else { x0[k] + u(0.05, 1.0) });
    QpProblem {
        h,
        g,
        a,
        lower,
        box_lower,
        box_upper,
    }
}

#[test]
fn matches_exhaustive_active_sets_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let opts = QpOptions::default();
    for case in 0..1000 {
        let p = random_problem(&mut rng);
        let s = solve_qp(&p, &opts).unwrap();
        assert_eq!(s.status, QpStatus::Optimal, "case {case}");
        let kkt = kkt_residuals(&p, &s);
        assert!(kkt.max() <= 1e-6, "case {case}: {kkt:?}");
        let oracle = brute_force(&p).expect("feasible by construction");
        let err = (&s.x - &oracle).amax();
        assert!(err <= 1e-6, "case {case}: |x - oracle| = {err}");
    }
}

#[test]
fn infeasible_rows_are_reported() {
    let mut p = QpProblem::new(DMatrix::identity(2, 2), DVector::zeros(2));
    p.a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
    p.lower = DVector::from_vec(vec![1.0, 0.0]);
    let s = solve_qp(&p, &QpOptions::default()).unwrap();
    assert_eq!(s.status, QpStatus::Infeasible);
}

#[test]
fn redundant_and_equality_pairs() {
    // x0 + x1 >= 1 twice, and x0 - x1 == 0 written as two inequalities.
    let mut p = QpProblem::new(DMatrix::identity(2, 2), DVector::zeros(2));
    p.a = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1.0, 1.0]);
    p.lower = DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0]);
    let s = solve_qp(&p, &QpOptions::default()).unwrap();
    assert_eq!(s.status, QpStatus::Optimal);
    assert!((s.x[0] - 0.5).abs() < 1e-9 && (s.x[1] - 0.5).abs() < 1e-9);
    assert!(kkt_residuals(&p, &s).max() <= 1e-9);
}
