mod common;

use common::*;
use lorank::linalg::{DenseSym, Mat, Vector};
use lorank::pcg::{pcg_solve, CgTolerance, FnOp, Identity, LinOp, PcgStatus};
use proptest::prelude::*;

struct Dense(Mat);

impl LinOp for Dense {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn apply(&self, x: &Vector) -> Vector {
        &self.0 * x
    }
}

#[test]
fn identity_converges_in_one_step() {
    let rhs = random_vec(9, &mut rng(5));
    let (x, rep) = pcg_solve(&Identity(9), &Identity(9), &rhs, &Vector::zeros(9), 1e-12, 100);
    assert_eq!(rep.iterations, 1);
    assert!((x - rhs).norm() <= 1e-14);
}

#[test]
fn distinct_eigenvalues_terminate() {
    let a = Dense(Mat::from_diagonal(&Vector::from_iterator(10, (1..=10).map(f64::from))));
    let (_, rep) = pcg_solve(&a, &Identity(10), &Vector::from_element(10, 1.0), &Vector::zeros(10), 1e-10, 100);
    assert_eq!(rep.status, PcgStatus::Converged);
    assert!(rep.iterations <= 10);
}

#[test]
fn exact_inverse_preconditioner_converges_in_one_step() {
    let mut r = rng(6);
    let a = random_spd(15, &mut r).into_mat();
    let inv = a.clone().try_inverse().unwrap();
    let (_, rep) = pcg_solve(&Dense(a), &Dense(inv), &random_vec(15, &mut r), &Vector::zeros(15), 1e-10, 100);
    assert_eq!(rep.iterations, 1);
}

#[test]
fn matches_direct_solve_20x20() {
    let mut r = rng(7);
    let a = random_spd(20, &mut r).into_mat();
    let rhs = random_vec(20, &mut r);
    let tol = 1e-10;
    let (x, rep) = pcg_solve(&Dense(a.clone()), &Identity(20), &rhs, &Vector::zeros(20), tol, 1000);
    assert_eq!(rep.status, PcgStatus::Converged);
    let direct = a.lu().solve(&rhs).unwrap();
    assert!(rel_err_vec(&x, &direct) <= tol * 10.0 * 10.0, "κ(A) ≤ 6 keeps the error within 10·tol·κ");
}

#[test]
fn indefinite_operator_breaks_down() {
    let a = Dense(Mat::from_diagonal(&Vector::from_vec(vec![1.0, -1.0])));
    let (_, rep) = pcg_solve(&a, &Identity(2), &Vector::from_vec(vec![1.0, 1.0]), &Vector::zeros(2), 1e-12, 10);
    assert_eq!(rep.status, PcgStatus::Breakdown);
    assert!(rep.check().is_err());
}

#[test]
fn maxiter_is_reported() {
    let a = Dense(Mat::from_diagonal(&Vector::from_iterator(30, (1..=30).map(|i| f64::from(i).powi(3)))));
    let (_, rep) = pcg_solve(&a, &Identity(30), &Vector::from_element(30, 1.0), &Vector::zeros(30), 1e-14, 3);
    assert_eq!((rep.status, rep.iterations), (PcgStatus::MaxIter, 3));
}

#[test]
fn closure_operators() {
    let op = FnOp::new(3, |x: &Vector| x * 4.0);
    let (x, _) = pcg_solve(&op, &Identity(3), &Vector::from_element(3, 8.0), &Vector::zeros(3), 1e-12, 10);
    assert!((x - Vector::from_element(3, 2.0)).norm() <= 1e-14);
}

#[test]
fn tolerance_schedule() {
    let t = CgTolerance::default();
    assert_eq!(t.current, 0.01);
    assert_eq!(t.next_tolerance().current, 0.005);
    let near = CgTolerance { current: 1.5e-6, ..t };
    assert_eq!(near.next_tolerance().current, 1e-6);
    let floor = CgTolerance { current: 1e-6, ..t };
    assert_eq!(floor.next_tolerance().current, 1e-6);
    let mut s = t;
    for _ in 0..100 {
        s = s.next_tolerance();
        assert!((1e-6..=0.01).contains(&s.current));
    }
}

/// Relative A-norm errors `‖x_i − x*‖_A / ‖x*‖_A` of the first `imax` CG iterates from `x0 = 0`.
fn a_norm_errors(a: &Mat, rhs: &Vector, imax: usize) -> Vec<f64> {
    let exact = a.clone().cholesky().unwrap().solve(rhs);
    let a_norm = |v: &Vector| v.dot(&(a * v)).sqrt();
    let e0 = a_norm(&exact);
    (1..=imax)
        .map(|i| {
            let (x, _) = pcg_solve(&Dense(a.clone()), &Identity(a.nrows()), rhs, &Vector::zeros(a.nrows()), 0.0, i);
            a_norm(&(x - &exact)) / e0
        })
        .collect()
}

/// A-norm errors of the Galerkin solutions over `K_i(A, b)` for `i = 1..=imax`,
/// from a twice-orthogonalized Krylov basis: exact-arithmetic CG.
fn krylov_optimal_errors(a: &Mat, rhs: &Vector, imax: usize) -> Vec<f64> {
    let exact = a.clone().cholesky().unwrap().solve(rhs);
    let a_norm = |v: &Vector| v.dot(&(a * v)).sqrt();
    let e0 = a_norm(&exact);
    let mut basis = vec![rhs.normalize()];
    let mut out = Vec::with_capacity(imax);
    for i in 1..=imax {
        let q = Mat::from_columns(&basis);
        let coef = (q.transpose() * a * &q).cholesky().unwrap().solve(&(q.transpose() * rhs));
        out.push(a_norm(&(&q * coef - &exact)) / e0);
        let mut w = a * &basis[i - 1];
        for _ in 0..2 {
            for qj in &basis {
                let d = qj.dot(&w);
                w.axpy(-d, qj, 1.0);
            }
        }
        basis.push(w.normalize());
    }
    out
}

/// `n = 50`: cluster spread over `[1, 2]`, so `κ_{n−k} = 2`, plus `k` outliers `scale·(j+1)`.
fn outlier_matrix(k: usize, scale: f64, seed: u64) -> Mat {
    let n = 50;
    let cluster = n - k;
    let mut eigs: Vec<f64> = (0..cluster).map(|i| 1.0 + i as f64 / (cluster - 1) as f64).collect();
    eigs.extend((0..k).map(|j| scale * (j + 1) as f64));
    planted(&eigs, &mut rng(seed)).into_mat()
}

/// First `(i, err, bound)` with `err > 2ρ^{i−k}`, `ρ = (√2−1)/(√2+1)`, checked while the bound exceeds `1e-11`.
fn bound_violation(errs: &[f64], k: usize) -> Option<(usize, f64, f64)> {
    let rate = (2f64.sqrt() - 1.0) / (2f64.sqrt() + 1.0);
    errs.iter()
        .enumerate()
        .map(|(idx, &err)| (idx + 1, err))
        .filter(|&(i, _)| i > k)
        .map(|(i, err)| (i, err, 2.0 * rate.powi((i - k) as i32)))
        .take_while(|&(_, _, bound)| bound >= 1e-11)
        .find(|&(_, err, bound)| err > bound)
}

/// Before rounding matters, floating-point CG reproduces the Galerkin iterates.
#[test]
fn early_iterates_match_galerkin() {
    for k in [1, 2, 5] {
        let a = outlier_matrix(k, 1e3, 3);
        let rhs = random_vec(50, &mut rng(3 ^ 0x5eed));
        let fp = a_norm_errors(&a, &rhs, k + 3);
        let exact = krylov_optimal_errors(&a, &rhs, k + 3);
        for (i, (f, e)) in fp.iter().zip(&exact).enumerate() {
            assert!((f - e).abs() <= 1e-6 * e.max(1e-3), "k = {k}, i = {}: {f:.6e} vs {e:.6e}", i + 1);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn outlier_bound_exact_arithmetic(k in prop::sample::select(vec![1usize, 2, 5]), seed in any::<u64>()) {
        let a = outlier_matrix(k, 1e3, seed);
        let rhs = random_vec(50, &mut rng(seed ^ 0x5eed));
        prop_assert_eq!(bound_violation(&krylov_optimal_errors(&a, &rhs, 25), k), None);
    }

    #[test]
    fn symmetric_operator_probe(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = DenseSym::new(random_mat(12, 12, &mut r));
        let (x, y) = (random_vec(12, &mut r), random_vec(12, &mut r));
        let op = Dense(a.into_mat());
        prop_assert!((op.apply(&x).dot(&y) - x.dot(&op.apply(&y))).abs() <= 1e-10 * op.apply(&x).norm() * y.norm());
    }
}

