//! Acceptance criteria: one PASS/FAIL line per check at its stated tolerance.
//!
//! Exits nonzero when a check fails, unless it is listed in [`UNATTAINABLE`]
//! (those are reported and analysed in the README).

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::*;
use lorank::ip::{dense_schur, ip_solve, nt_scaling, schur_matvec, IpConfig, IpState};
use lorank::linalg::{DenseSym, Mat, Vector};
use lorank::model::SdpProblem;
use lorank::pcg::{pcg_solve, CgTolerance, Identity, LinOp};
use lorank::pdal::{aug_lagrangian_grad, aug_lagrangian_value, dense_hessian, hessian_matvec, pdal_solve, penalty_at, PdalConfig, PdalState};
use lorank::precond::{build_h_alpha, split_all, PrecondKind, RankHints, TauRule};
use lorank::report::{Solution, SolveStatus};
use lorank::truss::{standard_instance, verify_solution, volumes_from_y, Variant};
use rand::Rng;

/// Checks that fail for a documented reason.
const UNATTAINABLE: &[&str] = &["7f"];

struct Harness {
    failed: Vec<String>,
}

impl Harness {
    fn check(&mut self, id: &str, what: &str, pass: bool, detail: String) {
        println!("{} [{id}] {what}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(id.to_owned());
        }
    }
}

fn tru(g: usize, eps: bool) -> SdpProblem {
    standard_instance(Variant::Tru, g, eps).unwrap().2
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

fn high_accuracy() -> IpConfig {
    IpConfig { eps_dimacs: 1e-9, cg: CgTolerance { floor: 1e-12, ..Default::default() }, ..Default::default() }
}

fn run_ip(prob: &SdpProblem, cfg: &IpConfig) -> Solution {
    ip_solve(prob, cfg).expect("interior-point solve")
}

fn solved(sol: &Solution, eps: f64) -> bool {
    sol.report.status == SolveStatus::Converged && sol.report.dimacs.max() <= eps
}

// ---- 1. cross-solver agreement ----

fn cross_solver(h: &mut Harness) {
    let start = Instant::now();
    for (variant, g, eps) in [(Variant::Tru, 3, false), (Variant::Tru, 5, false), (Variant::Tru, 3, true), (Variant::Vib, 3, false)] {
        let name = lorank::truss::instance_name(variant, g, eps);
        let prob = standard_instance(variant, g, eps).unwrap().2;
        let ip = run_ip(&prob, &IpConfig::default());
        let cfg = if variant == Variant::Vib { PdalConfig::vib() } else { PdalConfig::tru() };
        let al = pdal_solve(&prob, &cfg).expect("augmented Lagrangian solve");
        let diff = rel_diff(ip.report.objective, al.report.objective);
        h.check(
            "1",
            &format!("{name}: objectives agree to 1e-4, both DIMACS <= 1e-5"),
            solved(&ip, 1e-5) && solved(&al, 1e-5) && diff <= 1e-4,
            format!(
                "ip {:.8} (DIMACS {:.1e}), pdal {:.8} (DIMACS {:.1e}), relative difference {diff:.1e}",
                ip.report.objective,
                ip.report.dimacs.max(),
                al.report.objective,
                al.report.dimacs.max()
            ),
        );
    }
    let secs = start.elapsed().as_secs_f64();
    h.check("1", "total runtime <= 60 s", secs <= 60.0, format!("{secs:.2} s"));
}

// ---- 2. rank-one dual structure ----

fn dual_structure(h: &mut Harness) {
    let sol = run_ip(&tru(3, true), &high_accuracy());
    let e = eigvals(sol.point.x.blocks[0].as_mat());
    let gap = e[e.len() - 1] / e[e.len() - 2];
    h.check("2", "tru3e: lambda_1/lambda_2 >= 1e6", solved(&sol, 1e-9) && gap >= 1e6, format!("{:.4e} / {:.4e} = {gap:.3e}", e[e.len() - 1], e[e.len() - 2]));

    let (gs, spec, prob) = standard_instance(Variant::Tru, 3, false).unwrap();
    let sol = run_ip(&prob, &high_accuracy());
    let e = eigvals(sol.point.x.blocks[0].as_mat());
    let ratio = e[e.len() - 2] / e[e.len() - 1];
    let ver = verify_solution(&gs, &spec, &volumes_from_y(&sol.point.y), Some(&sol.point.x.blocks[0])).unwrap();
    h.check(
        "2",
        "tru3: one dominant eigenvalue, trailing values >= 1e-3 of it",
        solved(&sol, 1e-9) && ver.outliers == Some(1) && ratio >= 1e-3,
        format!("outliers {:?}, lambda_2/lambda_1 = {ratio:.3e}", ver.outliers),
    );
}

// ---- 3. preconditioner payoff ----

fn preconditioner_payoff(h: &mut Harness) {
    let prob = tru(5, false);
    let hybrid = run_ip(&prob, &IpConfig::default());
    let none = run_ip(&prob, &IpConfig { precond: PrecondKind::None, ..Default::default() });
    let ratio = hybrid.report.cg_total as f64 / none.report.cg_total as f64;
    let detail = format!("hybrid {} vs none {} CG iterations, ratio {ratio:.3}", hybrid.report.cg_total, none.report.cg_total);
    let ok = solved(&hybrid, 1e-5) && solved(&none, 1e-5);
    h.check("3", "tru5: CG(hybrid)/CG(none) <= 0.5 (pass floor)", ok && ratio <= 0.5, detail.clone());
    h.check("3", "tru5: CG(hybrid)/CG(none) <= 0.2 (target)", ok && ratio <= 0.2, detail);
}

// ---- 4. iteration envelope ----

fn iteration_envelope(h: &mut Harness) {
    let prob = tru(3, false);
    let ip = run_ip(&prob, &IpConfig::default());
    h.check("4", "tru3 IP iterations <= 2 x 16", solved(&ip, 1e-5) && ip.report.iterations <= 32, format!("{} iterations", ip.report.iterations));
    let al = pdal_solve(&prob, &PdalConfig::tru()).unwrap();
    h.check("4", "tru3 PDAL iterations <= 2 x 35", solved(&al, 1e-5) && al.report.iterations <= 70, format!("{} Newton steps", al.report.iterations));
}

// ---- 5. condition number bound ----

fn condition_bound(h: &mut Harness) {
    let (gs, spec, prob) = standard_instance(Variant::Tru, 3, false).unwrap();
    // Rank of the split: the single load-path outlier plus two per vanished node.
    let probe = run_ip(&prob, &high_accuracy());
    let vanished = verify_solution(&gs, &spec, &volumes_from_y(&probe.point.y), None).unwrap().vanished_nodes;
    let k = 1 + 2 * vanished;
    let cfg = IpConfig { diagnostics: true, rank_hints: RankHints::uniform(k), ..Default::default() };
    let sol = run_ip(&prob, &cfg);
    let samples: Vec<(f64, f64)> = sol
        .report
        .trace
        .iter()
        .filter_map(|r| r.diagnostics.as_ref())
        .filter_map(|d| Some((d.kappa?, d.kappa_bound?)))
        .collect();
    let worst = samples.iter().map(|(k, b)| k / b).fold(0.0, f64::max);
    h.check(
        "5",
        &format!("tru3 (k = {k}): kappa <= (1 + sum eps_max)/(1 + sum eps_min) at >= 10 iterations"),
        samples.len() >= 10 && worst <= 1.0 + 1e-8,
        format!("{} sampled iterations, max kappa/bound = {worst:.6}", samples.len()),
    );
    let last: Vec<f64> = samples.iter().rev().take(5).map(|s| s.0).collect();
    let max_last = last.iter().copied().fold(0.0, f64::max);
    h.check("5", "tru3: kappa <= 1e3 at the final 5 iterations", last.len() == 5 && max_last <= 1e3, format!("max {max_last:.3e} over {} iterations", last.len()));
}

// ---- 6. oracle equivalence ----

fn oracle_equivalence(h: &mut Harness) {
    let mut worst = [0.0f64; 5];
    for seed in 0..50u64 {
        let mut r = rng(1000 + seed);
        let n = r.gen_range(4..=12);
        let prob = random_problem(n, &[3, 5], 4, &mut r);

        let state = IpState::new(&prob, random_interior_point(&prob, &mut r), 1).unwrap();
        let hd = kron_form(&prob, &state.w_blocks(), &state.w_blocks()) + lin_gram(&prob, &state.lin_scale);
        let dy = random_vec(n, &mut r);
        worst[0] = worst[0].max(rel_err_vec(&schur_matvec(&prob, &state, &dy), &(&hd * &dy)));

        let mut al = PdalState::initial(&prob, &PdalConfig::tru()).unwrap();
        al.x = prob.block_dims().iter().map(|&m| random_spd(m, &mut r)).collect();
        let y = random_vec(n, &mut r) * 0.01;
        let ev = penalty_at(&prob, &al, &y).unwrap();
        let hp = kron_form(&prob, &ev.x_bar, &ev.z) * 2.0 + lin_gram(&prob, &ev.w_lin) + Mat::identity(n, n) * al.r;
        worst[1] = worst[1].max(rel_err_vec(&hessian_matvec(&prob, &al, &ev, &dy), &(&hp * &dy)));

        let splits = split_all(&state.w_blocks(), &RankHints::uniform(2), TauRule::Loraine).unwrap();
        let pc = build_h_alpha(&prob, &splits, &prob.lin().weighted_gram_diag(&state.lin_scale)).unwrap();
        let inv = pc.to_dense().lu().try_inverse().unwrap();
        worst[2] = worst[2].max(rel_err_vec(&pc.apply_smw_inverse(&dy), &(&inv * &dy)));

        let m = r.gen_range(2..=8);
        let (x, s) = (random_spd(m, &mut r), random_spd(m, &mut r));
        let w = nt_scaling(&x, &s).unwrap().w;
        worst[3] = worst[3].max(rel_err(&(w.as_mat() * s.as_mat() * w.as_mat()), x.as_mat()));

        let g = aug_lagrangian_grad(&prob, &al, &y).unwrap();
        let dir = random_vec(n, &mut r).normalize();
        let fd = central_diff(|v| aug_lagrangian_value(&prob, &al, v).unwrap(), &y, &dir, 1e-5);
        worst[4] = worst[4].max((fd - g.dot(&dir)).abs() / g.dot(&dir).abs().max(g.norm()));
    }
    let rows = [
        ("schur_matvec matches the dense Kronecker assembly (1e-9)", 1e-9),
        ("hessian_matvec matches the dense Kronecker assembly (1e-9)", 1e-9),
        ("SMW inverse matches the dense inverse (1e-8)", 1e-8),
        ("NT scaling satisfies WSW = X (1e-9)", 1e-9),
        ("PDAL gradient matches central differences (1e-5)", 1e-5),
    ];
    for ((what, tol), err) in rows.iter().zip(worst) {
        h.check("6", &format!("50 random states: {what}"), err <= *tol, format!("max relative error {err:.2e}"));
    }
    // Matrix-free vs dense on a real instance too.
    let prob = tru(3, false);
    let state = IpState::new(&prob, run_ip(&prob, &IpConfig { max_iter: 6, ..Default::default() }).point, 6).unwrap();
    let hd = dense_schur(&prob, &state);
    let oracle = kron_form(&prob, &state.w_blocks(), &state.w_blocks()) + lin_gram(&prob, &state.lin_scale);
    let err = rel_err(&hd, &oracle);
    h.check("6", "tru3 iteration 6: dense Schur assembly matches the Kronecker oracle (1e-9)", err <= 1e-9, format!("{err:.2e}"));
    let al = PdalState::initial(&prob, &PdalConfig::tru()).unwrap();
    let ev = penalty_at(&prob, &al, &al.y_bar).unwrap();
    let hp = kron_form(&prob, &ev.x_bar, &ev.z) * 2.0 + lin_gram(&prob, &ev.w_lin) + Mat::identity(36, 36) * al.r;
    let err = rel_err(&dense_hessian(&prob, &al, &ev), &hp);
    h.check("6", "tru3 initial state: dense PDAL Hessian matches the Kronecker oracle (1e-9)", err <= 1e-9, format!("{err:.2e}"));
}

// ---- 7. spectral properties ----

fn sv_rank(m: &Mat) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.max();
    sv.iter().filter(|&&s| s > 1e-8 * top).count()
}

fn spectral_properties(h: &mut Harness) {
    let (mut ok52, mut ok53, mut ok54, mut ok55) = (0, 0, 0, 0);
    let trials = 50;
    for seed in 0..trials {
        let mut r = rng(2000 + seed);
        let m = r.gen_range(3..=8);
        let k = r.gen_range(1..m.min(4));
        let q = random_orthogonal(m, &mut r);
        let mk = |d: &[f64]| DenseSym::new(&q * Mat::from_diagonal(&Vector::from_column_slice(d)) * q.transpose());
        let pairs_ok = [1e-4, 1e-6, 1e-8].iter().all(|&t| {
            let xd: Vec<f64> = (0..m).map(|i| if i < k { 1.0 + i as f64 * 0.3 } else { t }).collect();
            let sd: Vec<f64> = (0..m).map(|i| if i < k { t } else { 1.0 + i as f64 * 0.2 }).collect();
            let w = nt_scaling(&mk(&xd), &mk(&sd)).unwrap().w;
            outliers_above_gap(&eigvals(w.as_mat()), 10.0) == k
        });
        ok52 += usize::from(pairs_ok);

        let x = random_psd_rank(m, k, &mut r).into_mat();
        ok53 += usize::from(sv_rank(&kron(&x, &x)) == k * k);

        let rows = r.gen_range(1..=10);
        let a = random_mat(rows, m, &mut r);
        ok54 += usize::from(sv_rank(&(&a * &x * a.transpose())) <= k);

        let n = m * (m + 1) / 2;
        let prob = random_problem(n, &[m], 0, &mut r);
        let kk = k.min(2);
        let mut eigs: Vec<f64> = (0..m - kk).map(|_| 1e-6 * (1.0 + r.gen_range(0.0..1.0))).collect();
        eigs.extend((0..kk).map(|_| r.gen_range(1.0..3.0)));
        let w = planted(&eigs, &mut r);
        let hk = kron_form(&prob, &[w.clone()], &[w]);
        ok55 += usize::from(outliers_above_gap(&eigvals(&hk), 100.0) <= kk * kk);
    }
    let t = trials as usize;
    h.check("7a", "NT W of planted rank-k pairs has exactly k outliers as XS -> 0", ok52 == t, format!("{ok52}/{t} instances"));
    h.check("7b", "rank(X (x) X) = k^2 for rank-k X, m <= 8", ok53 == t, format!("{ok53}/{t} instances"));
    h.check("7c", "rank(A Y A^T) <= k for rank-k Y", ok54 == t, format!("{ok54}/{t} instances"));
    h.check("7d", "A^T (W (x) W) A has at most k^2 outliers for planted W", ok55 == t, format!("{ok55}/{t} instances"));

    // CG outlier bound: A-norm error <= 2 rho^(i-k), rho = (sqrt(2)-1)/(sqrt(2)+1) for kappa_{n-k} = 2.
    let (mut exact_ok, mut fp_ok, mut total) = (0, 0, 0);
    let mut first_fp = None;
    for k in [1usize, 2, 5] {
        for seed in 0..8u64 {
            let a = outlier_matrix(k, 1e3, seed);
            let rhs = random_vec(50, &mut rng(seed ^ 0x5eed));
            total += 1;
            exact_ok += usize::from(bound_violation(&krylov_optimal_errors(&a, &rhs, 25), k).is_none());
            match bound_violation(&cg_errors(&a, &rhs, 25), k) {
                None => fp_ok += 1,
                Some(v) => {
                    first_fp.get_or_insert((k, seed, v));
                }
            }
        }
    }
    h.check("7e", "CG bound on exact-arithmetic iterates, n = 50, k in {1,2,5}", exact_ok == total, format!("{exact_ok}/{total} spectra"));
    let detail = match first_fp {
        None => format!("{fp_ok}/{total} spectra"),
        Some((k, seed, (i, err, bound))) => {
            format!("{fp_ok}/{total} spectra; first violation k = {k}, seed {seed}, i = {i}: {err:.3e} > {bound:.3e}")
        }
    };
    h.check("7f", "CG bound on floating-point pcg_solve iterates, n = 50, k in {1,2,5}", fp_ok == total, detail);
}

/// `n = 50`: cluster spread over `[1, 2]` plus `k` outliers `scale·(j+1)`.
fn outlier_matrix(k: usize, scale: f64, seed: u64) -> Mat {
    let cluster = 50 - k;
    let mut eigs: Vec<f64> = (0..cluster).map(|i| 1.0 + i as f64 / (cluster - 1) as f64).collect();
    eigs.extend((0..k).map(|j| scale * (j + 1) as f64));
    planted(&eigs, &mut rng(seed)).into_mat()
}

struct Dense(Mat);

impl LinOp for Dense {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn apply(&self, x: &Vector) -> Vector {
        &self.0 * x
    }
}

fn relative_a_norm<'a>(a: &'a Mat, exact: &'a Vector) -> impl Fn(&Vector) -> f64 + 'a {
    let e0 = exact.dot(&(a * exact)).sqrt();
    move |x: &Vector| {
        let d = x - exact;
        d.dot(&(a * &d)).sqrt() / e0
    }
}

fn cg_errors(a: &Mat, rhs: &Vector, imax: usize) -> Vec<f64> {
    let exact = a.clone().cholesky().unwrap().solve(rhs);
    let err = relative_a_norm(a, &exact);
    (1..=imax)
        .map(|i| err(&pcg_solve(&Dense(a.clone()), &Identity(a.nrows()), rhs, &Vector::zeros(a.nrows()), 0.0, i).0))
        .collect()
}

/// Galerkin solutions over a twice-orthogonalized Krylov basis.
fn krylov_optimal_errors(a: &Mat, rhs: &Vector, imax: usize) -> Vec<f64> {
    let exact = a.clone().cholesky().unwrap().solve(rhs);
    let err = relative_a_norm(a, &exact);
    let mut basis = vec![rhs.normalize()];
    let mut out = Vec::with_capacity(imax);
    for i in 1..=imax {
        let q = Mat::from_columns(&basis);
        let coef = (q.transpose() * a * &q).cholesky().unwrap().solve(&(q.transpose() * rhs));
        out.push(err(&(&q * coef)));
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

// ---- 8. Hessian floor ----

fn hessian_floor(h: &mut Harness) {
    let prob = tru(3, false);
    let cfg = PdalConfig { diagnostics: true, ..PdalConfig::tru() };
    let sol = pdal_solve(&prob, &cfg).unwrap();
    let mins: Vec<f64> = sol.report.trace.iter().filter_map(|t| t.diagnostics.as_ref()?.min_eig).collect();
    let worst = mins.iter().copied().fold(f64::INFINITY, f64::min);
    h.check(
        "8",
        "tru3 PDAL: dense Hessian lambda_min >= r at every diagnostic state",
        !mins.is_empty() && worst >= cfg.r,
        format!("{} states, min lambda_min = {worst:.6e}, r = {:.1e}", mins.len(), cfg.r),
    );
    let mut worst_random = f64::INFINITY;
    for seed in 0..20u64 {
        let mut r = rng(3000 + seed);
        let p = random_problem(8, &[4, 3], 3, &mut r);
        let mut st = PdalState::initial(&p, &cfg).unwrap();
        st.x = p.block_dims().iter().map(|&m| random_spd(m, &mut r)).collect();
        let ev = penalty_at(&p, &st, &(random_vec(8, &mut r) * 0.01)).unwrap();
        worst_random = worst_random.min(eigvals(&dense_hessian(&p, &st, &ev))[0] / st.r);
    }
    h.check("8", "20 random states: lambda_min / r >= 1", worst_random >= 1.0 - 1e-12, format!("min ratio {worst_random:.12}"));
}

// ---- 9. dimensions ----

fn dimensions(h: &mut Harness) {
    // (g, n, m, linear constraints) from the published size table.
    let rows = [(3, 36, 13, 72), (5, 300, 41, 600), (7, 1176, 85, 2352), (9, 3240, 145, 6480)];
    for (g, n, m, lin) in rows {
        for variant in [Variant::Tru, Variant::Vib] {
            for eps in [false, true] {
                let prob = standard_instance(variant, g, eps).unwrap().2;
                let want: Vec<usize> = if variant == Variant::Vib { vec![m, m - 1] } else { vec![m] };
                let got = (prob.n(), prob.block_dims().to_vec(), prob.num_lin());
                h.check(
                    "9",
                    &lorank::truss::instance_name(variant, g, eps),
                    got == (n, want.clone(), lin),
                    format!("n = {}, m = {:?}, lin = {} (table: {n}, {want:?}, {lin})", got.0, got.1, got.2),
                );
            }
        }
    }
}

fn main() -> ExitCode {
    let mut h = Harness { failed: Vec::new() };
    let start = Instant::now();
    cross_solver(&mut h);
    dual_structure(&mut h);
    preconditioner_payoff(&mut h);
    iteration_envelope(&mut h);
    condition_bound(&mut h);
    oracle_equivalence(&mut h);
    spectral_properties(&mut h);
    hessian_floor(&mut h);
    dimensions(&mut h);
    let unexpected: Vec<&String> = h.failed.iter().filter(|id| !UNATTAINABLE.contains(&id.as_str())).collect();
    println!(
        "acceptance: {} failed check(s) ({} known unattainable), {:.1} s",
        h.failed.len(),
        h.failed.len() - unexpected.len(),
        start.elapsed().as_secs_f64()
    );
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
