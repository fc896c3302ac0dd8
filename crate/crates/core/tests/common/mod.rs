//! Test-only oracles: dense Kronecker assemblies, planted spectra and small
//! random problems, all built without the library's matrix-free paths.
#![allow(dead_code)]

use lorank::linalg::{DenseSym, Mat, SparseSym, Vector};
use lorank::model::{LinMatrix, SdpProblem};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut impl Rng) -> f64 {
    // Box-Muller; plenty for test data.
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn random_vec(n: usize, rng: &mut impl Rng) -> Vector {
    Vector::from_iterator(n, (0..n).map(|_| gauss(rng)))
}

pub fn random_mat(r: usize, c: usize, rng: &mut impl Rng) -> Mat {
    Mat::from_fn(r, c, |_, _| gauss(rng))
}

pub fn random_sym(m: usize, rng: &mut impl Rng) -> DenseSym {
    DenseSym::new(random_mat(m, m, rng))
}

/// Orthogonal factor of a Gaussian matrix.
pub fn random_orthogonal(m: usize, rng: &mut impl Rng) -> Mat {
    random_mat(m, m, rng).qr().q()
}

/// `Q diag(eigs) Qᵀ` with a random orthogonal `Q`.
pub fn planted(eigs: &[f64], rng: &mut impl Rng) -> DenseSym {
    let q = random_orthogonal(eigs.len(), rng);
    DenseSym::new(&q * Mat::from_diagonal(&Vector::from_column_slice(eigs)) * q.transpose())
}

pub fn random_spd(m: usize, rng: &mut impl Rng) -> DenseSym {
    let eigs: Vec<f64> = (0..m).map(|_| rng.gen_range(0.5..3.0)).collect();
    planted(&eigs, rng)
}

/// Random `m × m` matrix of rank `k`, positive semidefinite.
pub fn random_psd_rank(m: usize, k: usize, rng: &mut impl Rng) -> DenseSym {
    let f = random_mat(m, k, rng);
    DenseSym::new(&f * f.transpose())
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    Mat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Column-major `vec`.
pub fn vec_of(m: &Mat) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

/// The stacked operator `𝐀_i = [vec A_1, …, vec A_n]` (`m² × n`) of one block.
pub fn stacked(prob: &SdpProblem, block: usize) -> Mat {
    let m = prob.block_dims()[block];
    let cons = prob.constraints(block);
    let mut out = Mat::zeros(m * m, cons.len());
    for (j, a) in cons.iter().enumerate() {
        out.set_column(j, &vec_of(a.to_dense().as_mat()));
    }
    out
}

/// `Σ_i 𝐀_iᵀ (P_i ⊗ Q_i) 𝐀_i` by explicit Kronecker products.
pub fn kron_form(prob: &SdpProblem, p: &[DenseSym], q: &[DenseSym]) -> Mat {
    let n = prob.n();
    let mut h = Mat::zeros(n, n);
    for i in 0..prob.num_blocks() {
        let a = stacked(prob, i);
        h += a.transpose() * kron(p[i].as_mat(), q[i].as_mat()) * &a;
    }
    h
}

/// `Dᵀ diag(w) D` from the dense linear matrix.
pub fn lin_gram(prob: &SdpProblem, w: &Vector) -> Mat {
    let d = prob.lin().to_dense();
    d.transpose() * Mat::from_diagonal(w) * d
}

pub fn rel_err(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn rel_err_vec(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Dense symmetric eigenvalues by nalgebra, ascending; independent of the
/// library's eigensolver entry point.
pub fn eigvals(m: &Mat) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut v: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// `min cᵀx` over the SDPA toy `x ≥ 1` written as a 1×1 LMI.
pub fn toy_problem() -> SdpProblem {
    let one = SparseSym::new(1, [(0, 0, 1.0)]).unwrap();
    let minus_one = SparseSym::new(1, [(0, 0, -1.0)]).unwrap();
    SdpProblem::new(vec![vec![one]], vec![minus_one], Vector::from_element(1, 1.0), LinMatrix::empty(1), Vector::zeros(0))
        .unwrap()
}

/// A random SDP that is strictly feasible on both sides: `b = 𝒜(X₀)` with `X₀ ≻ 0`
/// and `C = 𝒜*(y₀) + S₀` with `S₀ ≻ 0`.
pub fn random_problem(n: usize, dims: &[usize], num_lin: usize, rng: &mut impl Rng) -> SdpProblem {
    random_problem_with_dual(n, dims, num_lin, rng).0
}

/// [`random_problem`] together with its strictly feasible point `(y₀, X₀, S₀)`.
pub fn random_problem_with_dual(
    n: usize,
    dims: &[usize],
    num_lin: usize,
    rng: &mut impl Rng,
) -> (SdpProblem, lorank::model::PrimalDualPoint) {
    let mut constraints = Vec::new();
    let mut objective = Vec::new();
    for &m in dims {
        let mut cons = Vec::with_capacity(n);
        for _ in 0..n {
            let mut trip = Vec::new();
            for r in 0..m {
                for c in 0..=r {
                    if rng.gen_bool(0.4) {
                        trip.push((r, c, gauss(rng)));
                    }
                }
            }
            if trip.is_empty() {
                trip.push((0, 0, 1.0));
            }
            cons.push(SparseSym::new(m, trip).unwrap());
        }
        constraints.push(cons);
        objective.push(SparseSym::zeros(m));
    }
    let mut lin_trip = Vec::new();
    for r in 0..num_lin {
        lin_trip.push((r, r % n, if r % 2 == 0 { 1.0 } else { -1.0 }));
    }
    let lin = LinMatrix::new(num_lin, n, lin_trip).unwrap();
    let shell = SdpProblem::new(constraints.clone(), objective, Vector::zeros(n), lin.clone(), Vector::zeros(num_lin)).unwrap();

    let x0 = lorank::model::BlockSymMatrix {
        blocks: dims.iter().map(|&m| random_spd(m, rng)).collect(),
        lin: Vector::from_element(num_lin, 1.0),
    };
    let b = shell.apply_a(&x0);
    let y0 = random_vec(n, rng) * 0.1;
    let aty = shell.apply_a_adjoint(&y0);
    let objective: Vec<SparseSym> = aty
        .blocks
        .iter()
        .zip(dims)
        .map(|(a, &m)| {
            let c = a.as_mat() + random_spd(m, rng).as_mat();
            SparseSym::new(m, (0..m).flat_map(|r| (0..=r).map(move |col| (r, col))).map(|(r, col)| (r, col, c[(r, col)]))).unwrap()
        })
        .collect();
    let d = aty.lin + Vector::from_element(num_lin, 1.0);
    let prob = SdpProblem::new(constraints, objective, b, lin, d).unwrap();
    let s0 = prob.objective_matrix().sub(&prob.apply_a_adjoint(&y0));
    (prob, lorank::model::PrimalDualPoint { y: y0, x: x0, s: s0 })
}

/// Random interior primal-dual point (not necessarily feasible).
pub fn random_interior_point(prob: &SdpProblem, rng: &mut impl Rng) -> lorank::model::PrimalDualPoint {
    let mut side = || lorank::model::BlockSymMatrix {
        blocks: prob.block_dims().iter().map(|&m| random_spd(m, rng)).collect(),
        lin: Vector::from_iterator(prob.num_lin(), (0..prob.num_lin()).map(|_| rng.gen_range(0.5..2.0))),
    };
    let (x, s) = (side(), side());
    lorank::model::PrimalDualPoint { y: random_vec(prob.n(), rng), x, s }
}

/// The IP state reached after `iters` iterations with default settings.
pub fn ip_state_after(prob: &SdpProblem, iters: usize) -> lorank::ip::IpState {
    let cfg = lorank::ip::IpConfig { max_iter: iters, ..Default::default() };
    let sol = lorank::ip::ip_solve(prob, &cfg).unwrap();
    assert_eq!(sol.report.iterations, iters, "the run stopped early");
    lorank::ip::IpState::new(prob, sol.point, iters).unwrap()
}

/// Eigenvalues of the pencil `(H, P)`, i.e. of `L⁻¹ H L⁻ᵀ` with `P = LLᵀ`, ascending.
pub fn pencil_eigvals(h: &Mat, p: &Mat) -> Vec<f64> {
    let l = p.clone().cholesky().expect("P must be positive definite").l();
    let li = l.try_inverse().unwrap();
    eigvals(&(&li * h * li.transpose()))
}

/// Outliers above the first gap of at least `ratio` in a spectrum, scanning from the top.
pub fn outliers_above_gap(eigs: &[f64], ratio: f64) -> usize {
    let mut v: Vec<f64> = eigs.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    (0..v.len().saturating_sub(1)).find(|&j| v[j] >= ratio * v[j + 1].max(0.0)).map_or(0, |j| j + 1)
}

/// Central difference of a scalar function along `dir`.
pub fn central_diff(f: impl Fn(&Vector) -> f64, y: &Vector, dir: &Vector, h: f64) -> f64 {
    (f(&(y + dir * h)) - f(&(y - dir * h))) / (2.0 * h)
}
