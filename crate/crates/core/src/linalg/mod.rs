//! Dense symmetric kernels and sparse symmetric storage.
//!
//! Every solver quantity that lives on an LMI block (`X`, `S`, `W`, `Z`,
//! multipliers) is a [`DenseSym`]; every data matrix (`A_j`, `C`, bar
//! stiffnesses) is a [`SparseSym`]. Kronecker-structured operators never
//! materialize `m² × m²` matrices: `(W ⊗ W) vec(M)` is computed as `W M W`.

mod eig;
mod sparse;

pub use sparse::SparseSym;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative threshold (against the largest eigenvalue magnitude) below which
/// an eigenvalue counts as zero in rank decisions.
pub const RANK_TOL: f64 = 1e-8;

/// A dense, exactly symmetric matrix.
///
/// Both triangles are stored so that products go straight to the BLAS-like
/// kernels; every constructor symmetrizes, so `self[(i, j)] == self[(j, i)]`
/// holds bit for bit.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseSym(Mat);

impl DenseSym {
    /// Symmetric part `(m + mᵀ)/2` of a square matrix.
    pub fn new(m: Mat) -> Self {
        assert!(m.is_square(), "DenseSym needs a square matrix");
        let n = m.nrows();
        let mut m = m;
        for j in 0..n {
            for i in (j + 1)..n {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        DenseSym(m)
    }

    /// Builds from the lower triangle; `f(i, j)` is only called with `i >= j`.
    pub fn from_lower_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        DenseSym(m)
    }

    pub fn zeros(n: usize) -> Self {
        DenseSym(Mat::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        DenseSym(Mat::identity(n, n))
    }

    pub fn scaled_identity(n: usize, alpha: f64) -> Self {
        DenseSym(Mat::identity(n, n) * alpha)
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        DenseSym(Mat::from_diagonal(&Vector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }

    /// Frobenius inner product `A • B = tr(AB)`.
    pub fn dot(&self, other: &DenseSym) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn norm_fro(&self) -> f64 {
        self.0.norm()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }

    pub fn scale(&self, alpha: f64) -> DenseSym {
        DenseSym(&self.0 * alpha)
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &DenseSym) -> DenseSym {
        let mut m = self.0.clone();
        m.zip_apply(&other.0, |a, b| *a += alpha * b);
        DenseSym(m)
    }

    pub fn add_diagonal(&self, alpha: f64) -> DenseSym {
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += alpha;
        }
        DenseSym(m)
    }
}

impl std::ops::Index<(usize, usize)> for DenseSym {
    type Output = f64;
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

/// `A M A` for symmetric `A` and `M`; the action of `A ⊗ A` on `vec(M)`.
pub fn sandwich(a: &DenseSym, m: &DenseSym) -> DenseSym {
    DenseSym::new(&a.0 * &m.0 * &a.0)
}

/// Symmetric part of the product `A B`.
pub fn sym_product(a: &Mat, b: &Mat) -> DenseSym {
    DenseSym::new(a * b)
}

/// Eigendecomposition `A = Q diag(λ) Qᵀ` with `λ` ascending.
#[derive(Clone, Debug)]
pub struct EigDecomp {
    pub values: Vector,
    pub vectors: Mat,
}

impl EigDecomp {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// `Q diag(f(λ)) Qᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseSym {
        let mut scaled = self.vectors.clone();
        for (j, &l) in self.values.iter().enumerate() {
            let s = f(l);
            scaled.column_mut(j).scale_mut(s);
        }
        DenseSym::new(scaled * self.vectors.transpose())
    }

    pub fn reconstruct(&self) -> DenseSym {
        self.map(|l| l)
    }
}

/// QL sweeps allowed per eigenvalue before reporting non-convergence.
const MAX_QL_SWEEPS: usize = 60;

/// Symmetric eigendecomposition (Householder tridiagonalization followed by
/// implicit-shift QL), eigenvalues sorted ascending.
pub fn sym_eig(a: &DenseSym) -> Result<EigDecomp> {
    let n = a.dim();
    if !a.0.iter().all(|v| v.is_finite()) {
        return Err(Error::EigNoConvergence { dim: n });
    }
    let (vals, vecs) = eig::symmetric_eigen(&a.0, true, MAX_QL_SWEEPS).ok_or(Error::EigNoConvergence { dim: n })?;
    let vecs = vecs.expect("eigenvectors were requested");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| vals[i]));
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &vecs.column(src));
    }
    Ok(EigDecomp { values, vectors })
}

/// Eigenvalues only, ascending.
pub fn sym_eigvals(a: &DenseSym) -> Result<Vector> {
    let n = a.dim();
    if !a.0.iter().all(|v| v.is_finite()) {
        return Err(Error::EigNoConvergence { dim: n });
    }
    let (vals, _) = eig::symmetric_eigen(&a.0, false, MAX_QL_SWEEPS).ok_or(Error::EigNoConvergence { dim: n })?;
    let mut v: Vec<f64> = vals.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    Ok(Vector::from_vec(v))
}

/// Lower Cholesky factor `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct CholFactor {
    l: Mat,
}

/// Cholesky factorization of a symmetric positive definite matrix.
///
/// Fails with the index of the first nonpositive pivot.
pub fn chol(a: &DenseSym) -> Result<CholFactor> {
    chol_mat(&a.0)
}

pub(crate) fn chol_mat(a: &Mat) -> Result<CholFactor> {
    if let Some(c) = nalgebra::Cholesky::new(a.clone()) {
        let l = c.unpack();
        if (0..l.nrows()).all(|i| l[(i, i)] > 0.0 && l[(i, i)].is_finite()) {
            return Ok(CholFactor { l });
        }
    }
    Err(Error::NotPositiveDefinite {
        pivot: first_bad_pivot(a),
    })
}

/// Reruns the factorization column by column to locate the failing pivot.
fn first_bad_pivot(a: &Mat) -> usize {
    let n = a.nrows();
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0 && d.is_finite()) {
            return j;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    n.saturating_sub(1)
}

impl CholFactor {
    pub fn l(&self) -> &Mat {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// `L⁻¹ B`.
    pub fn forward(&self, b: &Mat) -> Mat {
        self.l
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// `L⁻ᵀ B`.
    pub fn backward(&self, b: &Mat) -> Mat {
        self.l
            .tr_solve_lower_triangular(b)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// `A⁻¹ b`.
    pub fn solve_vec(&self, b: &Vector) -> Vector {
        let y = self
            .l
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a positive diagonal");
        self.l
            .tr_solve_lower_triangular(&y)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// `A⁻¹ B`.
    pub fn solve_mat(&self, b: &Mat) -> Mat {
        self.backward(&self.forward(b))
    }

    /// `A⁻¹`.
    pub fn inverse(&self) -> DenseSym {
        let n = self.dim();
        DenseSym::new(self.solve_mat(&Mat::identity(n, n)))
    }

    /// `L⁻¹ M L⁻ᵀ` for symmetric `M`.
    pub fn congruence_inv(&self, m: &DenseSym) -> DenseSym {
        let t = self.forward(&m.0);
        DenseSym::new(self.forward(&t.transpose()))
    }
}

/// `λ_min(X⁻¹ ΔX)`, computed as `λ_min(L⁻¹ ΔX L⁻ᵀ)` with `X = L Lᵀ`.
pub fn min_eig_pencil(x: &DenseSym, dx: &DenseSym) -> Result<f64> {
    let f = chol(x)?;
    let vals = sym_eigvals(&f.congruence_inv(dx))?;
    Ok(vals[0])
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Number of eigenvalues above `RANK_TOL` times the largest magnitude.
pub fn numerical_rank(values: &[f64]) -> usize {
    let top = norm_inf(values);
    if top == 0.0 {
        return 0;
    }
    values.iter().filter(|v| v.abs() > RANK_TOL * top).count()
}
