//! Dense matrix types, the approximation problem and the linear-algebra
//! contracts (SVD, norms, singular subspaces) the rest of the crate builds on.
//!
//! Every matrix is stored as a complex `DMatrix`; a [`FieldTag::Real`]
//! problem simply carries matrices whose imaginary parts are zero. Routines
//! that care about the field (SVD, Hermitian eigensolves) take a real fast
//! path whenever the data is real so that real problems produce real
//! singular vectors.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

pub type C64 = Complex64;
pub type Mat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Default clustering tolerance for the maximal singular subspace.
pub const DEFAULT_CLUSTER_RTOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldTag {
    Real,
    Complex,
}

impl FieldTag {
    pub fn is_real(self) -> bool {
        matches!(self, FieldTag::Real)
    }

    /// Real scalar parameters per field coefficient.
    pub fn real_dim(self) -> usize {
        match self {
            FieldTag::Real => 1,
            FieldTag::Complex => 2,
        }
    }
}

/// Builds a real matrix from row-major entries.
pub fn real_mat(rows: usize, cols: usize, entries: &[f64]) -> Mat {
    assert_eq!(
        entries.len(),
        rows * cols,
        "entry count does not match shape"
    );
    Mat::from_row_iterator(rows, cols, entries.iter().map(|&x| C64::new(x, 0.0)))
}

pub fn real_diag(d: &[f64]) -> Mat {
    let n = d.len();
    Mat::from_fn(n, n, |i, j| if i == j { C64::new(d[i], 0.0) } else { ZERO })
}

pub fn identity(n: usize) -> Mat {
    Mat::identity(n, n)
}

pub fn is_real(m: &Mat) -> bool {
    m.iter().all(|z| z.im == 0.0)
}

pub fn is_finite(m: &Mat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn real_part(m: &Mat) -> DMatrix<f64> {
    m.map(|z| z.re)
}

pub fn to_complex(m: &DMatrix<f64>) -> Mat {
    m.map(|x| C64::new(x, 0.0))
}

/// Hermitian part `(M + Mᴴ)/2`.
pub fn herm_part(m: &Mat) -> Mat {
    (m + m.adjoint()).scale(0.5)
}

/// Hermitian matrices `(H₁, H₂)` with `M = H₁ + iH₂`, so `vᴴMv = vᴴH₁v + i·vᴴH₂v`
/// with both quadratic forms real.
pub fn herm_split(m: &Mat) -> (Mat, Mat) {
    let h1 = herm_part(m);
    let h2 = (m - m.adjoint()).scale(0.5) * C64::new(0.0, -1.0);
    (h1, h2)
}

/// `vᴴ M v`.
pub fn quad_form(m: &Mat, v: &CVec) -> C64 {
    v.dotc(&(m * v))
}

/// Frobenius inner product `⟨A, B⟩ = trace(Aᴴ B)`.
pub fn inner(a: &Mat, b: &Mat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Kronecker product `I₂ ⊗ M`.
pub fn kron_i2(m: &Mat) -> Mat {
    let (r, c) = m.shape();
    let mut out = Mat::zeros(2 * r, 2 * c);
    out.view_mut((0, 0), (r, c)).copy_from(m);
    out.view_mut((r, c), (r, c)).copy_from(m);
    out
}

fn check_finite(m: &Mat) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return invalid("matrix has a zero dimension");
    }
    if !is_finite(m) {
        return invalid("matrix has non-finite entries");
    }
    Ok(())
}

/// Singular value decomposition `M = U diag(σ) Vᴴ` with `σ` sorted descending.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub singular_values: Vec<f64>,
    /// Left singular vectors as columns.
    pub u: Mat,
    /// Right singular vectors as columns.
    pub v: Mat,
}

impl SvdResult {
    pub fn sigma1(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    pub fn reconstruct(&self) -> Mat {
        let k = self.singular_values.len();
        let mut us = self.u.columns(0, k).into_owned();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.columns(0, k).adjoint()
    }
}

/// Thin SVD `(σ, U, V)` through faer, for any scalar faer supports.
fn thin_svd<T>(m: &DMatrix<T>) -> Result<(Vec<f64>, DMatrix<T>, DMatrix<T>)>
where
    T: faer::traits::ComplexField<Real = f64> + nalgebra::Scalar + Copy,
{
    let f = faer::Mat::<T>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let s = f
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD failed to converge: {e:?}")))?;
    let (u, v) = (s.U(), s.V());
    let values = s
        .S()
        .column_vector()
        .iter()
        .map(T::real_part_impl)
        .collect();
    Ok((
        values,
        DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)]),
        DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)]),
    ))
}

/// Thin SVD of a real matrix, singular values descending.
pub(crate) fn real_svd(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>, DMatrix<f64>)> {
    if !m.iter().all(|x| x.is_finite()) {
        return invalid("matrix has non-finite entries");
    }
    thin_svd(m)
}

/// Thin SVD with descending singular values. Real input takes a real code
/// path so the singular vectors come back real.
pub fn svd(m: &Mat) -> Result<SvdResult> {
    check_finite(m)?;
    let (values, u, v) = if is_real(m) {
        let (values, u, v) = thin_svd(&real_part(m))?;
        (values, to_complex(&u), to_complex(&v))
    } else {
        thin_svd(m)?
    };
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let singular_values = order.iter().map(|&j| values[j].max(0.0)).collect();
    let u = Mat::from_columns(&order.iter().map(|&j| u.column(j)).collect::<Vec<_>>());
    let v = Mat::from_columns(&order.iter().map(|&j| v.column(j)).collect::<Vec<_>>());
    Ok(SvdResult {
        singular_values,
        u,
        v,
    })
}

/// Largest singular value.
pub fn spectral_norm(m: &Mat) -> Result<f64> {
    Ok(svd(m)?.sigma1())
}

/// Sum of singular values (the dual norm of the spectral norm).
pub fn nuclear_norm(m: &Mat) -> Result<f64> {
    Ok(svd(m)?.singular_values.iter().sum())
}

/// Orthonormal basis (as columns) of the span of all right singular vectors
/// whose singular value lies within `cluster_rtol·σ₁` of `σ₁`.
pub fn maximal_right_singular_subspace(m: &Mat, cluster_rtol: f64) -> Result<Mat> {
    let s = svd(m)?;
    let sigma1 = s.sigma1();
    if sigma1 == 0.0 {
        return Err(Error::DegenerateInput(
            "zero matrix has no maximal singular subspace".into(),
        ));
    }
    let cols = s
        .singular_values
        .iter()
        .take_while(|&&sj| sigma1 - sj <= cluster_rtol * sigma1)
        .count();
    Ok(s.v.columns(0, cols).into_owned())
}

/// Eigen-decomposition of the Hermitian part of `h`, eigenvalues ascending.
pub fn hermitian_eigen(h: &Mat) -> (Vec<f64>, Mat) {
    let h = herm_part(h);
    let (vals, vecs): (Vec<f64>, Mat) = if is_real(&h) {
        let e = SymmetricEigen::new(real_part(&h));
        (
            e.eigenvalues.iter().copied().collect(),
            to_complex(&e.eigenvectors),
        )
    } else {
        let e = SymmetricEigen::new(h);
        (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
    };
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
    let sorted = order.iter().map(|&j| vals[j]).collect();
    let vecs = Mat::from_columns(&order.iter().map(|&j| vecs.column(j)).collect::<Vec<_>>());
    (sorted, vecs)
}

pub fn lambda_min_herm(h: &Mat) -> f64 {
    hermitian_eigen(h).0[0]
}

/// Instance of `min ‖Y − Σ aᵢXᵢ‖₂` over the span of the basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    field: FieldTag,
    y: Mat,
    basis: Vec<Mat>,
}

impl Problem {
    /// Checks shapes, finiteness and that real-tagged data is real. Basis
    /// independence and `Y ∉ span` are reported by [`validate_problem`].
    pub fn new(field: FieldTag, y: Mat, basis: Vec<Mat>) -> Result<Self> {
        check_finite(&y)?;
        let n = y.nrows();
        if y.ncols() != n {
            return invalid(format!("Y must be square, got {}x{}", n, y.ncols()));
        }
        if basis.is_empty() {
            return invalid("basis must contain at least one matrix");
        }
        for (i, x) in basis.iter().enumerate() {
            check_finite(x)?;
            if x.shape() != (n, n) {
                return invalid(format!(
                    "basis matrix {} has shape {:?}, expected ({n}, {n})",
                    i + 1,
                    x.shape()
                ));
            }
        }
        if field.is_real() && (!is_real(&y) || !basis.iter().all(is_real)) {
            return invalid("real-field problem has complex entries");
        }
        Ok(Self { field, y, basis })
    }

    pub fn field(&self) -> FieldTag {
        self.field
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn k(&self) -> usize {
        self.basis.len()
    }

    pub fn y(&self) -> &Mat {
        &self.y
    }

    pub fn basis(&self) -> &[Mat] {
        &self.basis
    }

    /// `Σ aᵢXᵢ`.
    pub fn combination(&self, a: &[C64]) -> Result<Mat> {
        self.check_coefficients(a)?;
        let mut x = Mat::zeros(self.n(), self.n());
        for (ai, xi) in a.iter().zip(&self.basis) {
            x += xi * *ai;
        }
        Ok(x)
    }

    pub fn check_coefficients(&self, a: &[C64]) -> Result<()> {
        if a.len() != self.k() {
            return invalid(format!(
                "expected {} coefficients, got {}",
                self.k(),
                a.len()
            ));
        }
        if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return invalid("non-finite coefficient");
        }
        if self.field.is_real() && a.iter().any(|z| z.im != 0.0) {
            return invalid("complex coefficient for a real-field problem");
        }
        Ok(())
    }

    /// Same problem with `Y` and every basis matrix multiplied by `c`.
    pub fn scaled(&self, c: C64) -> Result<Self> {
        Problem::new(
            self.field,
            &self.y * c,
            self.basis.iter().map(|x| x * c).collect(),
        )
    }

    pub fn with_extra_basis(&self, x: Mat) -> Result<Self> {
        let mut basis = self.basis.clone();
        basis.push(x);
        Problem::new(self.field, self.y.clone(), basis)
    }
}

/// `R = Y − Σ aᵢXᵢ`.
pub fn residual(p: &Problem, a: &[C64]) -> Result<Mat> {
    Ok(p.y() - p.combination(a)?)
}

/// `1e-10·(1 + ‖Y‖₂)`.
pub fn default_rank_tol(p: &Problem) -> f64 {
    1e-10 * (1.0 + spectral_norm(p.y()).unwrap_or(0.0))
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub dimensions_ok: bool,
    pub basis_independent: bool,
    /// Smallest singular value of the `n² × k` stacking of the basis.
    pub basis_min_singular_value: f64,
    pub y_outside_span: bool,
    /// Frobenius distance from `Y` to the span of the basis.
    pub projection_residual: f64,
    pub rank_tol: f64,
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.dimensions_ok && self.basis_independent && self.y_outside_span
    }
}

fn vectorize(m: &Mat) -> CVec {
    CVec::from_iterator(m.len(), m.iter().copied())
}

/// Least-squares projection of `Y` onto the span of the basis. Real problems
/// project over ℝ, complex ones over ℂ.
pub fn validate_problem(p: &Problem, rank_tol: f64) -> ValidationReport {
    let n = p.n();
    let mut issues = Vec::new();
    let dimensions_ok = p.basis().iter().all(|x| x.shape() == (n, n));
    if !dimensions_ok {
        issues.push("basis matrices do not match Y's dimension".to_string());
    }
    let cols: Vec<CVec> = p.basis().iter().map(vectorize).collect();
    let stack = Mat::from_columns(&cols);
    let (min_sv, projection_residual) = match svd(&stack) {
        Ok(s) => {
            let min_sv = s.singular_values.last().copied().unwrap_or(0.0);
            let yv = vectorize(p.y());
            // residual of the projection onto the column space, using only
            // the numerically significant left singular vectors
            let rank = s.singular_values.iter().filter(|&&x| x > rank_tol).count();
            let q = s.u.columns(0, rank);
            let proj = q * (q.adjoint() * &yv);
            (min_sv, (&yv - proj).norm())
        }
        Err(e) => {
            issues.push(format!("SVD of basis stacking failed: {e}"));
            (0.0, 0.0)
        }
    };
    let basis_independent = min_sv >= rank_tol;
    if !basis_independent {
        issues.push(format!(
            "basis is linearly dependent (smallest singular value {min_sv:.3e} < {rank_tol:.3e})"
        ));
    }
    let y_outside_span = projection_residual > rank_tol;
    if !y_outside_span {
        issues.push(format!(
            "Y lies in the span of the basis (projection residual {projection_residual:.3e})"
        ));
    }
    ValidationReport {
        dimensions_ok,
        basis_independent,
        basis_min_singular_value: min_sv,
        y_outside_span,
        projection_residual,
        rank_tol,
        issues,
    }
}

/// Coefficients and the attained value `σ₁ = ‖Y − X(a)‖₂`, `ρ = σ₁²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub a: Vec<C64>,
    pub sigma1: f64,
    pub rho: f64,
}

impl Solution {
    /// Evaluates the residual norm by a fresh SVD.
    pub fn from_coefficients(p: &Problem, a: Vec<C64>) -> Result<Self> {
        let sigma1 = spectral_norm(&residual(p, &a)?)?;
        Ok(Self {
            a,
            sigma1,
            rho: sigma1 * sigma1,
        })
    }

    pub fn from_real(p: &Problem, a: &[f64]) -> Result<Self> {
        Self::from_coefficients(p, a.iter().map(|&x| C64::new(x, 0.0)).collect())
    }
}
