//! Named problem instances and small independent oracles.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::linalg::{
    hermitian_eigen, identity, is_real, real_mat, residual, spectral_norm, svd, FieldTag, Mat, C64,
};

/// Grid oracles refuse to evaluate more points than this.
pub const MAX_GRID_EVALUATIONS: u64 = 10_000_000;

/// Upper-triangular Jordan block: `lambda` on the diagonal, ones above it.
pub fn jordan_block(lambda: C64, n: usize) -> Result<Mat> {
    if n < 2 {
        return invalid(format!("Jordan block needs n >= 2, got {n}"));
    }
    Ok(Mat::from_fn(n, n, |i, j| {
        if i == j {
            lambda
        } else if j == i + 1 {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    }))
}

/// `[I, A, …, A^k]`.
fn powers(a: &Mat, k: usize) -> Vec<Mat> {
    let mut out = Vec::with_capacity(k + 1);
    out.push(identity(a.nrows()));
    for i in 1..=k {
        let next = a * &out[i - 1];
        out.push(next);
    }
    out
}

fn check_krylov(a: &Mat, k: usize) -> Result<Vec<Mat>> {
    let n = a.nrows();
    if a.ncols() != n || n == 0 {
        return invalid("matrix must be square and non-empty");
    }
    if k == 0 || k >= n {
        return invalid(format!("need 1 <= k < n = {n}, got k = {k}"));
    }
    let pw = powers(a, k);
    // numerical rank of [vec I, vec A, …, vec A^k]; a deficit means the
    // minimal polynomial has degree <= k
    let cols: Vec<DVector<C64>> = pw
        .iter()
        .map(|m| DVector::from_iterator(m.len(), m.iter().copied()))
        .collect();
    let stack = Mat::from_columns(&cols);
    let norm = spectral_norm(a)?;
    let tol = (1e-8 * norm.powi(k as i32)).max(f64::MIN_POSITIVE);
    let sv = svd(&stack)?.singular_values;
    let smallest = sv.last().copied().unwrap_or(0.0);
    if smallest <= tol {
        log::warn!(
            "Krylov stacking is numerically rank deficient (smallest singular value {smallest:.3e}, tolerance {tol:.3e}); the minimal polynomial may have degree <= {k}"
        );
    }
    Ok(pw)
}

fn field_of(a: &Mat) -> FieldTag {
    if is_real(a) {
        FieldTag::Real
    } else {
        FieldTag::Complex
    }
}

/// `Y = I`, basis `A, A², …, A^k`.
pub fn ideal_gmres_problem(a: &Mat, k: usize) -> Result<crate::Problem> {
    let mut pw = check_krylov(a, k)?;
    let y = pw.remove(0);
    crate::Problem::new(field_of(a), y, pw)
}

/// `Y = A^k`, basis `I, A, …, A^{k−1}`.
pub fn ideal_arnoldi_problem(a: &Mat, k: usize) -> Result<crate::Problem> {
    let mut pw = check_krylov(a, k)?;
    let y = pw.pop().expect("k >= 1 powers");
    crate::Problem::new(field_of(a), y, pw)
}

/// The 3×3 real symmetric example of Lau and Riha.
pub fn lau_riha_problem() -> crate::Problem {
    let y = real_mat(
        3,
        3,
        &[0.67, -0.13, 0.27, -0.13, 0.49, 0.33, 0.27, 0.33, 0.63],
    );
    let x1 = real_mat(
        3,
        3,
        &[0.13, 0.04, -0.06, 0.04, 0.44, 0.21, -0.06, 0.21, 0.39],
    );
    let x2 = real_mat(
        3,
        3,
        &[0.22, -0.09, -0.11, -0.09, 0.35, 0.18, -0.11, 0.18, 0.51],
    );
    crate::Problem::new(FieldTag::Real, y, vec![x1, x2]).expect("built-in data is well formed")
}

/// Best approximation of a Hermitian `Y` from `span{I}`: the centre and
/// half-width of its spectrum. Returns `(c, value)`.
pub fn hermitian_shift_oracle(y: &Mat) -> Result<(f64, f64)> {
    if y.nrows() != y.ncols() || y.is_empty() {
        return invalid("matrix must be square and non-empty");
    }
    let scale = 1.0 + y.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let asym = (y - y.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if asym > 1e-12 * scale {
        return invalid(format!("matrix is not Hermitian (asymmetry {asym:.3e})"));
    }
    let (vals, _) = hermitian_eigen(y);
    let lo = vals[0];
    let hi = vals[vals.len() - 1];
    if hi - lo <= 1e-12 * scale {
        return invalid("Y is a multiple of the identity, so it lies in span{I}");
    }
    Ok(((lo + hi) / 2.0, (hi - lo) / 2.0))
}

/// Minimum of the residual norm over the Cartesian grid `[−h, h]^d` with
/// `grid` points per axis (`d = k`, or `2k` real axes for complex
/// problems). An upper bound on the optimal value.
pub fn brute_force_value(p: &crate::Problem, half_width: f64, grid: usize) -> Result<f64> {
    if !(half_width.is_finite() && half_width > 0.0) {
        return invalid("grid half-width must be positive");
    }
    if grid < 2 {
        return invalid("need at least two grid points per axis");
    }
    let axes = p.k() * p.field().real_dim();
    let total = (grid as u64).checked_pow(axes as u32).unwrap_or(u64::MAX);
    if total > MAX_GRID_EVALUATIONS {
        return invalid(format!(
            "grid of {grid}^{axes} points exceeds {MAX_GRID_EVALUATIONS} evaluations"
        ));
    }
    let step = 2.0 * half_width / (grid - 1) as f64;
    let coord = |i: usize| -half_width + step * i as f64;
    let best = (0..total)
        .into_par_iter()
        .map(|mut idx| {
            let mut params = vec![0.0; axes];
            for slot in params.iter_mut() {
                *slot = coord((idx % grid as u64) as usize);
                idx /= grid as u64;
            }
            let a: Vec<C64> = match p.field() {
                FieldTag::Real => params.iter().map(|&x| C64::new(x, 0.0)).collect(),
                FieldTag::Complex => params.chunks(2).map(|c| C64::new(c[0], c[1])).collect(),
            };
            residual(p, &a)
                .and_then(|r| spectral_norm(&r))
                .unwrap_or(f64::INFINITY)
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(best)
}

/// Worst-case excess of [`brute_force_value`] over the true minimum when the
/// minimiser lies inside the box: each coefficient is within half a cell of
/// a grid point, so the residual moves by at most `h/(g−1)·Σ‖Xᵢ‖₂`
/// (times `√2` for complex coefficients).
pub fn grid_slack(p: &crate::Problem, half_width: f64, grid: usize) -> Result<f64> {
    let norms: f64 = p.basis().iter().map(spectral_norm).sum::<Result<f64>>()?;
    let per_coeff = if p.field().is_real() {
        1.0
    } else {
        std::f64::consts::SQRT_2
    };
    Ok(half_width / (grid.max(2) - 1) as f64 * norms * per_coeff)
}

/// Gaussian random matrix over the field, reproducible from `seed`.
pub fn random_matrix(field: FieldTag, n: usize, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = if field.is_real() {
            0.0
        } else {
            rng.sample(StandardNormal)
        };
        C64::new(re, im)
    })
}

/// Random instance with Gaussian `Y` and basis; reproducible from `seed`.
pub fn random_problem(field: FieldTag, n: usize, k: usize, seed: u64) -> Result<crate::Problem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || random_matrix(field, n, rng.random());
    let y = draw();
    let basis = (0..k).map(|_| draw()).collect();
    crate::Problem::new(field, y, basis)
}
