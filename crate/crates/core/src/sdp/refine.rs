//! Local Newton refinement of the IPM coefficients.
//!
//! `σ₁(R(x)) = λ_max(D(x))` with `D(x) = [[0, R], [Rᴴ, 0]]` affine in the
//! real parameters `x`. Along directions where the top eigenvalue cluster
//! stays together the function is smooth and the minimum flat, so the IPM's
//! objective accuracy pins `x` down only to about the square root of the
//! duality gap. Assuming a cluster of multiplicity `d`, the optimality system
//!
//! ```text
//!   Q₁ᴴ D(x + δ) Q₁ = ω I,   ⟨U, Gⱼ⟩ + (W δ)ⱼ = 0,   trace U = 1
//! ```
//!
//! (`Gⱼ = Q₁ᴴ ∂ⱼD Q₁`, `W` the second-order eigenvalue term) is solved by
//! Newton's method in `(δ, ω, U)`. Each plausible `d` is tried; a run is
//! kept only if its multiplier `U` is positive semidefinite and `σ₁` did not
//! grow.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::{hermitian_eigen, real_svd, FieldTag, Mat, Problem, C64};

/// Singular values within this relative distance of `σ₁` may belong to the
/// optimal cluster.
const CLUSTER_WINDOW: f64 = 1e-2;
const MAX_STEPS: usize = 10;
/// Intermediate Newton iterates may exceed the starting `σ₁` by this much
/// (relative); they do not converge otherwise when the start is off the
/// cluster manifold.
const ITERATE_SLACK: f64 = 1e-8;
/// A refined point is kept only if its `σ₁` is within this relative
/// distance of the starting value.
const VALUE_SLACK: f64 = 1e-12;
const PSD_TOL: f64 = 1e-8;

struct Model {
    field: FieldTag,
    y: Mat,
    dirs: Vec<Mat>,
}

impl Model {
    fn new(p: &Problem) -> Self {
        let dirs = p
            .basis()
            .iter()
            .flat_map(|x| match p.field() {
                FieldTag::Real => vec![x.clone()],
                FieldTag::Complex => vec![x.clone(), x * C64::new(0.0, 1.0)],
            })
            .collect();
        Self {
            field: p.field(),
            y: p.y().clone(),
            dirs,
        }
    }

    fn coefficients(&self, x: &[f64]) -> Vec<C64> {
        match self.field {
            FieldTag::Real => x.iter().map(|&r| C64::new(r, 0.0)).collect(),
            FieldTag::Complex => x.chunks(2).map(|c| C64::new(c[0], c[1])).collect(),
        }
    }

    fn dilation(&self, x: &[f64]) -> Mat {
        let mut r = self.y.clone();
        for (e, &xj) in self.dirs.iter().zip(x) {
            r -= e * C64::new(xj, 0.0);
        }
        dilate(&r)
    }

    /// `∂D/∂xⱼ`.
    fn derivative(&self, j: usize) -> Mat {
        -dilate(&self.dirs[j])
    }
}

fn dilate(m: &Mat) -> Mat {
    let n = m.nrows();
    let mut out = Mat::zeros(2 * n, 2 * n);
    out.view_mut((0, n), (n, n)).copy_from(m);
    out.view_mut((n, 0), (n, n)).copy_from(&m.adjoint());
    out
}

/// Orthonormal basis of `d × d` Hermitian (complex field) or real symmetric
/// matrices under `⟨A, B⟩ = Re tr(AB)`.
fn hermitian_basis(field: FieldTag, d: usize) -> Vec<Mat> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::new();
    for i in 0..d {
        let mut e = Mat::zeros(d, d);
        e[(i, i)] = C64::new(1.0, 0.0);
        out.push(e);
    }
    for i in 0..d {
        for j in i + 1..d {
            let mut e = Mat::zeros(d, d);
            e[(i, j)] = C64::new(s, 0.0);
            e[(j, i)] = C64::new(s, 0.0);
            out.push(e);
            if !field.is_real() {
                let mut e = Mat::zeros(d, d);
                e[(i, j)] = C64::new(0.0, -s);
                e[(j, i)] = C64::new(0.0, s);
                out.push(e);
            }
        }
    }
    out
}

fn re_inner(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

struct State {
    x: Vec<f64>,
    u: Mat,
    /// `max(spread of the top cluster, ‖(⟨U, Gⱼ⟩)ⱼ‖)`, scaled by `1 + σ₁`.
    kkt: f64,
}

struct Spectrum {
    vals: Vec<f64>,
    vecs: Mat,
}

impl Spectrum {
    fn of(m: &Mat) -> Self {
        let (mut vals, vecs) = hermitian_eigen(m);
        vals.reverse();
        let cols: Vec<_> = (0..vecs.ncols())
            .rev()
            .map(|j| vecs.column(j).into_owned())
            .collect();
        Self {
            vals,
            vecs: Mat::from_columns(&cols),
        }
    }
}

fn project_psd_trace_one(u: &Mat) -> Option<Mat> {
    let h = (u + u.adjoint()) * C64::new(0.5, 0.0);
    let t = h.trace().re;
    (t.is_finite() && t.abs() > 1e-300).then(|| h / C64::new(t, 0.0))
}

fn kkt_measure(model: &Model, eig: &Spectrum, d: usize, u: &Mat) -> f64 {
    let q1 = eig.vecs.columns(0, d);
    let spread = eig.vals[0] - eig.vals[d - 1];
    let stat = (0..model.dirs.len())
        .map(|j| re_inner(u, &(q1.adjoint() * model.derivative(j) * q1)).powi(2))
        .sum::<f64>()
        .sqrt();
    spread.max(stat) / (1.0 + eig.vals[0])
}

/// LU when the KKT matrix is well conditioned, otherwise the minimum-norm
/// least-squares solution (non-unique optimal coefficients make it singular).
fn solve_system(k: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let lu = k.clone().full_piv_lu();
    let diag = lu.u().diagonal();
    let big = diag.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let small = diag.iter().fold(f64::INFINITY, |a, b| a.min(b.abs()));
    if big > 0.0 && small > 1e-10 * big {
        return lu.solve(rhs);
    }
    let (values, u, v) = real_svd(&k).ok()?;
    let cut = 1e-10 * values.first().copied().unwrap_or(0.0);
    let mut sol = DVector::zeros(k.ncols());
    for (j, &sj) in values.iter().enumerate() {
        if sj > cut {
            sol += v.column(j) * (u.column(j).dot(rhs) / sj);
        }
    }
    Some(sol)
}

/// One Newton step for multiplicity `d`; returns `(δ, U)`.
fn newton_step(model: &Model, eig: &Spectrum, d: usize, u: &Mat) -> Option<(DVector<f64>, Mat)> {
    let m = model.dirs.len();
    let size = eig.vals.len();
    let q1 = eig.vecs.columns(0, d).into_owned();
    let q2 = eig.vecs.columns(d, size - d).into_owned();
    let top = eig.vals[..d].iter().sum::<f64>() / d as f64;
    let gaps: Vec<f64> = eig.vals[d..].iter().map(|l| top - l).collect();
    if gaps.iter().any(|&g| g.is_nan() || g <= 0.0) {
        return None;
    }
    let derivs: Vec<Mat> = (0..m).map(|j| model.derivative(j)).collect();
    let g: Vec<Mat> = derivs.iter().map(|a| q1.adjoint() * a * &q1).collect();
    // Q₁ᴴAⱼQ₂ diag(1/gap)^{1/2}
    let c: Vec<Mat> = derivs
        .iter()
        .map(|a| {
            let mut c = q1.adjoint() * a * &q2;
            for (col, gap) in c.column_iter_mut().zip(&gaps) {
                let s = C64::new(1.0 / gap.sqrt(), 0.0);
                for z in col {
                    *z *= s;
                }
            }
            c
        })
        .collect();
    let mut w = DMatrix::<f64>::zeros(m, m);
    for j in 0..m {
        let uc = u * &c[j];
        for l in j..m {
            let v = 2.0 * re_inner(&c[l], &uc);
            w[(j, l)] = v;
            w[(l, j)] = v;
        }
    }
    let basis = hermitian_basis(model.field, d);
    let p = basis.len();
    let ident = Mat::identity(d, d);
    // ω is measured from the cluster mean so the right-hand side is O(spread)
    let lam = Mat::from_diagonal(&DVector::from_iterator(
        d,
        eig.vals[..d].iter().map(|&l| C64::new(l - top, 0.0)),
    ));
    let dim = m + 1 + p;
    let mut k = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    // rows 0..p: cluster equations; unknowns δ (0..m), ω (m), U (m+1..)
    for (a, b) in basis.iter().enumerate() {
        for (j, gj) in g.iter().enumerate() {
            k[(a, j)] = re_inner(b, gj);
        }
        k[(a, m)] = -re_inner(b, &ident);
        rhs[a] = -re_inner(b, &lam);
    }
    // rows p..p+m: stationarity
    for j in 0..m {
        for l in 0..m {
            k[(p + j, l)] = w[(j, l)];
        }
        for (a, b) in basis.iter().enumerate() {
            k[(p + j, m + 1 + a)] = re_inner(b, &g[j]);
        }
    }
    // last row: trace U = 1
    for (a, b) in basis.iter().enumerate() {
        k[(p + m, m + 1 + a)] = re_inner(b, &ident);
    }
    rhs[p + m] = 1.0;
    let sol = solve_system(k, &rhs)?;
    let delta = sol.rows(0, m).into_owned();
    let mut u_new = Mat::zeros(d, d);
    for (a, b) in basis.iter().enumerate() {
        u_new += b * C64::new(sol[m + 1 + a], 0.0);
    }
    Some((delta, u_new))
}

fn run(model: &Model, x0: &[f64], sigma0: f64, d: usize, u0: &Mat) -> Option<State> {
    let mut x = x0.to_vec();
    let mut eig = Spectrum::of(&model.dilation(&x));
    let mut u = u0.clone();
    let mut best: Option<State> = None;
    for _ in 0..MAX_STEPS {
        let Some((delta, u_step)) = newton_step(model, &eig, d, &u) else {
            break;
        };
        let cand: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
        let next_eig = Spectrum::of(&model.dilation(&cand));
        let cs = next_eig.vals[0];
        if cs.is_nan() || cs > sigma0 * (1.0 + ITERATE_SLACK) {
            break;
        }
        // the cluster basis is only defined up to a unitary; carry U across
        let t = next_eig.vecs.columns(0, d).adjoint() * eig.vecs.columns(0, d);
        let Some(u_new) = project_psd_trace_one(&(&t * u_step * t.adjoint())) else {
            break;
        };
        let small = delta.norm() <= 1e-15 * (1.0 + x.iter().fold(0.0f64, |a, b| a.max(b.abs())));
        x = cand;
        eig = next_eig;
        u = u_new;
        let psd = hermitian_eigen(&u).0[0] >= -PSD_TOL;
        let kkt = kkt_measure(model, &eig, d, &u);
        let keep = psd && cs <= sigma0 * (1.0 + VALUE_SLACK);
        if keep && best.as_ref().is_none_or(|b| kkt < b.kkt) {
            best = Some(State {
                x: x.clone(),
                u: u.clone(),
                kkt,
            });
        }
        if small || kkt <= f64::EPSILON {
            break;
        }
    }
    best
}

/// Refined coefficients; the input is returned unchanged when no candidate
/// multiplicity yields a consistent optimality system. `dual` is the IPM's
/// unit-trace dual matrix, concentrated on `[u; −v]` directions.
pub(crate) fn refine(p: &Problem, a: &[C64], dual: &Mat) -> Result<Vec<C64>> {
    let model = Model::new(p);
    let x0: Vec<f64> = match p.field() {
        FieldTag::Real => a.iter().map(|z| z.re).collect(),
        FieldTag::Complex => a.iter().flat_map(|z| [z.re, z.im]).collect(),
    };
    let eig = Spectrum::of(&model.dilation(&x0));
    let sigma0 = eig.vals[0];
    if sigma0.is_nan() || sigma0 <= 0.0 {
        return Ok(a.to_vec());
    }
    let n = p.n();
    // flip [u; −v] to [u; v]
    let flip = DVector::from_iterator(
        2 * n,
        (0..2 * n).map(|i| C64::new(if i < n { 1.0 } else { -1.0 }, 0.0)),
    );
    let flip = Mat::from_diagonal(&flip);
    let dual_top = &flip * dual * &flip;
    let m = model.dirs.len();
    let max_d = eig
        .vals
        .iter()
        .take(n)
        .take_while(|&&l| l >= sigma0 * (1.0 - CLUSTER_WINDOW))
        .count();
    let start_kkt = |d: usize| {
        let q1 = eig.vecs.columns(0, d);
        project_psd_trace_one(&(q1.adjoint() * &dual_top * q1))
            .map(|u| (kkt_measure(&model, &eig, d, &u), u))
    };
    let mut best: Option<State> = None;
    let mut baseline = f64::INFINITY;
    for d in 1..=max_d {
        let unknowns = hermitian_basis(p.field(), d).len();
        if unknowns > m + 1 {
            break;
        }
        let Some((k0, u0)) = start_kkt(d) else {
            continue;
        };
        baseline = baseline.min(k0);
        let Some(st) = run(&model, &x0, sigma0, d, &u0) else {
            continue;
        };
        let better = match &best {
            None => true,
            Some(b) => st.kkt < b.kkt,
        };
        if better {
            best = Some(st);
        }
    }
    match best {
        Some(st) if st.kkt < baseline => {
            log::debug!(
                "coefficient refinement: optimality residual {baseline:.3e} -> {:.3e} (cluster {})",
                st.kkt,
                st.u.nrows()
            );
            Ok(model.coefficients(&st.x))
        }
        _ => Ok(a.to_vec()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{real_diag, real_mat, residual, spectral_norm};
    use crate::sdp::{build_lmi, ipm_solve, SdpSettings};

    fn ipm(p: &Problem) -> (Vec<C64>, Mat) {
        let (sol, _) = ipm_solve(&build_lmi(p), &SdpSettings::default()).unwrap();
        (sol.coefficients, sol.dual)
    }

    fn stationarity(p: &Problem, a: &[C64]) -> f64 {
        let model = Model::new(p);
        let x: Vec<f64> = a.iter().map(|z| z.re).collect();
        let eig = Spectrum::of(&model.dilation(&x));
        let v = eig.vecs.column(0).into_owned();
        (0..model.dirs.len())
            .map(|j| v.dotc(&(model.derivative(j) * &v)).re.abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn smooth_minimum_is_sharpened() {
        // σ₁ simple at the optimum, so the IPM leaves a visible first-order error
        let y = real_mat(
            2,
            2,
            &[
                1.3388939288962705,
                -1.1961047258396915,
                0.05081356735926581,
                -1.0502948279914854,
            ],
        );
        let x = real_mat(
            2,
            2,
            &[
                -0.17511719655115254,
                -0.09373467348571567,
                -0.3250511467248813,
                0.2086113015295823,
            ],
        );
        let p = Problem::new(FieldTag::Real, y, vec![x]).unwrap();
        let (a0, dual) = ipm(&p);
        let a = refine(&p, &a0, &dual).unwrap();
        assert!(
            stationarity(&p, &a) < 1e-12,
            "{} -> {}",
            stationarity(&p, &a0),
            stationarity(&p, &a)
        );
        let before = spectral_norm(&residual(&p, &a0).unwrap()).unwrap();
        let after = spectral_norm(&residual(&p, &a).unwrap()).unwrap();
        assert!(after <= before * (1.0 + 1e-12));
    }

    #[test]
    fn sharp_minimum_keeps_its_value() {
        let p = Problem::new(
            FieldTag::Real,
            real_diag(&[1.0, -1.0]),
            vec![real_diag(&[1.0, 1.0])],
        )
        .unwrap();
        let (a0, dual) = ipm(&p);
        let a = refine(&p, &a0, &dual).unwrap();
        assert!(a[0].norm() < 1e-8);
        assert!((spectral_norm(&residual(&p, &a).unwrap()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn basis_is_orthonormal() {
        for (field, d, len) in [(FieldTag::Real, 3, 6), (FieldTag::Complex, 3, 9)] {
            let b = hermitian_basis(field, d);
            assert_eq!(b.len(), len);
            for (i, x) in b.iter().enumerate() {
                for (j, y) in b.iter().enumerate() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((re_inner(x, y) - want).abs() < 1e-15);
                }
            }
        }
    }
}
