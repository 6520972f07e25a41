//! The worst-case lower bound `max_{‖v‖=1} min_a ‖(Y − X(a))v‖₂`, diagnosis
//! of the gap to the min-max value, and the doubled problem `I₂ ⊗ ·`.

use rayon::prelude::*;

use crate::certify::SingerCertificate;
use crate::error::{invalid, Result};
use crate::field::{
    build_grams, hull_membership_exact, point_membership_field, seeded_unit, MembershipStatus,
    SearchSettings,
};
use crate::linalg::{
    kron_i2, maximal_right_singular_subspace, residual, spectral_norm, svd, CVec, FieldTag, Mat,
    Problem, Solution, C64, DEFAULT_CLUSTER_RTOL,
};
use crate::sdp::SdpSettings;

/// Inner least-squares solution for a fixed vector.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerMin {
    pub a: Vec<C64>,
    /// `‖(Y − X(a))v‖₂`.
    pub g: f64,
    /// Smallest singular value of `[X₁v … X_kv]` fell below the threshold.
    pub rank_deficient: bool,
    /// `‖[X₁v … X_kv]ᴴ r‖` with `r` the residual vector.
    pub orthogonality: f64,
}

const RANK_TOL: f64 = 1e-10;

/// Minimum-norm least-squares coefficients for `min_a ‖Yv − Σ aᵢXᵢv‖₂`,
/// over ℝ for real problems.
pub fn inner_min(p: &Problem, v: &CVec) -> Result<InnerMin> {
    if v.len() != p.n() {
        return invalid(format!("vector has length {}, expected {}", v.len(), p.n()));
    }
    let k = p.k();
    let cols: Vec<CVec> = p.basis().iter().map(|x| x * v).collect();
    let b = p.y() * v;
    let (m, rhs) = match p.field() {
        // real coefficients: stack real and imaginary parts
        FieldTag::Real => {
            let n = v.len();
            let m = Mat::from_fn(2 * n, k, |i, j| {
                let z = cols[j][i % n];
                C64::new(if i < n { z.re } else { z.im }, 0.0)
            });
            let rhs = CVec::from_fn(2 * n, |i, _| {
                let z = b[i % n];
                C64::new(if i < n { z.re } else { z.im }, 0.0)
            });
            (m, rhs)
        }
        FieldTag::Complex => (Mat::from_columns(&cols), b.clone()),
    };
    let smax = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let (a, rank_deficient) = if smax == 0.0 {
        (vec![C64::new(0.0, 0.0); k], true)
    } else {
        let s = svd(&m)?;
        let s1 = s.sigma1();
        let mut a = CVec::zeros(k);
        let mut deficient = s.singular_values.len() < k;
        for (j, &sj) in s.singular_values.iter().enumerate() {
            if sj <= RANK_TOL * s1.max(1.0) {
                deficient = true;
                continue;
            }
            let coeff = s.u.column(j).dotc(&rhs) / C64::new(sj, 0.0);
            a += s.v.column(j) * coeff;
        }
        let a: Vec<C64> = match p.field() {
            FieldTag::Real => a.iter().map(|z| C64::new(z.re, 0.0)).collect(),
            FieldTag::Complex => a.iter().copied().collect(),
        };
        (a, deficient)
    };
    let mut r = b;
    for (ai, ci) in a.iter().zip(&cols) {
        r -= ci * *ai;
    }
    let orthogonality = cols
        .iter()
        .map(|c| {
            let z = c.dotc(&r);
            if p.field().is_real() {
                z.re * z.re
            } else {
                z.norm_sqr()
            }
        })
        .sum::<f64>()
        .sqrt();
    Ok(InnerMin {
        a,
        g: r.norm(),
        rank_deficient,
        orthogonality,
    })
}

/// `f(v) = min_a ‖(Y − X(a))v‖₂²` (defined for any `v`, not only unit ones).
pub fn objective(p: &Problem, v: &CVec) -> Result<f64> {
    Ok(inner_min(p, v)?.g.powi(2))
}

/// `2(Y − X(a(v)))ᴴ(Y − X(a(v)))v`, the gradient of [`objective`] in the
/// real coordinates of `v` (real and imaginary parts as one complex vector).
pub fn danskin_gradient(p: &Problem, v: &CVec) -> Result<CVec> {
    let inner = inner_min(p, v)?;
    let r = residual(p, &inner.a)?;
    Ok((r.adjoint() * (&r * v)) * C64::new(2.0, 0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxMinSettings {
    pub starts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop when `‖Riemannian gradient‖ ≤ grad_tol·(1 + f)`.
    pub grad_tol: f64,
}

impl Default for MaxMinSettings {
    fn default() -> Self {
        Self {
            starts: 64,
            seed: 42,
            max_iter: 500,
            grad_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxMinResult {
    pub v_star: CVec,
    /// `min_a ‖(Y − X(a))v_star‖₂`, a certified lower bound on the min-max value.
    pub value: f64,
    pub a_of_v: Vec<C64>,
    pub starts_used: usize,
    pub converged_starts: usize,
    pub seed: u64,
}

struct Ascent {
    v: CVec,
    value: f64,
    converged: bool,
}

fn unitize(v: &CVec) -> Option<CVec> {
    let n = v.norm();
    (n.is_finite() && n > 0.0).then(|| v / C64::new(n, 0.0))
}

fn project_field(field: FieldTag, v: CVec) -> CVec {
    match field {
        FieldTag::Real => v.map(|z| C64::new(z.re, 0.0)),
        FieldTag::Complex => v,
    }
}

/// Projected gradient ascent on `f(v)` over the unit sphere with
/// backtracking (Armijo) steps and normalisation as retraction.
fn ascend(p: &Problem, start: &CVec, settings: &MaxMinSettings) -> Result<Option<Ascent>> {
    let Some(mut v) = unitize(&project_field(p.field(), start.clone())) else {
        return Ok(None);
    };
    let mut cur = inner_min(p, &v)?;
    let mut f = cur.g * cur.g;
    let mut step = 1.0 / (1.0 + f);
    let mut converged = false;
    let mut noted = false;
    for _ in 0..settings.max_iter {
        if cur.rank_deficient && !noted {
            log::debug!("inner least squares is rank deficient; using the minimum-norm solution");
            noted = true;
        }
        let r = residual(p, &cur.a)?;
        let grad = (r.adjoint() * (&r * &v)) * C64::new(2.0, 0.0);
        let radial = v.dotc(&grad).re;
        let rg = project_field(p.field(), &grad - &v * C64::new(radial, 0.0));
        let gn2 = rg.norm_squared();
        if gn2.sqrt() <= settings.grad_tol * (1.0 + f) {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let Some(cand) = unitize(&(&v + &rg * C64::new(step, 0.0))) else {
                step *= 0.5;
                continue;
            };
            let next = inner_min(p, &cand)?;
            let fc = next.g * next.g;
            if fc >= f + 1e-4 * step * gn2 {
                v = cand;
                cur = next;
                f = fc;
                accepted = true;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no ascent possible at working precision: a numerical stationary point
            converged = gn2.sqrt() <= 1e-6 * (1.0 + f);
            break;
        }
    }
    Ok(Some(Ascent {
        value: cur.g,
        v,
        converged,
    }))
}

/// Multistart ascent: `hints` are tried first, then `settings.starts`
/// random unit vectors derived from `settings.seed`. The reported value is
/// the exact inner minimum at the best vector found.
pub fn maxmin_solve(
    p: &Problem,
    hints: &[CVec],
    settings: &MaxMinSettings,
) -> Result<MaxMinResult> {
    if hints.iter().any(|h| h.len() != p.n()) {
        return invalid("start vector has the wrong length");
    }
    let mut starts: Vec<CVec> = hints.to_vec();
    starts.extend(
        (0..settings.starts as u64).map(|i| seeded_unit(p.field(), p.n(), settings.seed, i)),
    );
    if starts.is_empty() {
        return invalid("no starting vectors");
    }
    let runs: Vec<Option<Ascent>> = starts
        .par_iter()
        .map(|s| ascend(p, s, settings))
        .collect::<Result<_>>()?;
    let converged_starts = runs.iter().flatten().filter(|r| r.converged).count();
    let pick = |only_converged: bool| {
        runs.iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_ref().map(|r| (i, r)))
            .filter(|(_, r)| r.converged || !only_converged)
            .max_by(|(i, a), (j, b)| a.value.total_cmp(&b.value).then(j.cmp(i)))
            .map(|(_, r)| r)
    };
    let best = match pick(true) {
        Some(b) => b,
        None => {
            log::warn!("no ascent start converged; reporting the best unconverged start");
            pick(false).ok_or_else(|| crate::Error::Numerical("all starts degenerate".into()))?
        }
    };
    // recompute the bound from scratch at the chosen vector
    let check = inner_min(p, &best.v)?;
    Ok(MaxMinResult {
        v_star: best.v.clone(),
        value: check.g,
        a_of_v: check.a,
        starts_used: starts.len(),
        converged_starts,
        seed: settings.seed,
    })
}

/// Right singular vectors of `Y − X(a)`, largest first.
pub fn solution_starts(p: &Problem, s: &Solution) -> Result<Vec<CVec>> {
    let r = residual(p, &s.a)?;
    let sv = svd(&r)?;
    Ok((0..sv.v.ncols().min(16))
        .map(|j| sv.v.column(j).into_owned())
        .collect())
}

pub fn certificate_starts(c: &SingerCertificate) -> Vec<CVec> {
    c.v.clone()
}

/// `[√α x; √(1−α) y]` from the two heaviest certificate pairs (weights
/// renormalised), a start for the doubled problem.
pub fn doubled_start(c: &SingerCertificate) -> Option<CVec> {
    let mut order: Vec<usize> = (0..c.ell()).collect();
    order.sort_by(|&i, &j| c.weights[j].total_cmp(&c.weights[i]).then(i.cmp(&j)));
    let first = *order.first()?;
    let n = c.v[first].len();
    let (x, wx) = (&c.v[first], c.weights[first]);
    let (y, wy) = match order.get(1) {
        Some(&j) => (c.v[j].clone(), c.weights[j]),
        None => (CVec::zeros(n), 0.0),
    };
    if c.ell() > 2 {
        log::debug!(
            "certificate has {} terms; doubled start uses the two heaviest",
            c.ell()
        );
    }
    let alpha = wx / (wx + wy);
    let mut w = CVec::zeros(2 * n);
    w.rows_mut(0, n)
        .copy_from(&(x * C64::new(alpha.sqrt(), 0.0)));
    w.rows_mut(n, n)
        .copy_from(&(y * C64::new((1.0 - alpha).sqrt(), 0.0)));
    Some(w)
}

/// `Y' = I₂ ⊗ Y`, `X'ᵢ = I₂ ⊗ Xᵢ`.
pub fn double_problem(p: &Problem) -> Result<Problem> {
    Problem::new(
        p.field(),
        kron_i2(p.y()),
        p.basis().iter().map(kron_i2).collect(),
    )
}

/// Known sufficient conditions for equality of the max-min and min-max
/// values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EqualityConditions {
    pub single_basis: bool,
    pub simple_top_singular_value: bool,
    pub real_pair_wide_subspace: bool,
    /// Dimension of the maximal right singular subspace.
    pub sigma_dim: usize,
}

impl EqualityConditions {
    pub fn any(&self) -> bool {
        self.single_basis || self.simple_top_singular_value || self.real_pair_wide_subspace
    }
}

pub fn check_equality_conditions(
    p: &Problem,
    s: &Solution,
    cluster_rtol: f64,
) -> Result<EqualityConditions> {
    let r = residual(p, &s.a)?;
    let sigma_dim = maximal_right_singular_subspace(&r, cluster_rtol)?.ncols();
    Ok(EqualityConditions {
        single_basis: p.k() == 1,
        simple_top_singular_value: sigma_dim == 1,
        real_pair_wide_subspace: p.k() == 2 && p.field().is_real() && sigma_dim >= 3,
        sigma_dim,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EqualityStatus {
    Equal,
    StrictGapSuspected,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapSettings {
    pub tol: f64,
    pub cluster_rtol: f64,
    pub search: SearchSettings,
    pub sdp: SdpSettings,
}

impl Default for GapSettings {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            cluster_rtol: DEFAULT_CLUSTER_RTOL,
            search: SearchSettings::default(),
            sdp: SdpSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub minmax: f64,
    pub maxmin: f64,
    pub gap: f64,
    pub relative_gap: f64,
    pub status: EqualityStatus,
    pub conditions: EqualityConditions,
    /// Outcome of the convex-hull test for `ρe₁`.
    pub hull_status: MembershipStatus,
    /// Unit `w` with `wᴴA_Yw = ρ` and `wᴴAᵢw = 0` within `tol`.
    pub witness: Option<CVec>,
    pub witness_residual: Option<f64>,
}

/// Classifies the gap between `‖Y − X*‖₂` and the max-min bound. Equality
/// is claimed only from a verified witness vector or a measured gap within
/// `tol`; hull membership alone never suffices.
pub fn diagnose_gap(
    p: &Problem,
    s: &Solution,
    mm: &MaxMinResult,
    settings: &GapSettings,
) -> Result<GapReport> {
    let grams = build_grams(p, s)?;
    let minmax = spectral_norm(&grams.residual)?;
    let maxmin = mm.value;
    let gap = minmax - maxmin;
    let relative_gap = gap / minmax.max(f64::MIN_POSITIVE);
    let conditions = check_equality_conditions(p, s, settings.cluster_rtol)?;

    let mats = grams.with_y();
    let target = grams.rho_target();
    let hull = hull_membership_exact(p.field(), &mats, &target, settings.tol, &settings.sdp)?;

    let mut hints = vec![mm.v_star.clone()];
    let sigma = maximal_right_singular_subspace(&grams.residual, settings.cluster_rtol)?;
    hints.extend((0..sigma.ncols()).map(|j| sigma.column(j).into_owned()));
    let search = SearchSettings {
        tol: settings.tol,
        ..settings.search.clone()
    };
    let found = point_membership_field(p.field(), &mats, &target, &hints, &search)?;
    let inside = found.is_inside();
    let witness = found
        .combination
        .filter(|_| inside)
        .map(|c| c.vectors[0].clone())
        .filter(|w| witness_holds(&mats, grams.rho, w, settings.tol));

    let status = if witness.is_some() || relative_gap <= settings.tol {
        EqualityStatus::Equal
    } else if hull.status == MembershipStatus::Inside && relative_gap > 100.0 * settings.tol {
        EqualityStatus::StrictGapSuspected
    } else {
        EqualityStatus::Inconclusive
    };
    Ok(GapReport {
        minmax,
        maxmin,
        gap,
        relative_gap,
        status,
        conditions,
        hull_status: hull.status,
        witness_residual: witness.as_ref().map(|_| found.distance),
        witness,
    })
}

/// `|wᴴA_Yw − ρ| ≤ tol` and `|wᴴAᵢw| ≤ tol` for every basis gram.
pub fn witness_holds(mats: &[Mat], rho: f64, w: &CVec, tol: f64) -> bool {
    let Some((first, rest)) = mats.split_first() else {
        return false;
    };
    (w.norm() - 1.0).abs() <= 1e-10
        && (w.dotc(&(first * w)) - C64::new(rho, 0.0)).norm() <= tol
        && rest.iter().all(|a| w.dotc(&(a * w)).norm() <= tol)
}
