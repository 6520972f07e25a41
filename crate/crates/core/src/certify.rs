//! Optimality certificates: weights `ωⱼ` and unit pairs `(uⱼ, vⱼ)` with
//! `(Y − X*)vⱼ = σ₁uⱼ` and `Σ ωⱼ uⱼᴴXᵢvⱼ = 0` for every basis matrix, the
//! aggregated rank-ℓ dual matrix, and the semidefinite dual witness.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::{build_grams, caratheodory_reduce, field_point, hull_membership_exact};
use crate::linalg::{
    default_rank_tol, hermitian_eigen, nuclear_norm, residual, spectral_norm, CVec, FieldTag, Mat,
    Problem, Solution, C64, DEFAULT_CLUSTER_RTOL,
};
use crate::sdp::SdpSettings;

#[derive(Debug, Clone, PartialEq)]
pub struct SingerCertificate {
    pub field: FieldTag,
    pub weights: Vec<f64>,
    /// Unit left vectors, `uⱼ = (Y − X*)vⱼ / σ₁`.
    pub u: Vec<CVec>,
    /// Unit vectors of the maximal right singular subspace.
    pub v: Vec<CVec>,
    pub sigma1: f64,
}

impl SingerCertificate {
    pub fn ell(&self) -> usize {
        self.weights.len()
    }
}

/// Largest admissible number of rank-one terms.
pub fn max_ell(field: FieldTag, k: usize) -> usize {
    match field {
        FieldTag::Real => k + 1,
        FieldTag::Complex => 2 * k + 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifySettings {
    pub cluster_rtol: f64,
    /// Tolerance of the final [`verify_certificate`] call.
    pub verify_tol: f64,
    pub sdp: SdpSettings,
}

impl Default for CertifySettings {
    fn default() -> Self {
        Self {
            cluster_rtol: DEFAULT_CLUSTER_RTOL,
            verify_tol: 1e-6,
            sdp: SdpSettings::default(),
        }
    }
}

const NOT_FOUND: &str = "certificate not found; increase cluster_rtol or solver accuracy";

/// `min ‖Σ wⱼpⱼ‖` subject to `Σ wⱼ = 1` (no sign constraint). `None` when
/// the KKT system is singular.
fn affine_least_squares(points: &[&Vec<f64>]) -> Option<(Vec<f64>, f64)> {
    let l = points.len();
    let d = points[0].len();
    let p = DMatrix::from_fn(d, l, |r, c| points[c][r]);
    let mut kkt = DMatrix::<f64>::zeros(l + 1, l + 1);
    kkt.view_mut((0, 0), (l, l))
        .copy_from(&(p.transpose() * &p));
    for j in 0..l {
        kkt[(j, l)] = 1.0;
        kkt[(l, j)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(l + 1);
    rhs[l] = 1.0;
    let sol = kkt.lu().solve(&rhs)?;
    let w: Vec<f64> = sol.iter().take(l).copied().collect();
    if w.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let r = &p * DVector::from_column_slice(&w);
    Some((w, r.norm()))
}

/// Among subsets of the support, the smallest one whose affine least-squares
/// weights are positive and whose residual is within `accept` of zero.
fn smallest_support(points: &[Vec<f64>], weights: &[f64], accept: f64) -> (Vec<usize>, Vec<f64>) {
    let l = points.len();
    if l > 12 {
        return ((0..l).collect(), weights.to_vec());
    }
    for size in 1..=l {
        let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
        for mask in 0u32..(1 << l) {
            if mask.count_ones() as usize != size {
                continue;
            }
            let idx: Vec<usize> = (0..l).filter(|&j| mask & (1 << j) != 0).collect();
            let pts: Vec<&Vec<f64>> = idx.iter().map(|&j| &points[j]).collect();
            let Some((w, res)) = affine_least_squares(&pts) else {
                continue;
            };
            if w.iter().all(|&x| x > 0.0)
                && res <= accept
                && best.as_ref().is_none_or(|b| res < b.0)
            {
                best = Some((res, idx, w));
            }
        }
        if let Some((_, idx, w)) = best {
            let total: f64 = w.iter().sum();
            return (idx, w.iter().map(|x| x / total).collect());
        }
    }
    ((0..l).collect(), weights.to_vec())
}

/// Builds a certificate for an optimal solution from the density matrix
/// that places `0` in the convex hull of the field of the restricted grams
/// `VᴴRᴴXᵢV`, followed by Carathéodory reduction.
pub fn extract_certificate(
    p: &Problem,
    s: &Solution,
    settings: &CertifySettings,
) -> Result<SingerCertificate> {
    let grams = build_grams(p, s)?;
    let r = &grams.residual;
    let sigma1 = spectral_norm(r)?;
    if sigma1 <= default_rank_tol(p) {
        return Err(Error::DegenerateInput(
            "residual is numerically zero: Y lies in the span of the basis".into(),
        ));
    }
    let (basis, restricted) = grams.restricted(settings.cluster_rtol)?;
    let field = p.field();
    let d = restricted.len() * field.real_dim();
    let target = vec![0.0; d];
    let hull_tol = 0.5 * settings.verify_tol * sigma1;
    let hull = hull_membership_exact(field, &restricted, &target, hull_tol, &settings.sdp)?;
    let Some(combo) = hull.combination else {
        log::debug!(
            "restricted hull test: {:?}, distance {:.3e}",
            hull.status,
            hull.distance
        );
        return Err(Error::CertificateNotFound(NOT_FOUND.into()));
    };
    let points: Vec<Vec<f64>> = combo
        .vectors
        .iter()
        .map(|xi| field_point(field, &restricted, xi))
        .collect();
    let reduced = caratheodory_reduce(&points, &combo.weights, d)?;
    let scale = 1.0 + points.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max);
    let current: f64 = {
        let mut acc = vec![0.0; d];
        for (pt, w) in reduced.points.iter().zip(&reduced.weights) {
            acc.iter_mut().zip(pt).for_each(|(a, x)| *a += w * x);
        }
        acc.iter().map(|x| x * x).sum::<f64>().sqrt()
    };
    let accept = (2.0 * current).max(1e-10 * scale);
    let (support, weights) = smallest_support(&reduced.points, &reduced.weights, accept);

    let mut u = Vec::with_capacity(support.len());
    let mut v = Vec::with_capacity(support.len());
    for &j in &support {
        let xi = &combo.vectors[reduced.indices[j]];
        let vj = &basis * xi;
        let vj = &vj / C64::new(vj.norm(), 0.0);
        let rv = r * &vj;
        let norm = rv.norm();
        if norm == 0.0 {
            return Err(Error::CertificateNotFound(NOT_FOUND.into()));
        }
        u.push(rv / C64::new(norm, 0.0));
        v.push(vj);
    }
    let cert = SingerCertificate {
        field,
        weights,
        u,
        v,
        sigma1,
    };
    let report = verify_certificate(p, s, &cert, settings.verify_tol)?;
    if !report.passed() {
        log::debug!("extracted certificate fails verification: {report:?}");
        return Err(Error::CertificateNotFound(NOT_FOUND.into()));
    }
    Ok(cert)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub tol: f64,
    pub sigma1: f64,
    /// `|Σⱼ ωⱼ uⱼᴴXᵢvⱼ|` for each basis matrix.
    pub orthogonality: Vec<f64>,
    /// `Re uⱼᴴ(Y − X*)vⱼ` for each pair.
    pub alignment: Vec<f64>,
    pub weight_sum: f64,
    pub min_weight: f64,
    /// Largest deviation of `‖uⱼ‖` or `‖vⱼ‖` from one.
    pub norm_error: f64,
    pub ell: usize,
    pub max_ell: usize,
    pub orthogonality_ok: bool,
    pub alignment_ok: bool,
    pub invariants_ok: bool,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.orthogonality_ok && self.alignment_ok && self.invariants_ok
    }
}

pub fn verify_certificate(
    p: &Problem,
    s: &Solution,
    c: &SingerCertificate,
    tol: f64,
) -> Result<CertificateReport> {
    let r = residual(p, &s.a)?;
    let sigma1 = spectral_norm(&r)?;
    let n = p.n();
    let shapes_ok = c.u.len() == c.ell()
        && c.v.len() == c.ell()
        && c.u.iter().chain(&c.v).all(|x| x.len() == n);
    if !shapes_ok {
        return Err(Error::InvalidInput(
            "certificate vectors do not match the problem".into(),
        ));
    }
    let orthogonality: Vec<f64> = p
        .basis()
        .iter()
        .map(|x| {
            c.weights
                .iter()
                .zip(c.u.iter().zip(&c.v))
                .map(|(w, (u, v))| u.dotc(&(x * v)) * *w)
                .sum::<C64>()
                .norm()
        })
        .collect();
    let alignment: Vec<f64> =
        c.u.iter()
            .zip(&c.v)
            .map(|(u, v)| u.dotc(&(&r * v)).re)
            .collect();
    let weight_sum: f64 = c.weights.iter().sum();
    let min_weight = c.weights.iter().copied().fold(f64::INFINITY, f64::min);
    let norm_error =
        c.u.iter()
            .chain(&c.v)
            .map(|x| (x.norm() - 1.0).abs())
            .fold(0.0, f64::max);
    let max_ell = max_ell(p.field(), p.k());
    let ell = c.ell();
    Ok(CertificateReport {
        tol,
        sigma1,
        orthogonality_ok: orthogonality.iter().all(|&x| x <= tol),
        alignment_ok: alignment.iter().all(|&a| a >= sigma1 * (1.0 - tol)),
        invariants_ok: ell >= 1
            && ell <= max_ell
            && min_weight > 0.0
            && (weight_sum - 1.0).abs() <= 1e-12
            && norm_error <= 1e-10,
        orthogonality,
        alignment,
        weight_sum,
        min_weight,
        norm_error,
        ell,
        max_ell,
    })
}

/// `F = Σ ωⱼ uⱼvⱼᴴ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedDual {
    pub f: Mat,
}

impl AggregatedDual {
    pub fn nuclear_norm(&self) -> Result<f64> {
        nuclear_norm(&self.f)
    }

    /// `⟨F, M⟩ = Re trace(FᴴM)`.
    pub fn pairing(&self, m: &Mat) -> f64 {
        crate::linalg::inner(&self.f, m).re
    }
}

pub fn aggregate_dual(c: &SingerCertificate) -> AggregatedDual {
    let n = c.u.first().map_or(0, |u| u.len());
    let mut f = Mat::zeros(n, n);
    for (w, (u, v)) in c.weights.iter().zip(c.u.iter().zip(&c.v)) {
        f += (u * v.adjoint()) * C64::new(*w, 0.0);
    }
    AggregatedDual { f }
}

/// `Z = [[C, Bᵀ], [B, D]] = ½ Σ ωⱼ [uⱼ; vⱼ][uⱼ; vⱼ]ᵀ`, real problems only.
#[derive(Debug, Clone, PartialEq)]
pub struct DualWitness {
    pub z: DMatrix<f64>,
}

impl DualWitness {
    pub fn n(&self) -> usize {
        self.z.nrows() / 2
    }

    /// Lower-left block `B = ½ Σ ωⱼ vⱼuⱼᵀ`.
    pub fn b(&self) -> DMatrix<f64> {
        let n = self.n();
        self.z.view((n, 0), (n, n)).into_owned()
    }

    pub fn c(&self) -> DMatrix<f64> {
        let n = self.n();
        self.z.view((0, 0), (n, n)).into_owned()
    }

    pub fn d(&self) -> DMatrix<f64> {
        let n = self.n();
        self.z.view((n, n), (n, n)).into_owned()
    }
}

pub fn build_dual_witness(c: &SingerCertificate) -> Result<DualWitness> {
    if !c.field.is_real() {
        return Err(Error::Unsupported(
            "the semidefinite dual witness is only built for real problems".into(),
        ));
    }
    let n = c.u.first().map_or(0, |u| u.len());
    let mut z = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for (w, (u, v)) in c.weights.iter().zip(c.u.iter().zip(&c.v)) {
        let stacked = DVector::from_iterator(2 * n, u.iter().chain(v.iter()).map(|x| x.re));
        z += &stacked * stacked.transpose() * (0.5 * w);
    }
    Ok(DualWitness { z })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualReport {
    pub tol: f64,
    pub lambda_min: f64,
    pub trace: f64,
    /// `|trace(BXᵢ)|` per basis matrix.
    pub orthogonality: Vec<f64>,
    /// `2·trace(BY)`.
    pub objective: f64,
    pub sigma1: f64,
    pub psd_ok: bool,
    pub trace_ok: bool,
    pub orthogonality_ok: bool,
    pub objective_ok: bool,
}

impl DualReport {
    pub fn passed(&self) -> bool {
        self.psd_ok && self.trace_ok && self.orthogonality_ok && self.objective_ok
    }
}

pub fn verify_dual_witness(
    p: &Problem,
    s: &Solution,
    w: &DualWitness,
    tol: f64,
) -> Result<DualReport> {
    if !p.field().is_real() {
        return Err(Error::Unsupported(
            "dual witness checks need a real problem".into(),
        ));
    }
    if w.z.shape() != (2 * p.n(), 2 * p.n()) {
        return Err(Error::InvalidInput(
            "dual witness does not match the problem size".into(),
        ));
    }
    let sigma1 = spectral_norm(&residual(p, &s.a)?)?;
    let b = w.b();
    let tr_b = |m: &Mat| (&b * m.map(|z| z.re)).trace();
    let zc = w.z.map(|x| C64::new(x, 0.0));
    let lambda_min = hermitian_eigen(&zc).0[0];
    let trace = w.z.trace();
    let orthogonality: Vec<f64> = p.basis().iter().map(|x| tr_b(x).abs()).collect();
    let objective = 2.0 * tr_b(p.y());
    Ok(DualReport {
        tol,
        lambda_min,
        trace,
        psd_ok: lambda_min >= -tol,
        trace_ok: (trace - 1.0).abs() <= tol,
        orthogonality_ok: orthogonality.iter().all(|&x| x <= tol),
        objective_ok: (objective - sigma1).abs() <= tol,
        orthogonality,
        objective,
        sigma1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{real_diag, Solution};
    use crate::problems::{
        ideal_arnoldi_problem, ideal_gmres_problem, jordan_block, lau_riha_problem,
    };
    use crate::sdp::solve_min_spectral;

    fn unit(n: usize, i: usize) -> CVec {
        let mut v = CVec::zeros(n);
        v[i] = C64::new(1.0, 0.0);
        v
    }

    fn parallel(a: &CVec, b: &CVec) -> bool {
        (a.dotc(b).norm() - 1.0).abs() < 1e-8
    }

    #[test]
    fn singular_diag_at_zero() {
        let p = ideal_gmres_problem(&real_diag(&[0.0, 1.0, 2.0]), 2).unwrap();
        let s = Solution::from_real(&p, &[0.0, 0.0]).unwrap();
        let c = extract_certificate(&p, &s, &CertifySettings::default()).unwrap();
        assert_eq!(c.ell(), 1);
        assert!(parallel(&c.v[0], &unit(3, 0)));
        assert!(parallel(&c.u[0], &unit(3, 0)));
        assert!((c.weights[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn jordan_certificate_is_rank_one() {
        let j = jordan_block(C64::new(1.0, 0.0), 3).unwrap();
        let p = ideal_arnoldi_problem(&j, 2).unwrap();
        let (s, _) = solve_min_spectral(&p, &SdpSettings::default()).unwrap();
        let c = extract_certificate(&p, &s, &CertifySettings::default()).unwrap();
        assert_eq!(c.ell(), 1);
        assert!(parallel(&c.v[0], &unit(3, 2)));
        assert!(parallel(&c.u[0], &unit(3, 0)));
        let f = aggregate_dual(&c);
        assert!((f.nuclear_norm().unwrap() - 1.0).abs() < 1e-12);
        let w = build_dual_witness(&c).unwrap();
        let b = w.b();
        assert!((b[(2, 0)].abs() - 0.5).abs() < 1e-7);
    }

    #[test]
    fn lau_riha_certificate_and_dual() {
        let p = lau_riha_problem();
        let (s, _) = solve_min_spectral(&p, &SdpSettings::default()).unwrap();
        let c = extract_certificate(&p, &s, &CertifySettings::default()).unwrap();
        let rep = verify_certificate(&p, &s, &c, 1e-6).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert!(c.ell() <= 3);
        let f = aggregate_dual(&c);
        let r = residual(&p, &s.a).unwrap();
        assert!((f.pairing(&r) - 0.294068f64.sqrt()).abs() < 1e-5);
        assert!((f.nuclear_norm().unwrap() - 1.0).abs() < 1e-6);
        let w = build_dual_witness(&c).unwrap();
        let d = verify_dual_witness(&p, &s, &w, 1e-7).unwrap();
        assert!(d.passed(), "{d:?}");
    }

    #[test]
    fn negative_certificates_fail() {
        let p = ideal_gmres_problem(&real_diag(&[0.0, 1.0, 2.0]), 2).unwrap();
        let s = Solution::from_real(&p, &[0.0, 0.0]).unwrap();
        // X* = 0, R = I: pairs with u ≠ Rv fail the alignment check
        let bad = SingerCertificate {
            field: FieldTag::Real,
            weights: vec![0.5, 0.5],
            u: vec![unit(3, 0), unit(3, 1)],
            v: vec![unit(3, 0), unit(3, 2)],
            sigma1: 1.0,
        };
        let rep = verify_certificate(&p, &s, &bad, 1e-6).unwrap();
        assert!(!rep.alignment_ok);

        let good = extract_certificate(&p, &s, &CertifySettings::default()).unwrap();
        let mut w = build_dual_witness(&good).unwrap();
        w.z *= 2.0;
        assert!(!verify_dual_witness(&p, &s, &w, 1e-8).unwrap().trace_ok);
        let mut w = build_dual_witness(&good).unwrap();
        let n = w.n();
        w.z.view_mut((n, 0), (n, n)).fill(0.0);
        w.z.view_mut((0, n), (n, n)).fill(0.0);
        let rep = verify_dual_witness(&p, &s, &w, 1e-8).unwrap();
        assert!((rep.objective - rep.sigma1).abs() > 0.99);
    }

    #[test]
    fn perturbed_vector_degrades_second_order() {
        let j = jordan_block(C64::new(1.0, 0.0), 3).unwrap();
        let p = ideal_arnoldi_problem(&j, 2).unwrap();
        let s = Solution::from_real(&p, &[-1.0, 2.0]).unwrap();
        let mut c = extract_certificate(&p, &s, &CertifySettings::default()).unwrap();
        let mut v = c.v[0].clone();
        v[1] += C64::new(1e-3, 0.0);
        c.v[0] = &v / C64::new(v.norm(), 0.0);
        let rep = verify_certificate(&p, &s, &c, 1e-8).unwrap();
        assert!(!rep.alignment_ok);
        let loss = 1.0 - rep.alignment[0] / rep.sigma1;
        assert!(loss > 1e-8 && loss < 1e-5, "{loss}");
    }

    #[test]
    fn complex_witness_is_unsupported() {
        let c = SingerCertificate {
            field: FieldTag::Complex,
            weights: vec![1.0],
            u: vec![unit(2, 0)],
            v: vec![unit(2, 0)],
            sigma1: 1.0,
        };
        assert!(matches!(build_dual_witness(&c), Err(Error::Unsupported(_))));
    }
}
