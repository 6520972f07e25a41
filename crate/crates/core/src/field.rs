//! Joint field of values `{(vᴴA₁v, …, vᴴA_kv) : ‖v‖ = 1}` of several
//! matrices: sampling, exact convex-hull membership via density matrices,
//! a multistart search for membership in the (non-convex) set itself,
//! Carathéodory reduction and point-cloud export.
//!
//! Points are real vectors. Over ℝ a coordinate is `vᵀAv`, which only sees
//! the symmetric part of `A`; over ℂ each matrix contributes the real and
//! imaginary part of `vᴴAv` as two interleaved coordinates.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::linalg::{
    herm_part, herm_split, hermitian_eigen, lambda_min_herm, maximal_right_singular_subspace,
    quad_form, real_svd, residual, CVec, FieldTag, Mat, Problem, Solution, C64,
};
use crate::sdp::{density_fit, SdpReport, SdpSettings};

/// Grams of a candidate solution: `A_Y = RᴴY`, `Aᵢ = RᴴXᵢ` with
/// `R = Y − Σ aᵢXᵢ`, and `ρ = ‖R‖₂²`.
#[derive(Debug, Clone)]
pub struct GramData {
    pub field: FieldTag,
    pub a_y: Mat,
    pub a: Vec<Mat>,
    pub rho: f64,
    pub residual: Mat,
    pub coefficients: Vec<C64>,
}

pub fn build_grams(p: &Problem, s: &Solution) -> Result<GramData> {
    let r = residual(p, &s.a)?;
    let rh = r.adjoint();
    Ok(GramData {
        field: p.field(),
        a_y: &rh * p.y(),
        a: p.basis().iter().map(|x| &rh * x).collect(),
        rho: s.sigma1 * s.sigma1,
        residual: r,
        coefficients: s.a.clone(),
    })
}

impl GramData {
    /// `max |A_Y − Σ aᵢAᵢ − RᴴR|`.
    pub fn identity_residual(&self) -> f64 {
        let mut m = self.a_y.clone() - self.residual.adjoint() * &self.residual;
        for (ai, gi) in self.coefficients.iter().zip(&self.a) {
            m -= gi * *ai;
        }
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `(A_Y, A₁, …, A_k)`.
    pub fn with_y(&self) -> Vec<Mat> {
        std::iter::once(self.a_y.clone())
            .chain(self.a.iter().cloned())
            .collect()
    }

    /// Orthonormal basis `V` of the maximal right singular subspace of `R`
    /// and the compressions `VᴴAᵢV`.
    pub fn restricted(&self, cluster_rtol: f64) -> Result<(Mat, Vec<Mat>)> {
        let v = maximal_right_singular_subspace(&self.residual, cluster_rtol)?;
        let vh = v.adjoint();
        let mats = self.a.iter().map(|g| &vh * g * &v).collect();
        Ok((v, mats))
    }

    /// `ρ·e₁` in the real coordinates of the field of `(A_Y, A₁, …, A_k)`.
    pub fn rho_target(&self) -> Vec<f64> {
        let mut t = vec![0.0; (self.a.len() + 1) * self.field.real_dim()];
        t[0] = self.rho;
        t
    }
}

fn check_mats(mats: &[Mat]) -> Result<usize> {
    let Some(first) = mats.first() else {
        return invalid("need at least one matrix");
    };
    let m = first.nrows();
    if m == 0 || mats.iter().any(|g| g.shape() != (m, m)) {
        return invalid("matrices must be square, non-empty and of equal size");
    }
    Ok(m)
}

/// Number of real coordinates of a point.
pub fn point_dim(field: FieldTag, count: usize) -> usize {
    count * field.real_dim()
}

/// Hermitian `G_j` with `point_j(v) = vᴴG_jv` for every unit `v` over the
/// field.
pub fn field_coordinates(field: FieldTag, mats: &[Mat]) -> Vec<Mat> {
    match field {
        FieldTag::Real => mats.iter().map(herm_part).collect(),
        FieldTag::Complex => mats
            .iter()
            .flat_map(|m| {
                let (h1, h2) = herm_split(m);
                [h1, h2]
            })
            .collect(),
    }
}

/// Point of the field generated by `v`, evaluated from the original
/// matrices.
pub fn field_point(field: FieldTag, mats: &[Mat], v: &CVec) -> Vec<f64> {
    let mut out = Vec::with_capacity(point_dim(field, mats.len()));
    for m in mats {
        let z = quad_form(m, v);
        out.push(z.re);
        if !field.is_real() {
            out.push(z.im);
        }
    }
    out
}

fn random_unit(field: FieldTag, m: usize, rng: &mut ChaCha8Rng) -> CVec {
    loop {
        let v = CVec::from_fn(m, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = if field.is_real() {
                0.0
            } else {
                StandardNormal.sample(rng)
            };
            C64::new(re, im)
        });
        let n = v.norm();
        if n > 1e-300 {
            return v / C64::new(n, 0.0);
        }
    }
}

/// Generator for sample `index` under master `seed`; independent of how the
/// samples are scheduled.
pub fn seeded_unit(field: FieldTag, m: usize, seed: u64, index: u64) -> CVec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    random_unit(field, m, &mut rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub field: FieldTag,
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    /// Unit vectors in the ambient space producing each point.
    pub generators: Vec<CVec>,
    pub seed: u64,
}

/// Samples the field at generators drawn uniformly from the unit sphere of
/// the ambient space, or of the column span of `restriction` (orthonormal
/// columns) when given.
pub fn sample_field(
    field: FieldTag,
    mats: &[Mat],
    restriction: Option<&Mat>,
    n_samples: usize,
    seed: u64,
) -> Result<PointCloud> {
    let m = check_mats(mats)?;
    if n_samples == 0 {
        return invalid("need at least one sample");
    }
    if let Some(v) = restriction {
        if v.nrows() != m || v.ncols() == 0 {
            return invalid("restriction basis does not fit the matrices");
        }
    }
    let inner_dim = restriction.map_or(m, |v| v.ncols());
    let generators: Vec<CVec> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let z = seeded_unit(field, inner_dim, seed, i);
            match restriction {
                Some(v) => v * z,
                None => z,
            }
        })
        .collect();
    let points = generators
        .par_iter()
        .map(|g| field_point(field, mats, g))
        .collect();
    Ok(PointCloud {
        field,
        dim: point_dim(field, mats.len()),
        points,
        generators,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MembershipStatus {
    Inside,
    Outside,
    Inconclusive,
}

/// Convex combination `Σ wⱼ point(vⱼ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Combination {
    pub weights: Vec<f64>,
    pub vectors: Vec<CVec>,
}

#[derive(Debug, Clone)]
pub struct MembershipResult {
    pub status: MembershipStatus,
    /// Distance from the target to the best point found (for hull tests,
    /// to the computed point of the hull).
    pub distance: f64,
    pub combination: Option<Combination>,
    /// Unit `c` with `cᵀp ≥ cᵀtarget + margin` for every point `p` of the set.
    pub separating: Option<Vec<f64>>,
    pub margin: Option<f64>,
    pub report: Option<SdpReport>,
}

impl MembershipResult {
    pub fn is_inside(&self) -> bool {
        self.status == MembershipStatus::Inside
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Decides whether `target` lies in the convex hull of the field. Inside
/// comes with a convex combination from the eigenvectors of the optimal
/// density matrix, Outside with a separating direction whose margin is
/// checked by a Hermitian eigenvalue computation.
pub fn hull_membership_exact(
    field: FieldTag,
    mats: &[Mat],
    target: &[f64],
    tol: f64,
    settings: &SdpSettings,
) -> Result<MembershipResult> {
    check_mats(mats)?;
    if target.len() != point_dim(field, mats.len()) {
        return invalid(format!(
            "target has {} coordinates, expected {}",
            target.len(),
            point_dim(field, mats.len())
        ));
    }
    let coords = field_coordinates(field, mats);
    let fit = density_fit(field, &coords, target, settings)?;
    let mut out = MembershipResult {
        status: MembershipStatus::Inconclusive,
        distance: fit.distance,
        combination: None,
        separating: None,
        margin: None,
        report: Some(fit.report.clone()),
    };
    if fit.distance <= tol {
        let (vals, vecs) = hermitian_eigen(&fit.density);
        let keep: Vec<usize> = (0..vals.len()).filter(|&j| vals[j] > 1e-10).collect();
        let total: f64 = keep.iter().map(|&j| vals[j]).sum();
        out.status = MembershipStatus::Inside;
        out.combination = Some(Combination {
            weights: keep.iter().map(|&j| vals[j] / total).collect(),
            vectors: keep.iter().map(|&j| vecs.column(j).into_owned()).collect(),
        });
        return Ok(out);
    }
    // separating direction from the residual of the nearest hull point
    let image: Vec<f64> = coords
        .iter()
        .map(|g| crate::linalg::inner(&fit.density, g).re)
        .collect();
    let r: Vec<f64> = image.iter().zip(target).map(|(a, b)| a - b).collect();
    let rn = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    if rn > 0.0 {
        let c: Vec<f64> = r.iter().map(|x| x / rn).collect();
        let mut combo = Mat::zeros(coords[0].nrows(), coords[0].nrows());
        for (ci, g) in c.iter().zip(&coords) {
            combo += g * C64::new(*ci, 0.0);
        }
        let ct: f64 = c.iter().zip(target).map(|(a, b)| a * b).sum();
        let margin = lambda_min_herm(&combo) - ct;
        if margin > tol {
            out.status = MembershipStatus::Outside;
            out.separating = Some(c);
            out.margin = Some(margin);
        }
    }
    Ok(out)
}

/// Settings for [`point_membership_field`].
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSettings {
    pub starts: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            starts: 64,
            seed: 42,
            tol: 1e-8,
            max_iter: 500,
        }
    }
}

fn to_real(field: FieldTag, w: &CVec) -> DVector<f64> {
    match field {
        FieldTag::Real => w.map(|z| z.re),
        FieldTag::Complex => {
            let m = w.len();
            DVector::from_fn(2 * m, |i, _| if i < m { w[i].re } else { w[i - m].im })
        }
    }
}

fn from_real(field: FieldTag, x: &DVector<f64>) -> CVec {
    match field {
        FieldTag::Real => x.map(|v| C64::new(v, 0.0)),
        FieldTag::Complex => {
            let m = x.len() / 2;
            CVec::from_fn(m, |i, _| C64::new(x[i], x[i + m]))
        }
    }
}

fn normalized(w: CVec) -> Option<CVec> {
    let n = w.norm();
    (n.is_finite() && n > 0.0).then(|| w / C64::new(n, 0.0))
}

/// Damped Gauss-Newton on the sphere for `min ‖point(w) − target‖`,
/// retracting by normalisation. Returns the final vector and residual.
fn sphere_least_squares(
    field: FieldTag,
    coords: &[Mat],
    target: &[f64],
    start: CVec,
    max_iter: usize,
    stop: f64,
) -> (CVec, f64) {
    let eval = |w: &CVec| -> Vec<f64> {
        coords
            .iter()
            .zip(target)
            .map(|(g, t)| quad_form(g, w).re - t)
            .collect()
    };
    let norm = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>().sqrt();
    let Some(mut w) = normalized(start) else {
        return (CVec::zeros(coords[0].nrows()), f64::INFINITY);
    };
    let mut r = eval(&w);
    let mut f = norm(&r);
    let mut mu = 1e-3;
    for _ in 0..max_iter {
        if f <= stop {
            break;
        }
        let x = to_real(field, &w);
        let nx = x.len();
        let mut jac = DMatrix::<f64>::zeros(coords.len(), nx);
        for (j, g) in coords.iter().enumerate() {
            let row = to_real(field, &(g * &w)) * 2.0;
            jac.row_mut(j).copy_from(&row.transpose());
        }
        let proj = DMatrix::<f64>::identity(nx, nx) - &x * x.transpose();
        let jac = jac * proj;
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * rv;
        let scale = jtj.diagonal().max().max(1e-300);
        let mut improved = false;
        while mu < 1e12 {
            let lhs = &jtj + DMatrix::<f64>::identity(nx, nx) * (mu * scale);
            let Some(chol) = lhs.cholesky() else {
                mu *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&jtr));
            let Some(cand) = normalized(from_real(field, &(&x + step))) else {
                mu *= 10.0;
                continue;
            };
            let rc = eval(&cand);
            let fc = norm(&rc);
            if fc < f {
                w = cand;
                r = rc;
                f = fc;
                mu = (mu / 3.0).max(1e-12);
                improved = true;
                break;
            }
            mu *= 4.0;
        }
        if !improved {
            break;
        }
    }
    (w, f)
}

/// Searches for a unit `w` with `point(w) = target` (membership in the
/// field itself, not its hull). Tries `extra_starts` first, then
/// `settings.starts` random unit vectors. Never reports Outside: failing
/// to find a point proves nothing for a non-convex set.
pub fn point_membership_field(
    field: FieldTag,
    mats: &[Mat],
    target: &[f64],
    extra_starts: &[CVec],
    settings: &SearchSettings,
) -> Result<MembershipResult> {
    let m = check_mats(mats)?;
    if target.len() != point_dim(field, mats.len()) {
        return invalid("target dimension does not match the field");
    }
    if extra_starts.iter().any(|v| v.len() != m) {
        return invalid("start vector has the wrong length");
    }
    let coords = field_coordinates(field, mats);
    let mut starts: Vec<CVec> = extra_starts.to_vec();
    starts.extend((0..settings.starts as u64).map(|i| seeded_unit(field, m, settings.seed, i)));
    let stop = settings.tol * 1e-3;
    let runs: Vec<(CVec, f64)> = starts
        .into_par_iter()
        .map(|s| sphere_least_squares(field, &coords, target, s, settings.max_iter, stop))
        .collect();
    let best = runs
        .into_iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.1.total_cmp(&b.1).then(i.cmp(j)))
        .map(|(_, r)| r);
    let Some((w, _)) = best else {
        return Ok(MembershipResult {
            status: MembershipStatus::Inconclusive,
            distance: f64::INFINITY,
            combination: None,
            separating: None,
            margin: None,
            report: None,
        });
    };
    // re-evaluate from the original matrices
    let distance = dist(&field_point(field, mats, &w), target);
    let inside = distance <= settings.tol;
    Ok(MembershipResult {
        status: if inside {
            MembershipStatus::Inside
        } else {
            MembershipStatus::Inconclusive
        },
        distance,
        combination: inside.then(|| Combination {
            weights: vec![1.0],
            vectors: vec![w],
        }),
        separating: None,
        margin: None,
        report: None,
    })
}

/// Result of [`caratheodory_reduce`]: surviving input indices with their
/// new weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    pub indices: Vec<usize>,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

/// Shrinks a convex combination while its points are affinely dependent,
/// keeping `Σ wⱼpⱼ` fixed. Ends with at most `affine_dim + 1` points.
pub fn caratheodory_reduce(
    points: &[Vec<f64>],
    weights: &[f64],
    affine_dim: usize,
) -> Result<Reduction> {
    if points.len() != weights.len() || points.is_empty() {
        return invalid("points and weights must be non-empty and of equal length");
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return invalid("points differ in dimension");
    }
    if d > affine_dim {
        return invalid(format!(
            "points have {d} coordinates but affine_dim is {affine_dim}"
        ));
    }
    if weights.iter().any(|&w| w.is_nan() || w <= 0.0 || w.is_infinite()) {
        return invalid("weights must be positive");
    }
    let scale = 1.0 + points.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max);
    let mut idx: Vec<usize> = (0..points.len()).collect();
    let mut w: Vec<f64> = weights.to_vec();
    loop {
        let l = idx.len();
        if l == 1 {
            break;
        }
        // square system [[p_1 … p_ℓ], [1 … 1]] padded with zero rows
        let rows = (d + 1).max(l);
        let mut m = DMatrix::<f64>::zeros(rows, l);
        for (c, &i) in idx.iter().enumerate() {
            for r in 0..d {
                m[(r, c)] = points[i][r];
            }
            m[(d, c)] = 1.0;
        }
        let (values, _, v) = real_svd(&m)?;
        let (jmin, smin) = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
            .map(|(j, s)| (j, *s))
            .expect("non-empty");
        let dependent = l > affine_dim + 1 || smin <= 1e-12 * scale * (l as f64).sqrt();
        if !dependent {
            break;
        }
        let z = v.column(jmin).into_owned();
        let z = if z.iter().any(|&x| x > 0.0) { z } else { -z };
        let mut exit: Option<(usize, f64)> = None;
        for (c, &zc) in z.iter().enumerate() {
            if zc > 0.0 {
                let ratio = w[c] / zc;
                if exit.is_none_or(|(_, r)| ratio < r) {
                    exit = Some((c, ratio));
                }
            }
        }
        let (out, theta) = exit.expect("null vector has a positive entry");
        for (wc, zc) in w.iter_mut().zip(z.iter()) {
            *wc -= theta * zc;
        }
        w[out] = 0.0;
        let keep: Vec<usize> = (0..l).filter(|&c| w[c] > 0.0).collect();
        idx = keep.iter().map(|&c| idx[c]).collect();
        w = keep.iter().map(|&c| w[c]).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
    }
    Ok(Reduction {
        points: idx.iter().map(|&i| points[i].clone()).collect(),
        indices: idx,
        weights: w,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Csv,
    Ply,
}

impl std::str::FromStr for CloudFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(CloudFormat::Csv),
            "ply" => Ok(CloudFormat::Ply),
            other => invalid(format!("unknown cloud format {other:?}")),
        }
    }
}

/// Writes the cloud, plus `marker` as a final row/vertex when given. Reals
/// are written with 17 significant digits.
pub fn write_cloud(
    cloud: &PointCloud,
    format: CloudFormat,
    marker: Option<&[f64]>,
    out: &mut impl Write,
) -> Result<()> {
    if marker.is_some_and(|m| m.len() != cloud.dim) {
        return invalid("marker dimension does not match the cloud");
    }
    let rows = cloud.points.iter().map(Vec::as_slice).chain(marker);
    let line = |p: &[f64], sep: &str| {
        p.iter()
            .map(|x| format!("{x:.16e}"))
            .collect::<Vec<_>>()
            .join(sep)
    };
    match format {
        CloudFormat::Csv => {
            let header: Vec<String> = (0..cloud.dim).map(|i| format!("c{i}")).collect();
            writeln!(out, "{}", header.join(","))?;
            for p in rows {
                writeln!(out, "{}", line(p, ","))?;
            }
        }
        CloudFormat::Ply => {
            if cloud.dim != 3 {
                return invalid(format!(
                    "ply export needs 3 coordinates, cloud has {}",
                    cloud.dim
                ));
            }
            let count = cloud.points.len() + usize::from(marker.is_some());
            writeln!(out, "ply")?;
            writeln!(out, "format ascii 1.0")?;
            writeln!(out, "comment seed {}", cloud.seed)?;
            writeln!(out, "element vertex {count}")?;
            for axis in ["x", "y", "z"] {
                writeln!(out, "property double {axis}")?;
            }
            writeln!(out, "end_header")?;
            for p in rows {
                writeln!(out, "{}", line(p, " "))?;
            }
        }
    }
    Ok(())
}

/// [`write_cloud`] to `path` through a temporary file renamed on success.
pub fn export_cloud(
    cloud: &PointCloud,
    format: CloudFormat,
    marker: Option<&[f64]>,
    path: &Path,
) -> Result<()> {
    if format == CloudFormat::Ply && cloud.dim != 3 {
        return invalid(format!(
            "ply export needs 3 coordinates, cloud has {}",
            cloud.dim
        ));
    }
    let tmp = path.with_extension("tmp-export");
    let result = (|| {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        write_cloud(cloud, format, marker, &mut f)?;
        f.flush()?;
        Ok::<_, Error>(())
    })();
    match result {
        Ok(()) => {
            std::fs::rename(&tmp, path)?;
            Ok(())
        }
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e)
        }
    }
}
