//! Distance from a target to the image of the density matrices under
//! `S ↦ (trace(S G_j))_j`, i.e. to the convex hull of a joint field of
//! values. Cast as
//!
//! ```text
//!   min τ  s.t.  S = I/m + Σ y_j E_j ⪰ 0,   [[τ I, r(y)], [r(y)ᵀ, τ]] ⪰ 0
//! ```
//!
//! with `E_j` a traceless Hermitian basis and `r(y) = T(S) − target`.

use nalgebra::DVector;

use super::ipm::{solve_block_sdp, BlockSdp, RMat};
use super::lmi::realify;
use super::{SdpReport, SdpSettings};
use crate::error::{invalid, Result};
use crate::linalg::{hermitian_eigen, inner, FieldTag, Mat, C64, ONE};

/// Traceless Hermitian basis of the `m × m` matrices over the field.
/// Real: `m(m+1)/2 − 1` elements; complex: `m² − 1`.
pub fn traceless_basis(field: FieldTag, m: usize) -> Vec<Mat> {
    let mut out = Vec::new();
    let inv_m = 1.0 / m as f64;
    for i in 0..m.saturating_sub(1) {
        let mut e = Mat::from_diagonal_element(m, m, C64::new(-inv_m, 0.0));
        e[(i, i)] += ONE;
        out.push(e);
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..m {
        for j in i + 1..m {
            let mut e = Mat::zeros(m, m);
            e[(i, j)] = C64::new(h, 0.0);
            e[(j, i)] = C64::new(h, 0.0);
            out.push(e);
            if !field.is_real() {
                let mut e = Mat::zeros(m, m);
                e[(i, j)] = C64::new(0.0, h);
                e[(j, i)] = C64::new(0.0, -h);
                out.push(e);
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct DensityFit {
    /// PSD, unit trace; negative eigenvalues from the IPM are clipped.
    pub density: Mat,
    /// `‖T(density) − target‖₂`, evaluated directly.
    pub distance: f64,
    pub report: SdpReport,
}

fn arrow(tau: f64, r: &[f64]) -> RMat {
    let d = r.len();
    let mut m = RMat::identity(d + 1, d + 1) * tau;
    for (i, &ri) in r.iter().enumerate() {
        m[(i, d)] = ri;
        m[(d, i)] = ri;
    }
    m
}

/// `T(S)_j = Re trace(S G_j)`.
pub(crate) fn image(density: &Mat, mats: &[Mat]) -> Vec<f64> {
    mats.iter().map(|g| inner(density, g).re).collect()
}

fn embed(field: FieldTag, h: &Mat) -> Result<RMat> {
    match field {
        FieldTag::Real => Ok(h.map(|z| z.re)),
        FieldTag::Complex => realify(h),
    }
}

/// Projects a Hermitian matrix onto the unit-trace PSD matrices by clipping
/// negative eigenvalues and renormalising.
pub(crate) fn clean_density(s: &Mat) -> Mat {
    let (vals, vecs) = hermitian_eigen(s);
    let m = s.nrows();
    let mut out = Mat::zeros(m, m);
    let mut total = 0.0;
    for (j, &l) in vals.iter().enumerate() {
        if l > 0.0 {
            let v = vecs.column(j);
            out += (v * v.adjoint()) * C64::new(l, 0.0);
            total += l;
        }
    }
    if total > 0.0 {
        out / C64::new(total, 0.0)
    } else {
        Mat::from_diagonal_element(m, m, C64::new(1.0 / m as f64, 0.0))
    }
}

/// Minimises `‖T(S) − target‖₂` over unit-trace PSD `S` on `𝔽^m`. The
/// matrices must be Hermitian (`m × m`); the result is the exact distance
/// from `target` to the convex hull of `{(vᴴG_jv)_j : ‖v‖ = 1}`.
pub fn density_fit(
    field: FieldTag,
    mats: &[Mat],
    target: &[f64],
    settings: &SdpSettings,
) -> Result<DensityFit> {
    settings.validate()?;
    if mats.is_empty() {
        return invalid("density fit needs at least one matrix");
    }
    if mats.len() != target.len() {
        return invalid(format!(
            "target has {} coordinates for {} matrices",
            target.len(),
            mats.len()
        ));
    }
    let m = mats[0].nrows();
    if mats.iter().any(|g| g.shape() != (m, m)) {
        return invalid("density fit matrices differ in shape");
    }
    // normalise the data so the IPM tolerances are relative to unit scale
    let scale = mats
        .iter()
        .map(|g| g.norm())
        .chain(target.iter().map(|t| t.abs()))
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let g: Vec<Mat> = mats.iter().map(|g| g / C64::new(scale, 0.0)).collect();
    let t: Vec<f64> = target.iter().map(|x| x / scale).collect();

    let basis = traceless_basis(field, m);
    let center = Mat::from_diagonal_element(m, m, C64::new(1.0 / m as f64, 0.0));
    let r0: Vec<f64> = image(&center, &g)
        .iter()
        .zip(&t)
        .map(|(a, b)| a - b)
        .collect();
    let has_density_block = !basis.is_empty();

    let mut block_sizes = Vec::new();
    let mut c = Vec::new();
    if has_density_block {
        let cb = embed(field, &center)?;
        block_sizes.push(cb.nrows());
        c.push(cb);
    }
    block_sizes.push(g.len() + 1);
    c.push(arrow(0.0, &r0));

    let mut a = Vec::with_capacity(basis.len() + 1);
    for e in &basis {
        let coeffs = image(e, &g);
        a.push(vec![-embed(field, e)?, -arrow(0.0, &coeffs)]);
    }
    let mut tau_blocks = Vec::with_capacity(2);
    if has_density_block {
        tau_blocks.push(RMat::zeros(block_sizes[0], block_sizes[0]));
    }
    tau_blocks.push(-RMat::identity(g.len() + 1, g.len() + 1));
    a.push(tau_blocks);
    let mut b = DVector::zeros(basis.len() + 1);
    b[basis.len()] = -1.0;

    let sdp = BlockSdp {
        block_sizes,
        c,
        a,
        b,
    };
    let (it, report) = solve_block_sdp(&sdp, settings);

    let mut s = center;
    for (e, &yj) in basis.iter().zip(it.y.iter()) {
        s += e * C64::new(yj, 0.0);
    }
    let density = clean_density(&s);
    let distance = image(&density, mats)
        .iter()
        .zip(target)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(DensityFit {
        density,
        distance,
        report,
    })
}
