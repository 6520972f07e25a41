//! `min t` subject to `t·I + [[0, R(a)], [R(a)ᴴ, 0]] ⪰ 0`, which is the
//! spectral-norm problem because the Hermitian dilation of `R` has
//! eigenvalues `±σ_j(R)`.

use nalgebra::{DMatrix, DVector};

use super::ipm::{solve_block_sdp, BlockSdp, RMat};
use super::{SdpReport, SdpSettings};
use crate::error::{Error, Result};
use crate::linalg::{
    hermitian_eigen, real_part, spectral_norm, FieldTag, Mat, Problem, Solution, C64,
};

/// Real variables are `(a-parameters…, t)`; for complex problems each
/// coefficient contributes `(Re aᵢ, Im aᵢ)`.
#[derive(Debug, Clone)]
pub struct LmiInstance {
    pub field: FieldTag,
    pub n: usize,
    pub k: usize,
    /// `[[0, Y], [Yᴴ, 0]]`.
    pub h0: Mat,
    /// Dilation of each basis direction, one per real coefficient parameter.
    pub h: Vec<Mat>,
}

fn dilation(m: &Mat) -> Mat {
    let n = m.nrows();
    let mut out = Mat::zeros(2 * n, 2 * n);
    out.view_mut((0, n), (n, n)).copy_from(m);
    out.view_mut((n, 0), (n, n)).copy_from(&m.adjoint());
    out
}

/// Hermitian dilation check tolerance.
const HERMITIAN_TOL: f64 = 1e-12;

/// Real symmetric embedding `[[Re H, −Im H], [Im H, Re H]]` of a Hermitian
/// matrix; its spectrum is that of `H` with every eigenvalue doubled.
pub fn realify(h: &Mat) -> Result<DMatrix<f64>> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(Error::Numerical("realify: matrix is not square".into()));
    }
    let scale = 1.0 + h.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let asym = (h - h.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if asym > HERMITIAN_TOL * scale {
        return Err(Error::Numerical(format!(
            "realify: input is not Hermitian (asymmetry {asym:.3e})"
        )));
    }
    let re = h.map(|z| z.re);
    let im = h.map(|z| z.im);
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    out.view_mut((0, 0), (n, n)).copy_from(&re);
    out.view_mut((0, n), (n, n)).copy_from(&(-&im));
    out.view_mut((n, 0), (n, n)).copy_from(&im);
    out.view_mut((n, n), (n, n)).copy_from(&re);
    Ok(out)
}

pub fn build_lmi(p: &Problem) -> LmiInstance {
    let mut h = Vec::with_capacity(p.k() * p.field().real_dim());
    for x in p.basis() {
        h.push(dilation(x));
        if !p.field().is_real() {
            h.push(dilation(&(x * C64::new(0.0, 1.0))));
        }
    }
    LmiInstance {
        field: p.field(),
        n: p.n(),
        k: p.k(),
        h0: dilation(p.y()),
        h,
    }
}

impl LmiInstance {
    /// Number of real scalar variables including `t`.
    pub fn num_vars(&self) -> usize {
        self.h.len() + 1
    }

    /// Size of the Hermitian LMI block before realification.
    pub fn block_size(&self) -> usize {
        2 * self.n
    }

    /// `t·I + H₀ − Σ params_j H_j`.
    pub fn lmi_matrix(&self, params: &[f64], t: f64) -> Mat {
        let mut m = self.h0.clone();
        for (hj, &pj) in self.h.iter().zip(params) {
            m -= hj * C64::new(pj, 0.0);
        }
        for i in 0..m.nrows() {
            m[(i, i)] += C64::new(t, 0.0);
        }
        m
    }

    /// `a = 0`, `t = ‖Y‖₂ + 1`: the LMI block is then positive definite.
    pub fn feasible_point(&self) -> Result<(Vec<f64>, f64)> {
        let n = self.n;
        let y = self.h0.view((0, n), (n, n)).into_owned();
        Ok((vec![0.0; self.h.len()], spectral_norm(&y)? + 1.0))
    }

    pub fn coefficients(&self, params: &[f64]) -> Vec<C64> {
        match self.field {
            FieldTag::Real => params.iter().map(|&x| C64::new(x, 0.0)).collect(),
            FieldTag::Complex => params.chunks(2).map(|c| C64::new(c[0], c[1])).collect(),
        }
    }

    fn embed(&self, h: &Mat) -> Result<RMat> {
        match self.field {
            FieldTag::Real => Ok(real_part(h)),
            FieldTag::Complex => realify(h),
        }
    }

    /// Dual-form block SDP: `max −t` with `S = H₀ − Σ aⱼHⱼ + t·I`.
    pub fn to_block_sdp(&self) -> Result<BlockSdp> {
        let c = self.embed(&self.h0)?;
        let size = c.nrows();
        let mut a = Vec::with_capacity(self.num_vars());
        for hj in &self.h {
            a.push(vec![self.embed(hj)?]);
        }
        a.push(vec![-RMat::identity(size, size)]);
        let mut b = DVector::zeros(self.num_vars());
        b[self.num_vars() - 1] = -1.0;
        Ok(BlockSdp {
            block_sizes: vec![size],
            c: vec![c],
            a,
            b,
        })
    }

    /// Maps the (possibly realified) primal matrix back to the Hermitian
    /// `2n × 2n` dual matrix with unit trace.
    fn dual_matrix(&self, x: &RMat) -> Mat {
        let s = self.block_size();
        match self.field {
            FieldTag::Real => x.map(|v| C64::new(v, 0.0)),
            FieldTag::Complex => {
                let x11 = x.view((0, 0), (s, s));
                let x12 = x.view((0, s), (s, s));
                let x21 = x.view((s, 0), (s, s));
                let x22 = x.view((s, s), (s, s));
                Mat::from_fn(s, s, |i, j| {
                    C64::new(x11[(i, j)] + x22[(i, j)], x21[(i, j)] - x12[(i, j)])
                })
            }
        }
    }
}

/// Variables and dual matrix returned by [`ipm_solve`].
#[derive(Debug, Clone)]
pub struct LmiSolution {
    /// Real coefficient parameters.
    pub params: Vec<f64>,
    pub t: f64,
    pub coefficients: Vec<C64>,
    /// Hermitian `2n × 2n` PSD matrix with unit trace. For a real problem
    /// it is `[[C, Bᵀ], [B, D]]` minimising `2·trace(BY)`, so `−B` is the
    /// maximiser of `2·trace(BY)` in the sign convention of the classical
    /// dual of the spectral-norm problem.
    pub dual: Mat,
}

impl LmiSolution {
    /// `trace(dual · (t·I + H(a)))`.
    pub fn complementarity(&self, lmi: &LmiInstance) -> f64 {
        let slack = lmi.lmi_matrix(&self.params, self.t);
        (&self.dual * slack).trace().re
    }

    pub fn dual_lambda_min(&self) -> f64 {
        hermitian_eigen(&self.dual).0[0]
    }
}

pub fn ipm_solve(lmi: &LmiInstance, settings: &SdpSettings) -> Result<(LmiSolution, SdpReport)> {
    settings.validate()?;
    let sdp = lmi.to_block_sdp()?;
    let (it, report) = solve_block_sdp(&sdp, settings);
    let m = lmi.num_vars();
    let params: Vec<f64> = it.y.iter().take(m - 1).copied().collect();
    let t = it.y[m - 1];
    let coefficients = lmi.coefficients(&params);
    let dual = lmi.dual_matrix(&it.x[0]);
    Ok((
        LmiSolution {
            params,
            t,
            coefficients,
            dual,
        },
        report,
    ))
}

/// Solves `min ‖Y − Σ aᵢXᵢ‖₂`. The IPM coefficients are sharpened by a local
/// Newton refinement on the optimality conditions (see `refine`). The
/// returned `sigma1` comes from an SVD of the residual at the returned
/// coefficients, not from the IPM's `t`.
pub fn solve_min_spectral(p: &Problem, settings: &SdpSettings) -> Result<(Solution, SdpReport)> {
    let lmi = build_lmi(p);
    let (sol, report) = ipm_solve(&lmi, settings)?;
    if !report.is_optimal() {
        return Err(report.into_error("spectral-norm LMI"));
    }
    let a = super::refine::refine(p, &sol.coefficients, &sol.dual)?;
    let solution = Solution::from_coefficients(p, a)?;
    Ok((solution, report))
}
