//! Dense primal-dual interior-point method for block-diagonal SDPs in the
//! pair
//!
//! ```text
//!   (P)  min ⟨C, X⟩   s.t. ⟨A_j, X⟩ = b_j,  X ⪰ 0
//!   (D)  max bᵀy      s.t. S = C − Σ_j y_j A_j ⪰ 0
//! ```
//!
//! Infeasible start, Nesterov–Todd scaling and Mehrotra predictor-corrector.
//! Every step is deterministic: no randomisation, fixed reduction order.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use super::{SdpReport, SdpSettings, SdpStatus};
use crate::linalg::real_svd;

pub type RMat = DMatrix<f64>;

/// Block-diagonal SDP data. `a[j][blk]` is block `blk` of constraint matrix `A_j`.
#[derive(Debug, Clone)]
pub struct BlockSdp {
    pub block_sizes: Vec<usize>,
    pub c: Vec<RMat>,
    pub a: Vec<Vec<RMat>>,
    pub b: DVector<f64>,
}

/// Final iterate of the IPM.
#[derive(Debug, Clone)]
pub struct SdpIterate {
    pub y: DVector<f64>,
    pub x: Vec<RMat>,
    pub s: Vec<RMat>,
}

type Blocks = Vec<RMat>;

fn inner(a: &[RMat], b: &[RMat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn frob(a: &[RMat]) -> f64 {
    inner(a, a).sqrt()
}

fn symmetrize(m: &mut RMat) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

impl BlockSdp {
    pub fn num_vars(&self) -> usize {
        self.b.len()
    }

    fn total_size(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    fn op(&self, x: &[RMat]) -> DVector<f64> {
        DVector::from_iterator(self.a.len(), self.a.iter().map(|aj| inner(aj, x)))
    }

    fn adjoint(&self, y: &DVector<f64>) -> Blocks {
        let mut out: Blocks = self
            .block_sizes
            .iter()
            .map(|&s| RMat::zeros(s, s))
            .collect();
        for (aj, &yj) in self.a.iter().zip(y.iter()) {
            for (o, ab) in out.iter_mut().zip(aj) {
                *o += ab * yj;
            }
        }
        out
    }

    fn check(&self) -> Result<(), String> {
        let nb = self.block_sizes.len();
        if self.c.len() != nb {
            return Err("C block count mismatch".into());
        }
        if self.a.len() != self.b.len() {
            return Err("constraint count does not match b".into());
        }
        for (blk, &sz) in self.block_sizes.iter().enumerate() {
            if self.c[blk].shape() != (sz, sz) {
                return Err(format!("C block {blk} has wrong shape"));
            }
            for aj in &self.a {
                if aj.len() != nb || aj[blk].shape() != (sz, sz) {
                    return Err(format!("constraint block {blk} has wrong shape"));
                }
            }
        }
        Ok(())
    }
}

/// NT scaling of one block: `G` with `Gᵀ S G = G⁻¹ X G⁻ᵀ = diag(λ)`.
struct NtBlock {
    g: RMat,
    g_inv: RMat,
    lambda: DVector<f64>,
}

impl NtBlock {
    fn new(x: &RMat, s: &RMat) -> Option<Self> {
        let lx = Cholesky::new(x.clone())?.l();
        let ls = Cholesky::new(s.clone())?.l();
        let prod = ls.transpose() * &lx;
        let (d, _, v) = real_svd(&prod).ok()?;
        let d = DVector::from_vec(d);
        if d.iter().any(|&di| di.is_nan() || di <= 0.0 || di.is_infinite()) {
            return None;
        }
        let mut g = &lx * &v;
        for (j, dj) in d.iter().enumerate() {
            g.column_mut(j).scale_mut(1.0 / dj.sqrt());
        }
        // G⁻¹ = D^{1/2} Vᵀ L_x⁻¹
        let lx_inv = lx
            .clone()
            .solve_lower_triangular(&RMat::identity(x.nrows(), x.nrows()))?;
        let mut g_inv = v.transpose() * lx_inv;
        for (i, di) in d.iter().enumerate() {
            g_inv.row_mut(i).scale_mut(di.sqrt());
        }
        Some(Self {
            g,
            g_inv,
            lambda: d,
        })
    }

    fn w(&self) -> RMat {
        &self.g * self.g.transpose()
    }

    fn scale_x(&self, dx: &RMat) -> RMat {
        &self.g_inv * dx * self.g_inv.transpose()
    }

    fn scale_s(&self, ds: &RMat) -> RMat {
        self.g.transpose() * ds * &self.g
    }

    /// Solves `ΛK + KΛ = 2R` for `K` and maps back: `G K Gᵀ`.
    fn unscale_lyap(&self, r: &RMat) -> RMat {
        let l = &self.lambda;
        let k = RMat::from_fn(r.nrows(), r.ncols(), |i, j| 2.0 * r[(i, j)] / (l[i] + l[j]));
        &self.g * k * self.g.transpose()
    }
}

/// Largest `α ≤ cap` such that `X + αΔX ⪰ 0`, via the Cholesky factor of X.
fn max_step(x: &[RMat], dx: &[RMat]) -> Option<f64> {
    let mut alpha = f64::INFINITY;
    for (xb, dxb) in x.iter().zip(dx) {
        let l = Cholesky::new(xb.clone())?.l();
        let tmp = l.solve_lower_triangular(dxb)?;
        let mut m = l.solve_lower_triangular(&tmp.transpose())?;
        symmetrize(&mut m);
        let lmin = SymmetricEigen::new(m)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if lmin < 0.0 {
            alpha = alpha.min(-1.0 / lmin);
        }
    }
    Some(alpha)
}

fn solve_schur(m: &RMat, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = Cholesky::new(m.clone()) {
        let sol = ch.solve(rhs);
        if sol.iter().all(|v| v.is_finite()) {
            return Some(sol);
        }
    }
    let scale = m.diagonal().iter().copied().fold(0.0, f64::max).max(1e-300);
    let mut reg = m.clone();
    for i in 0..reg.nrows() {
        reg[(i, i)] += 1e-13 * scale;
    }
    if let Some(ch) = Cholesky::new(reg) {
        let sol = ch.solve(rhs);
        if sol.iter().all(|v| v.is_finite()) {
            return Some(sol);
        }
    }
    let lu = m.clone().lu();
    lu.solve(rhs).filter(|s| s.iter().all(|v| v.is_finite()))
}

struct Direction {
    dx: Blocks,
    dy: DVector<f64>,
    ds: Blocks,
}

struct Residuals {
    rp: DVector<f64>,
    rd: Blocks,
}

fn direction(
    sdp: &BlockSdp,
    nt: &[NtBlock],
    w: &[RMat],
    schur: &RMat,
    res: &Residuals,
    rtilde: &[RMat],
) -> Option<Direction> {
    let rc: Blocks = nt
        .iter()
        .zip(rtilde)
        .map(|(b, r)| b.unscale_lyap(r))
        .collect();
    let wrdw: Blocks = w.iter().zip(&res.rd).map(|(wb, rd)| wb * rd * wb).collect();
    let rhs = &res.rp - sdp.op(&rc) + sdp.op(&wrdw);
    let dy = solve_schur(schur, &rhs)?;
    let aty = sdp.adjoint(&dy);
    let ds: Blocks = res.rd.iter().zip(&aty).map(|(rd, a)| rd - a).collect();
    let dx: Blocks = rc
        .iter()
        .zip(w)
        .zip(&ds)
        .map(|((rc, wb), dsb)| {
            let mut m = rc - wb * dsb * wb;
            symmetrize(&mut m);
            m
        })
        .collect();
    Some(Direction { dx, dy, ds })
}

fn initial_point(sdp: &BlockSdp) -> SdpIterate {
    let n = sdp.total_size() as f64;
    let mut xi: f64 = 10f64.max(n.sqrt());
    let mut eta: f64 = 10f64.max(n.sqrt()).max(frob(&sdp.c));
    for (aj, bj) in sdp.a.iter().zip(sdp.b.iter()) {
        let na = frob(aj);
        xi = xi.max(n * (1.0 + bj.abs()) / (1.0 + na));
        eta = eta.max(na);
    }
    SdpIterate {
        y: DVector::zeros(sdp.num_vars()),
        x: sdp
            .block_sizes
            .iter()
            .map(|&s| RMat::identity(s, s) * xi)
            .collect(),
        s: sdp
            .block_sizes
            .iter()
            .map(|&s| RMat::identity(s, s) * eta)
            .collect(),
    }
}

/// Runs the IPM. Never panics on numerical trouble: failures are reported
/// through [`SdpStatus`] together with the last iterate.
pub fn solve_block_sdp(sdp: &BlockSdp, settings: &SdpSettings) -> (SdpIterate, SdpReport) {
    if let Err(msg) = sdp.check() {
        log::error!("malformed SDP: {msg}");
        return (
            initial_point(sdp),
            SdpReport::failed(SdpStatus::NumericalFailure, 0),
        );
    }
    let ntot = sdp.total_size() as f64;
    let bnorm = sdp.b.norm();
    let cnorm = frob(&sdp.c);
    let mut it = initial_point(sdp);
    let mut report = SdpReport::failed(SdpStatus::MaxIter, 0);
    // best converged iterate by relative merit, kept while polishing
    let mut best: Option<(f64, SdpIterate, SdpReport)> = None;
    let mut polish = 0usize;
    macro_rules! bail {
        ($status:expr) => {{
            if let Some((_, bi, br)) = best {
                return (bi, br);
            }
            report.status = $status;
            return (it, report);
        }};
    }

    for iter in 0..=settings.max_iter {
        let aty = sdp.adjoint(&it.y);
        let rp = &sdp.b - sdp.op(&it.x);
        let rd: Blocks = sdp
            .c
            .iter()
            .zip(&it.s)
            .zip(&aty)
            .map(|((c, s), a)| c - s - a)
            .collect();
        let pobj = inner(&sdp.c, &it.x);
        let dobj = sdp.b.dot(&it.y);
        let compl = inner(&it.x, &it.s);
        let mu = compl / ntot;
        let pinf = rp.norm() / (1.0 + bnorm);
        let dinf = frob(&rd) / (1.0 + cnorm);
        let gap = (pobj - dobj).abs().max(compl.abs());
        report = SdpReport {
            iterations: iter,
            duality_gap: gap,
            primal_objective: pobj,
            dual_objective: dobj,
            primal_infeasibility: pinf,
            dual_infeasibility: dinf,
            status: SdpStatus::MaxIter,
        };
        log::trace!(
            "ipm {iter:3}: pobj {pobj:+.12e} dobj {dobj:+.12e} gap {gap:.2e} pinf {pinf:.2e} dinf {dinf:.2e}"
        );
        if gap <= settings.gap_tol * (1.0 + dobj.abs())
            && pinf <= settings.feas_tol
            && dinf <= settings.feas_tol
        {
            report.status = SdpStatus::Optimal;
            let merit = (gap / (1.0 + dobj.abs())).max(pinf).max(dinf);
            if best.as_ref().is_none_or(|b| merit < b.0) {
                best = Some((merit, it.clone(), report.clone()));
            }
            if merit <= settings.polish_tol || polish >= settings.polish_iter {
                bail!(SdpStatus::Optimal);
            }
            polish += 1;
        }
        if iter == settings.max_iter {
            break;
        }

        let nt: Option<Vec<NtBlock>> =
            it.x.iter()
                .zip(&it.s)
                .map(|(x, s)| NtBlock::new(x, s))
                .collect();
        let Some(nt) = nt else {
            bail!(SdpStatus::NumericalFailure);
        };
        let w: Blocks = nt.iter().map(NtBlock::w).collect();
        let m = sdp.num_vars();
        let wajw: Vec<Blocks> = sdp
            .a
            .iter()
            .map(|aj| w.iter().zip(aj).map(|(wb, ab)| wb * ab * wb).collect())
            .collect();
        let mut schur = RMat::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let v = inner(&sdp.a[i], &wajw[j]);
                schur[(i, j)] = v;
                schur[(j, i)] = v;
            }
        }
        let res = Residuals { rp, rd };

        // predictor: target σμ = 0
        let r_aff: Blocks = nt
            .iter()
            .map(|b| RMat::from_diagonal(&b.lambda.map(|l| -l * l)))
            .collect();
        let Some(aff) = direction(sdp, &nt, &w, &schur, &res, &r_aff) else {
            bail!(SdpStatus::NumericalFailure);
        };
        let (Some(ap), Some(ad)) = (max_step(&it.x, &aff.dx), max_step(&it.s, &aff.ds)) else {
            bail!(SdpStatus::NumericalFailure);
        };
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let x_aff: Blocks = it.x.iter().zip(&aff.dx).map(|(x, d)| x + d * ap).collect();
        let s_aff: Blocks = it.s.iter().zip(&aff.ds).map(|(s, d)| s + d * ad).collect();
        let mu_aff = inner(&x_aff, &s_aff) / ntot;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector with the second-order Mehrotra term
        let r_cor: Blocks = nt
            .iter()
            .zip(aff.dx.iter().zip(&aff.ds))
            .map(|(b, (dx, ds))| {
                let dxt = b.scale_x(dx);
                let dst = b.scale_s(ds);
                let mut prod = &dxt * &dst;
                symmetrize(&mut prod);
                let mut r = RMat::from_diagonal(&b.lambda.map(|l| sigma * mu - l * l));
                r -= prod;
                r
            })
            .collect();
        let Some(dir) = direction(sdp, &nt, &w, &schur, &res, &r_cor) else {
            bail!(SdpStatus::NumericalFailure);
        };
        let (Some(ap), Some(ad)) = (max_step(&it.x, &dir.dx), max_step(&it.s, &dir.ds)) else {
            bail!(SdpStatus::NumericalFailure);
        };
        let ap = (settings.step_fraction * ap).min(1.0);
        let ad = (settings.step_fraction * ad).min(1.0);
        if ap < 1e-12 && ad < 1e-12 {
            bail!(SdpStatus::NumericalFailure);
        }
        for (x, d) in it.x.iter_mut().zip(&dir.dx) {
            *x += d * ap;
            symmetrize(x);
        }
        for (s, d) in it.s.iter_mut().zip(&dir.ds) {
            *s += d * ad;
            symmetrize(s);
        }
        it.y += &dir.dy * ad;
    }
    bail!(SdpStatus::MaxIter)
}
