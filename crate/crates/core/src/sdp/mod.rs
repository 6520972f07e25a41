//! Semidefinite machinery: the IPM engine and the two problem shapes this
//! crate needs, the spectral-norm LMI and the density-matrix distance fit.

mod density;
mod ipm;
mod lmi;
mod refine;

pub use density::{density_fit, traceless_basis, DensityFit};
pub use ipm::{solve_block_sdp, BlockSdp, SdpIterate};
pub use lmi::{build_lmi, ipm_solve, realify, solve_min_spectral, LmiInstance, LmiSolution};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpSettings {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
    /// Fraction of the distance to the PSD boundary taken per step.
    pub step_fraction: f64,
    /// Extra iterations allowed after convergence to push the relative
    /// residuals towards `polish_tol`; the best iterate is returned.
    pub polish_iter: usize,
    pub polish_tol: f64,
}

impl Default for SdpSettings {
    fn default() -> Self {
        Self {
            gap_tol: 1e-9,
            feas_tol: 1e-9,
            max_iter: 200,
            step_fraction: 0.98,
            polish_iter: 8,
            polish_tol: 1e-14,
        }
    }
}

impl SdpSettings {
    pub fn with_gap_tol(mut self, tol: f64) -> Self {
        self.gap_tol = tol;
        self.feas_tol = tol;
        self
    }

    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.gap_tol > 0.0
            && self.feas_tol > 0.0
            && self.max_iter > 0
            && self.step_fraction > 0.0
            && self.step_fraction < 1.0
            && self.polish_tol >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(crate::Error::InvalidInput(format!(
                "bad SDP settings: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SdpStatus {
    Optimal,
    MaxIter,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpReport {
    pub iterations: usize,
    /// `max(|pobj − dobj|, ⟨X, S⟩)` at the final iterate.
    pub duality_gap: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub status: SdpStatus,
}

impl SdpReport {
    pub(crate) fn failed(status: SdpStatus, iterations: usize) -> Self {
        Self {
            iterations,
            duality_gap: f64::INFINITY,
            primal_objective: f64::NAN,
            dual_objective: f64::NAN,
            primal_infeasibility: f64::INFINITY,
            dual_infeasibility: f64::INFINITY,
            status,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }

    pub(crate) fn into_error(self, detail: impl Into<String>) -> crate::Error {
        crate::Error::Solver {
            status: self.status,
            iterations: self.iterations,
            detail: detail.into(),
        }
    }
}
