//! On-disk artifact schemas and their conversions to library types.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use specnorm::certify::{CertificateReport, DualReport, DualWitness, SingerCertificate};
use specnorm::field::MembershipStatus;
use specnorm::linalg::{default_rank_tol, validate_problem, C64};
use specnorm::maxmin::{EqualityStatus, GapReport, MaxMinResult};
use specnorm::sdp::{SdpReport, SdpSettings, SdpStatus};
use specnorm::{FieldTag, Problem, Solution};

use crate::error::{CliError, Result};
use crate::json::{
    decode_matrix, decode_vector, encode_matrix, encode_vector, FieldName, MatrixJson, Scalar,
};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Writes through a sibling temporary file renamed into place on success.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let err = |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    };
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    let tmp = path.with_file_name(name);
    if let Err(e) = std::fs::write(&tmp, bytes) {
        let _ = std::fs::remove_file(&tmp);
        return Err(err(e));
    }
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        err(e)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub field: FieldName,
    pub n: usize,
    #[serde(rename = "Y")]
    pub y: MatrixJson,
    #[serde(rename = "X")]
    pub x: Vec<MatrixJson>,
}

impl ProblemFile {
    pub fn from_problem(p: &Problem) -> Self {
        let f = p.field();
        Self {
            field: f.into(),
            n: p.n(),
            y: encode_matrix(f, p.y()),
            x: p.basis().iter().map(|m| encode_matrix(f, m)).collect(),
        }
    }

    /// Builds the problem and rejects dependent bases and `Y` in the span.
    pub fn to_problem(&self) -> Result<Problem> {
        let y = decode_matrix(&self.y, self.n, "Y")?;
        let basis = self
            .x
            .iter()
            .enumerate()
            .map(|(i, m)| decode_matrix(m, self.n, &format!("X[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let p = Problem::new(self.field.into(), y, basis)?;
        validated(p)
    }
}

pub fn validated(p: Problem) -> Result<Problem> {
    let report = validate_problem(&p, default_rank_tol(&p));
    if report.is_valid() {
        Ok(p)
    } else {
        Err(CliError::Input(report.issues.join("; ")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpSettingsJson {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
    pub step_fraction: f64,
    pub polish_iter: usize,
    pub polish_tol: f64,
}

impl From<&SdpSettings> for SdpSettingsJson {
    fn from(s: &SdpSettings) -> Self {
        Self {
            gap_tol: s.gap_tol,
            feas_tol: s.feas_tol,
            max_iter: s.max_iter,
            step_fraction: s.step_fraction,
            polish_iter: s.polish_iter,
            polish_tol: s.polish_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpReportJson {
    pub status: String,
    pub iterations: usize,
    pub duality_gap: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
}

pub fn status_name(s: SdpStatus) -> &'static str {
    match s {
        SdpStatus::Optimal => "optimal",
        SdpStatus::MaxIter => "max-iter",
        SdpStatus::NumericalFailure => "numerical-failure",
    }
}

impl From<&SdpReport> for SdpReportJson {
    fn from(r: &SdpReport) -> Self {
        Self {
            status: status_name(r.status).into(),
            iterations: r.iterations,
            duality_gap: r.duality_gap,
            primal_objective: r.primal_objective,
            dual_objective: r.dual_objective,
            primal_infeasibility: r.primal_infeasibility,
            dual_infeasibility: r.dual_infeasibility,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub field: FieldName,
    pub n: usize,
    pub k: usize,
    pub a: Vec<Scalar>,
    pub sigma1: f64,
    pub rho: f64,
    /// Absent for reference solutions written by `example`.
    pub settings: Option<SdpSettingsJson>,
    pub report: Option<SdpReportJson>,
}

impl SolutionFile {
    pub fn new(p: &Problem, s: &Solution, solved: Option<(&SdpSettings, &SdpReport)>) -> Self {
        let f = p.field();
        Self {
            field: f.into(),
            n: p.n(),
            k: p.k(),
            a: s.a.iter().map(|&z| Scalar::encode(f, z)).collect(),
            sigma1: s.sigma1,
            rho: s.rho,
            settings: solved.map(|(s, _)| s.into()),
            report: solved.map(|(_, r)| r.into()),
        }
    }

    /// The stored coefficients, with `σ₁` and `ρ` re-evaluated on `p`.
    pub fn to_solution(&self, p: &Problem) -> Result<Solution> {
        if FieldTag::from(self.field) != p.field() || self.n != p.n() || self.a.len() != p.k() {
            return Err(CliError::Input(format!(
                "solution ({:?}, n = {}, {} coefficients) does not match the problem ({:?}, n = {}, k = {})",
                self.field,
                self.n,
                self.a.len(),
                p.field(),
                p.n(),
                p.k()
            )));
        }
        let a: Vec<C64> = self.a.iter().map(|s| s.value()).collect();
        Ok(Solution::from_coefficients(p, a)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationJson {
    pub passed: bool,
    pub tol: f64,
    pub orthogonality: Vec<f64>,
    pub alignment: Vec<f64>,
    pub weight_sum: f64,
    pub min_weight: f64,
    pub norm_error: f64,
    pub max_ell: usize,
}

impl From<&CertificateReport> for VerificationJson {
    fn from(r: &CertificateReport) -> Self {
        Self {
            passed: r.passed(),
            tol: r.tol,
            orthogonality: r.orthogonality.clone(),
            alignment: r.alignment.clone(),
            weight_sum: r.weight_sum,
            min_weight: r.min_weight,
            norm_error: r.norm_error,
            max_ell: r.max_ell,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualJson {
    /// `Z` as a real `2n × 2n` matrix.
    pub z: Vec<Vec<f64>>,
    pub passed: bool,
    pub tol: f64,
    pub lambda_min: f64,
    pub trace: f64,
    pub orthogonality: Vec<f64>,
    pub objective: f64,
}

impl DualJson {
    pub fn new(w: &DualWitness, r: &DualReport) -> Self {
        Self {
            z: w.z
                .row_iter()
                .map(|row| row.iter().copied().collect())
                .collect(),
            passed: r.passed(),
            tol: r.tol,
            lambda_min: r.lambda_min,
            trace: r.trace,
            orthogonality: r.orthogonality.clone(),
            objective: r.objective,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedJson {
    pub nuclear_norm: f64,
    /// `⟨F, Y − X*⟩`.
    pub pairing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateFile {
    pub field: FieldName,
    pub n: usize,
    pub k: usize,
    pub sigma1: f64,
    pub ell: usize,
    pub weights: Vec<f64>,
    pub u: Vec<Vec<Scalar>>,
    pub v: Vec<Vec<Scalar>>,
    pub cluster_rtol: f64,
    pub verification: VerificationJson,
    pub aggregated: AggregatedJson,
    pub dual_witness: Option<DualJson>,
}

impl CertificateFile {
    pub fn new(
        p: &Problem,
        c: &SingerCertificate,
        cluster_rtol: f64,
        report: &CertificateReport,
        aggregated: AggregatedJson,
        dual: Option<DualJson>,
    ) -> Self {
        let f = p.field();
        Self {
            field: f.into(),
            n: p.n(),
            k: p.k(),
            sigma1: c.sigma1,
            ell: c.ell(),
            weights: c.weights.clone(),
            u: c.u.iter().map(|x| encode_vector(f, x)).collect(),
            v: c.v.iter().map(|x| encode_vector(f, x)).collect(),
            cluster_rtol,
            verification: report.into(),
            aggregated,
            dual_witness: dual,
        }
    }

    pub fn to_certificate(&self) -> SingerCertificate {
        SingerCertificate {
            field: self.field.into(),
            weights: self.weights.clone(),
            u: self.u.iter().map(|x| decode_vector(x)).collect(),
            v: self.v.iter().map(|x| decode_vector(x)).collect(),
            sigma1: self.sigma1,
        }
    }
}

pub fn equality_name(s: EqualityStatus) -> &'static str {
    match s {
        EqualityStatus::Equal => "equal",
        EqualityStatus::StrictGapSuspected => "strict-gap-suspected",
        EqualityStatus::Inconclusive => "inconclusive",
    }
}

pub fn membership_name(s: MembershipStatus) -> &'static str {
    match s {
        MembershipStatus::Inside => "inside",
        MembershipStatus::Outside => "outside",
        MembershipStatus::Inconclusive => "inconclusive",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionsJson {
    pub single_basis: bool,
    pub simple_top_singular_value: bool,
    pub real_pair_wide_subspace: bool,
    pub sigma_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxMinJson {
    pub v_star: Vec<Scalar>,
    pub value: f64,
    pub a_of_v: Vec<Scalar>,
    pub starts_used: usize,
    pub converged_starts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSettingsJson {
    pub starts: usize,
    pub seed: u64,
    pub tol: f64,
    pub cluster_rtol: f64,
    pub sdp: SdpSettingsJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapFile {
    pub field: FieldName,
    pub n: usize,
    pub k: usize,
    pub a: Vec<Scalar>,
    pub minmax: f64,
    pub maxmin: f64,
    pub gap: f64,
    pub relative_gap: f64,
    pub status: String,
    pub conditions: ConditionsJson,
    pub hull_status: String,
    pub witness: Option<Vec<Scalar>>,
    pub witness_residual: Option<f64>,
    pub maxmin_detail: MaxMinJson,
    pub settings: GapSettingsJson,
}

impl GapFile {
    pub fn new(
        p: &Problem,
        s: &Solution,
        mm: &MaxMinResult,
        g: &GapReport,
        settings: GapSettingsJson,
    ) -> Self {
        let f = p.field();
        let c = &g.conditions;
        Self {
            field: f.into(),
            n: p.n(),
            k: p.k(),
            a: s.a.iter().map(|&z| Scalar::encode(f, z)).collect(),
            minmax: g.minmax,
            maxmin: g.maxmin,
            gap: g.gap,
            relative_gap: g.relative_gap,
            status: equality_name(g.status).into(),
            conditions: ConditionsJson {
                single_basis: c.single_basis,
                simple_top_singular_value: c.simple_top_singular_value,
                real_pair_wide_subspace: c.real_pair_wide_subspace,
                sigma_dim: c.sigma_dim,
            },
            hull_status: membership_name(g.hull_status).into(),
            witness: g.witness.as_ref().map(|w| encode_vector(f, w)),
            witness_residual: g.witness_residual,
            maxmin_detail: MaxMinJson {
                v_star: encode_vector(f, &mm.v_star),
                value: mm.value,
                a_of_v: mm.a_of_v.iter().map(|&z| Scalar::encode(f, z)).collect(),
                starts_used: mm.starts_used,
                converged_starts: mm.converged_starts,
            },
            settings,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldReportJson {
    pub target_kind: String,
    pub target: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub format: String,
    pub cluster_rtol: f64,
    pub tol: f64,
    pub hull_status: String,
    pub hull_distance: f64,
    /// Distance from the target to the closest sampled point.
    pub nearest_sample: f64,
}
