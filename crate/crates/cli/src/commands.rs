use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use specnorm::certify::{
    aggregate_dual, build_dual_witness, extract_certificate, verify_certificate,
    verify_dual_witness, CertifySettings,
};
use specnorm::field::{
    build_grams, export_cloud, hull_membership_exact, point_dim, sample_field, CloudFormat,
    SearchSettings,
};
use specnorm::linalg::{real_diag, residual, Problem, C64, DEFAULT_CLUSTER_RTOL};
use specnorm::maxmin::{
    certificate_starts, diagnose_gap, double_problem, maxmin_solve, solution_starts, GapSettings,
    MaxMinSettings,
};
use specnorm::problems::{
    ideal_arnoldi_problem, ideal_gmres_problem, jordan_block, lau_riha_problem,
};
use specnorm::sdp::{solve_min_spectral, SdpSettings};
use specnorm::{FieldTag, Solution};

use crate::error::{CliError, Result};
use crate::files::{
    equality_name, membership_name, read_json, validated, write_atomic, AggregatedJson,
    CertificateFile, DualJson, FieldReportJson, GapFile, GapSettingsJson, ProblemFile,
    SolutionFile,
};
use crate::json::to_artifact;
use crate::mm::parse_dense;

#[derive(Debug, Parser)]
#[command(
    name = "specnorm",
    version,
    about = "Best spectral-norm approximation from a matrix subspace"
)]
pub struct Cli {
    /// Relative tolerance for grouping singular values with the largest one.
    #[arg(long, global = true, default_value_t = DEFAULT_CLUSTER_RTOL)]
    pub cluster_rtol: f64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve min ‖Y − Σ aᵢXᵢ‖₂ and write the coefficients.
    Solve(SolveArgs),
    /// Extract and verify an optimality certificate for a solution.
    Certify(CertifyArgs),
    /// Sample the joint field of values and test a target point.
    Field(FieldArgs),
    /// Compare the min-max value with the max-min lower bound.
    Gap(GapArgs),
    /// Write the doubled problem I₂ ⊗ Y, I₂ ⊗ Xᵢ.
    Double(DoubleArgs),
    /// Write a built-in problem.
    Example(ExampleArgs),
}

#[derive(Debug, Args)]
pub struct ProblemSource {
    /// Problem JSON file.
    #[arg(long, required_unless_present = "mm", conflicts_with = "mm")]
    pub problem: Option<PathBuf>,

    /// Dense real MatrixMarket files, Y first and then the basis.
    #[arg(long, num_args = 1.., value_name = "MTX")]
    pub mm: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub source: ProblemSource,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub source: ProblemSource,
    #[arg(long)]
    pub solution: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetKind {
    /// ρe₁ in the field of (A_Y, A₁, …, A_k).
    RhoE1,
    /// 0 in the field of the grams compressed to the maximal singular subspace.
    ZeroRestricted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Ply,
}

#[derive(Debug, Args)]
pub struct FieldArgs {
    #[command(flatten)]
    pub source: ProblemSource,
    #[arg(long)]
    pub solution: PathBuf,
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = TargetKind::RhoE1)]
    pub target: TargetKind,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
    /// Tolerance of the hull membership test.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Point cloud path; a JSON report is written next to it with `.json` appended.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GapArgs {
    #[command(flatten)]
    pub source: ProblemSource,
    #[arg(long, default_value_t = 64)]
    pub starts: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DoubleArgs {
    #[command(flatten)]
    pub source: ProblemSource,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExampleName {
    LauRiha,
    Jordan,
    SingularDiag,
    Nonunique,
    GmresDiag,
}

#[derive(Debug, Args)]
pub struct ExampleArgs {
    #[arg(long, value_enum)]
    pub name: ExampleName,
    /// Jordan eigenvalue.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the known optimal coefficients, where available.
    #[arg(long)]
    pub solution_out: Option<PathBuf>,
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(CliError::Input(format!(
            "--{name} must be positive and finite, got {x}"
        )))
    }
}

pub fn load_problem(src: &ProblemSource) -> Result<Problem> {
    if let Some(path) = &src.problem {
        return read_json::<ProblemFile>(path)?.to_problem();
    }
    let mut mats = src
        .mm
        .iter()
        .map(|path| {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
                path: path.clone(),
                source,
            })?;
            parse_dense(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    if mats.len() < 2 {
        return Err(CliError::Input(
            "--mm needs Y and at least one basis matrix".into(),
        ));
    }
    let y = mats.remove(0);
    validated(Problem::new(FieldTag::Real, y, mats)?)
}

fn load_solution(p: &Problem, path: &Path) -> Result<Solution> {
    read_json::<SolutionFile>(path)?.to_solution(p)
}

/// Runs one command, writing human-readable results to `stdout`.
pub fn run(cli: &Cli, stdout: &mut impl Write) -> Result<()> {
    let rtol = cli.cluster_rtol;
    if !(rtol.is_finite() && (0.0..1.0).contains(&rtol)) {
        return Err(CliError::Input(format!(
            "--cluster-rtol must lie in [0, 1), got {rtol}"
        )));
    }
    match &cli.command {
        Command::Solve(args) => solve(args, stdout),
        Command::Certify(args) => certify(args, rtol, stdout),
        Command::Field(args) => field(args, rtol, stdout),
        Command::Gap(args) => gap(args, rtol, stdout),
        Command::Double(args) => {
            let p = double_problem(&load_problem(&args.source)?)?;
            write_atomic(&args.out, &to_artifact(&ProblemFile::from_problem(&p))?)?;
            writeln!(stdout, "n = {}\nk = {}", p.n(), p.k()).map_err(out_err)
        }
        Command::Example(args) => example(args, stdout),
    }
    .or_else(|e| match e {
        // a closed stdout is not a failure of the command
        CliError::Core(specnorm::Error::Io(ref io))
            if io.kind() == std::io::ErrorKind::BrokenPipe =>
        {
            Ok(())
        }
        e => Err(e),
    })
}

fn out_err(e: std::io::Error) -> CliError {
    CliError::Core(e.into())
}

fn solve(args: &SolveArgs, stdout: &mut impl Write) -> Result<()> {
    check_positive("tol", args.tol)?;
    let p = load_problem(&args.source)?;
    let settings = SdpSettings::default().with_gap_tol(args.tol);
    let (s, report) = solve_min_spectral(&p, &settings)?;
    let file = SolutionFile::new(&p, &s, Some((&settings, &report)));
    write_atomic(&args.out, &to_artifact(&file)?)?;
    writeln!(stdout, "sigma1 = {}", s.sigma1).map_err(out_err)?;
    writeln!(stdout, "rho = {}", s.rho).map_err(out_err)?;
    writeln!(stdout, "iterations = {}", report.iterations).map_err(out_err)
}

fn certify(args: &CertifyArgs, rtol: f64, stdout: &mut impl Write) -> Result<()> {
    check_positive("tol", args.tol)?;
    let p = load_problem(&args.source)?;
    let s = load_solution(&p, &args.solution)?;
    let settings = CertifySettings {
        cluster_rtol: rtol,
        verify_tol: args.tol,
        sdp: SdpSettings::default(),
    };
    let c = extract_certificate(&p, &s, &settings)?;
    let report = verify_certificate(&p, &s, &c, args.tol)?;
    if !report.passed() {
        return Err(CliError::Certificate(format!("{report:?}")));
    }
    let f = aggregate_dual(&c);
    let aggregated = AggregatedJson {
        nuclear_norm: f.nuclear_norm()?,
        pairing: f.pairing(&residual(&p, &s.a)?),
    };
    let dual = if p.field().is_real() {
        let w = build_dual_witness(&c)?;
        let r = verify_dual_witness(&p, &s, &w, args.tol)?;
        if !r.passed() {
            return Err(CliError::Certificate(format!("dual witness: {r:?}")));
        }
        Some(DualJson::new(&w, &r))
    } else {
        None
    };
    let file = CertificateFile::new(&p, &c, rtol, &report, aggregated, dual);
    write_atomic(&args.out, &to_artifact(&file)?)?;
    writeln!(stdout, "ell = {}", c.ell()).map_err(out_err)?;
    writeln!(stdout, "sigma1 = {}", c.sigma1).map_err(out_err)?;
    writeln!(stdout, "weights = {:?}", c.weights).map_err(out_err)?;
    let worst = report.orthogonality.iter().copied().fold(0.0, f64::max);
    writeln!(stdout, "max orthogonality = {worst:e}").map_err(out_err)?;
    writeln!(stdout, "verification = passed").map_err(out_err)
}

fn field(args: &FieldArgs, rtol: f64, stdout: &mut impl Write) -> Result<()> {
    check_positive("tol", args.tol)?;
    if args.samples == 0 {
        return Err(CliError::Input("--samples must be at least 1".into()));
    }
    let p = load_problem(&args.source)?;
    let s = load_solution(&p, &args.solution)?;
    let grams = build_grams(&p, &s)?;
    let (mats, target) = match args.target {
        TargetKind::RhoE1 => (grams.with_y(), grams.rho_target()),
        TargetKind::ZeroRestricted => {
            let (_, restricted) = grams.restricted(rtol)?;
            let d = point_dim(p.field(), restricted.len());
            (restricted, vec![0.0; d])
        }
    };
    let format = match args.format {
        FormatArg::Csv => CloudFormat::Csv,
        FormatArg::Ply => CloudFormat::Ply,
    };
    let dim = point_dim(p.field(), mats.len());
    if format == CloudFormat::Ply && dim != 3 {
        return Err(CliError::Input(format!(
            "ply export needs 3 coordinates, the field has {dim}"
        )));
    }
    let cloud = sample_field(p.field(), &mats, None, args.samples, args.seed)?;
    let hull = hull_membership_exact(p.field(), &mats, &target, args.tol, &SdpSettings::default())?;
    let nearest = cloud
        .points
        .iter()
        .map(|q| {
            q.iter()
                .zip(&target)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(f64::INFINITY, f64::min);
    let report = FieldReportJson {
        target_kind: match args.target {
            TargetKind::RhoE1 => "rho-e1",
            TargetKind::ZeroRestricted => "zero-restricted",
        }
        .into(),
        target: target.clone(),
        samples: args.samples,
        seed: args.seed,
        format: match format {
            CloudFormat::Csv => "csv",
            CloudFormat::Ply => "ply",
        }
        .into(),
        cluster_rtol: rtol,
        tol: args.tol,
        hull_status: membership_name(hull.status).into(),
        hull_distance: hull.distance,
        nearest_sample: nearest,
    };
    let mut sidecar = args.out.clone().into_os_string();
    sidecar.push(".json");
    let report_bytes = to_artifact(&report)?;
    export_cloud(&cloud, format, Some(&target), &args.out)?;
    write_atomic(Path::new(&sidecar), &report_bytes)?;
    writeln!(stdout, "target = {target:?}").map_err(out_err)?;
    writeln!(stdout, "hull = {}", membership_name(hull.status)).map_err(out_err)?;
    writeln!(stdout, "hull distance = {:e}", hull.distance).map_err(out_err)?;
    writeln!(stdout, "nearest sample = {nearest:e}").map_err(out_err)
}

fn gap(args: &GapArgs, rtol: f64, stdout: &mut impl Write) -> Result<()> {
    check_positive("tol", args.tol)?;
    if args.starts == 0 {
        return Err(CliError::Input("--starts must be at least 1".into()));
    }
    let p = load_problem(&args.source)?;
    let sdp = SdpSettings::default();
    let (s, _) = solve_min_spectral(&p, &sdp)?;
    let mut hints = solution_starts(&p, &s)?;
    let cert_settings = CertifySettings {
        cluster_rtol: rtol,
        ..CertifySettings::default()
    };
    // certificate vectors are good ascent starts; a missing certificate only
    // costs those hints
    if let Ok(c) = extract_certificate(&p, &s, &cert_settings) {
        hints.extend(certificate_starts(&c));
    }
    let mm_settings = MaxMinSettings {
        starts: args.starts,
        seed: args.seed,
        ..MaxMinSettings::default()
    };
    let mm = maxmin_solve(&p, &hints, &mm_settings)?;
    let gap_settings = GapSettings {
        tol: args.tol,
        cluster_rtol: rtol,
        search: SearchSettings {
            seed: args.seed,
            ..SearchSettings::default()
        },
        sdp,
    };
    let g = diagnose_gap(&p, &s, &mm, &gap_settings)?;
    let settings = GapSettingsJson {
        starts: args.starts,
        seed: args.seed,
        tol: args.tol,
        cluster_rtol: rtol,
        sdp: (&sdp).into(),
    };
    write_atomic(
        &args.out,
        &to_artifact(&GapFile::new(&p, &s, &mm, &g, settings))?,
    )?;
    let c = &g.conditions;
    for line in [
        format!("minmax = {}", g.minmax),
        format!("maxmin = {}", g.maxmin),
        format!("gap = {:e}", g.gap),
        format!("relative gap = {:e}", g.relative_gap),
        format!("status = {}", equality_name(g.status)),
        format!("single basis matrix = {}", c.single_basis),
        format!(
            "simple top singular value = {}",
            c.simple_top_singular_value
        ),
        format!("real k = 2 with dim Σ >= 3 = {}", c.real_pair_wide_subspace),
        format!("dim Σ = {}", c.sigma_dim),
    ] {
        writeln!(stdout, "{line}").map_err(out_err)?;
    }
    Ok(())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// The problem and, where known, optimal coefficients.
pub fn build_example(args: &ExampleArgs) -> Result<(Problem, Option<Vec<f64>>)> {
    let range =
        |n: usize, start: f64| real_diag(&(0..n).map(|i| start + i as f64).collect::<Vec<_>>());
    let fixed = |what: &str| {
        if args.n.is_some() || args.k.is_some() {
            Err(CliError::Input(format!(
                "the {what} example takes no --n/--k"
            )))
        } else {
            Ok(())
        }
    };
    Ok(match args.name {
        ExampleName::LauRiha => {
            fixed("lau-riha")?;
            (lau_riha_problem(), None)
        }
        ExampleName::Jordan => {
            let (n, k) = (args.n.unwrap_or(3), args.k.unwrap_or(2));
            if !args.lambda.is_finite() {
                return Err(CliError::Input("--lambda must be finite".into()));
            }
            let j = jordan_block(C64::new(args.lambda, 0.0), n)?;
            let p = ideal_arnoldi_problem(&j, k)?;
            // X* = J^k − (J − λI)^k expanded in I, J, …, J^{k−1}
            let a = (0..k)
                .map(|i| -binomial(k, i) * (-args.lambda).powi((k - i) as i32))
                .collect();
            (p, Some(a))
        }
        ExampleName::SingularDiag => {
            let (n, k) = (args.n.unwrap_or(4), args.k.unwrap_or(2));
            (ideal_gmres_problem(&range(n, 0.0), k)?, Some(vec![0.0; k]))
        }
        ExampleName::Nonunique => {
            fixed("nonunique")?;
            (
                ideal_gmres_problem(&range(3, 0.0), 2)?,
                Some(vec![0.2, 0.3]),
            )
        }
        ExampleName::GmresDiag => {
            let (n, k) = (args.n.unwrap_or(2), args.k.unwrap_or(1));
            let a = (n, k) == (2, 1);
            (
                ideal_gmres_problem(&range(n, 1.0), k)?,
                a.then(|| vec![2.0 / 3.0]),
            )
        }
    })
}

fn example(args: &ExampleArgs, stdout: &mut impl Write) -> Result<()> {
    let (p, reference) = build_example(args)?;
    let solution = match (&args.solution_out, reference) {
        (None, _) => None,
        (Some(path), Some(a)) => Some((path, Solution::from_real(&p, &a)?)),
        (Some(_), None) => {
            return Err(CliError::Input(
                "no reference solution is known for this example".into(),
            ))
        }
    };
    let problem_bytes = to_artifact(&ProblemFile::from_problem(&p))?;
    let solution_bytes = solution
        .as_ref()
        .map(|(_, s)| to_artifact(&SolutionFile::new(&p, s, None)))
        .transpose()?;
    write_atomic(&args.out, &problem_bytes)?;
    if let (Some((path, s)), Some(bytes)) = (&solution, solution_bytes) {
        write_atomic(path, &bytes)?;
        writeln!(stdout, "reference sigma1 = {}", s.sigma1).map_err(out_err)?;
    }
    writeln!(stdout, "n = {}\nk = {}", p.n(), p.k()).map_err(out_err)
}
