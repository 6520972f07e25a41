//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs without the libtest harness so the lines always show.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use serde_json::Value;
use specnorm::certify::{
    aggregate_dual, build_dual_witness, extract_certificate, verify_dual_witness, CertifySettings,
};
use specnorm::field::{build_grams, hull_membership_exact, seeded_unit, MembershipStatus};
use specnorm::linalg::{identity, real_diag, residual, CVec, Mat, C64};
use specnorm::maxmin::{
    danskin_gradient, double_problem, doubled_start, maxmin_solve, objective, solution_starts,
    MaxMinSettings,
};
use specnorm::problems::{
    brute_force_value, grid_slack, hermitian_shift_oracle, ideal_arnoldi_problem,
    ideal_gmres_problem, jordan_block, lau_riha_problem, random_matrix, random_problem,
};
use specnorm::sdp::{build_lmi, ipm_solve, solve_min_spectral, SdpSettings};
use specnorm::{FieldTag, Problem, Solution};

const HULL_TOL: f64 = 1e-6;

type Outcome = Result<String, String>;
type Criterion = (usize, &'static str, fn() -> Outcome);

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_specnorm"))
}

fn run_cli(args: &[&str]) -> Result<Duration, String> {
    let start = Instant::now();
    let out = bin().args(args).output().map_err(|e| e.to_string())?;
    let took = start.elapsed();
    if out.status.success() {
        Ok(took)
    } else {
        Err(format!(
            "`specnorm {}` exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn solve(p: &Problem) -> Result<Solution, String> {
    solve_min_spectral(p, &SdpSettings::default())
        .map(|(s, _)| s)
        .map_err(|e| e.to_string())
}

fn jordan(n: usize, k: usize) -> Problem {
    ideal_arnoldi_problem(&jordan_block(C64::new(1.0, 0.0), n).unwrap(), k).unwrap()
}

/// The built-in examples with their default parameters.
fn builtins() -> Vec<(&'static str, Problem)> {
    vec![
        ("lau-riha", lau_riha_problem()),
        ("jordan", jordan(3, 2)),
        (
            "singular-diag",
            ideal_gmres_problem(&real_diag(&[0.0, 1.0, 2.0, 3.0]), 2).unwrap(),
        ),
        (
            "nonunique",
            ideal_gmres_problem(&real_diag(&[0.0, 1.0, 2.0]), 2).unwrap(),
        ),
        (
            "gmres-diag",
            ideal_gmres_problem(&real_diag(&[1.0, 2.0]), 1).unwrap(),
        ),
    ]
}

fn criterion_1() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let problem = dir.path().join("lr.json");
    let sol = dir.path().join("lr.sol.json");
    run_cli(&["example", "--name", "lau-riha", "--out", path_str(&problem)])?;
    let took = run_cli(&[
        "solve",
        "--problem",
        path_str(&problem),
        "--out",
        path_str(&sol),
    ])?;
    let v = read_json(&sol)?;
    let a: Vec<f64> = v["a"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    let rho = v["rho"].as_f64().unwrap();
    let da = (a[0] - 0.270019).abs().max((a[1] - 1.587964).abs());
    let drho = (rho - 0.294068).abs();
    check(
        da <= 1e-4 && drho <= 1e-5 && took < Duration::from_secs(1),
        format!(
            "a = ({:.6}, {:.6}) |Δa| = {da:.1e}, rho = {rho:.7} |Δrho| = {drho:.1e}, {:.0} ms",
            a[0],
            a[1],
            took.as_secs_f64() * 1e3
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    for k in 1..=5 {
        worst = worst.max((solve(&jordan(6, k))?.sigma1 - 1.0).abs());
    }
    let s = solve(&jordan(3, 2))?;
    let dc = (s.a[0] - C64::new(-1.0, 0.0))
        .norm()
        .max((s.a[1] - C64::new(2.0, 0.0)).norm());

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let problem = dir.path().join("j.json");
    let sol = dir.path().join("j.sol.json");
    let cert = dir.path().join("j.cert.json");
    run_cli(&[
        "example",
        "--name",
        "jordan",
        "--lambda",
        "1",
        "--n",
        "3",
        "--k",
        "2",
        "--out",
        path_str(&problem),
    ])?;
    run_cli(&[
        "solve",
        "--problem",
        path_str(&problem),
        "--out",
        path_str(&sol),
    ])?;
    run_cli(&[
        "certify",
        "--problem",
        path_str(&problem),
        "--solution",
        path_str(&sol),
        "--out",
        path_str(&cert),
    ])?;
    let c = read_json(&cert)?;
    let ell = c["ell"].as_u64().unwrap();
    let v: Vec<f64> = c["v"][0]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    let along = v[2].abs();
    let sigma1 = c["sigma1"].as_f64().unwrap();
    let ver = &c["verification"];
    let orth = ver["orthogonality"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .fold(0.0, f64::max);
    let align = (ver["alignment"][0].as_f64().unwrap() - sigma1).abs();
    let resid = orth.max(align);
    check(
        worst <= 1e-6 && dc <= 1e-5 && ell == 1 && (along - 1.0).abs() <= 1e-8 && resid <= 1e-8,
        format!("n=6 max |value-1| = {worst:.1e}; n=3 |a-(-1,2)| = {dc:.1e}; certificate ell = {ell}, |<v,e3>| = {along:.12}, residual {resid:.1e}"),
    )
}

fn criterion_3() -> Outcome {
    let a = real_diag(&[0.0, 1.0, 2.0, 3.0]);
    let (mut dv, mut dm): (f64, f64) = (0.0, 0.0);
    for k in 1..=3 {
        let p = ideal_gmres_problem(&a, k).unwrap();
        let s = solve(&p)?;
        dv = dv.max((s.sigma1 - 1.0).abs());
        let hints = solution_starts(&p, &s).map_err(|e| e.to_string())?;
        let mm = maxmin_solve(&p, &hints, &MaxMinSettings::default()).map_err(|e| e.to_string())?;
        dm = dm.max((mm.value - 1.0).abs());
    }
    check(
        dv <= 1e-7 && dm <= 1e-6,
        format!("k = 1..3: max |value-1| = {dv:.1e}, max |maxmin-1| = {dm:.1e}"),
    )
}

fn restricted_status(p: &Problem, s: &Solution) -> Result<MembershipStatus, String> {
    let grams = build_grams(p, s).map_err(|e| e.to_string())?;
    let (_, restricted) = grams
        .restricted(specnorm::linalg::DEFAULT_CLUSTER_RTOL)
        .map_err(|e| e.to_string())?;
    let zero = vec![0.0; restricted.len() * p.field().real_dim()];
    hull_membership_exact(
        p.field(),
        &restricted,
        &zero,
        HULL_TOL,
        &SdpSettings::default(),
    )
    .map(|h| h.status)
    .map_err(|e| e.to_string())
}

fn full_status(p: &Problem, s: &Solution) -> Result<MembershipStatus, String> {
    let grams = build_grams(p, s).map_err(|e| e.to_string())?;
    hull_membership_exact(
        p.field(),
        &grams.with_y(),
        &grams.rho_target(),
        HULL_TOL,
        &SdpSettings::default(),
    )
    .map(|h| h.status)
    .map_err(|e| e.to_string())
}

fn criterion_4() -> Outcome {
    let examples = builtins();
    let mut solved = Vec::new();
    let mut agree = 0;
    let mut cases = 0;
    for (name, p) in &examples {
        let s = solve(p)?;
        let mut points = vec![s.clone()];
        if *name == "nonunique" {
            points.push(Solution::from_real(p, &[0.2, 0.3]).unwrap());
        }
        for s in points {
            cases += 1;
            let full = full_status(p, &s)?;
            let restricted = restricted_status(p, &s)?;
            if full == MembershipStatus::Inside && restricted == MembershipStatus::Inside {
                agree += 1;
            }
        }
        solved.push((p, s));
    }
    let mut outside = 0;
    for i in 0..20u64 {
        let (p, s) = &solved[i as usize % solved.len()];
        let dir = seeded_unit(p.field(), p.k(), 4040, i);
        let mut t = 1e-3;
        let moved = loop {
            let a: Vec<C64> = s.a.iter().zip(dir.iter()).map(|(a, d)| a + d * t).collect();
            let m = Solution::from_coefficients(p, a).map_err(|e| e.to_string())?;
            if m.sigma1 >= s.sigma1 + 1e-3 {
                break m;
            }
            t *= 2.0;
        };
        if restricted_status(p, &moved)? == MembershipStatus::Outside {
            outside += 1;
        }
    }
    check(
        agree == cases && outside == 20,
        format!("optimal points Inside in both tests: {agree}/{cases}; perturbed points Outside: {outside}/20"),
    )
}

fn criterion_5() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, p) in builtins() {
        let s = solve(&p)?;
        let c = extract_certificate(&p, &s, &CertifySettings::default())
            .map_err(|e| format!("{name}: {e}"))?;
        let w = build_dual_witness(&c).map_err(|e| e.to_string())?;
        let d = verify_dual_witness(&p, &s, &w, 1e-8).map_err(|e| e.to_string())?;
        let orth = d.orthogonality.iter().copied().fold(0.0, f64::max);
        let f = aggregate_dual(&c);
        let nuc = f.nuclear_norm().map_err(|e| e.to_string())?;
        let pair = f.pairing(&residual(&p, &s.a).unwrap());
        let good = d.lambda_min >= -1e-8
            && (d.trace - 1.0).abs() <= 1e-10
            && orth <= 1e-7
            && (d.objective - d.sigma1).abs() <= 1e-6
            && (nuc - 1.0).abs() <= 1e-6
            && (pair - s.sigma1).abs() <= 1e-6;
        ok &= good;
        lines.push(format!(
            "{name}: lmin {:.1e}, |tr-1| {:.1e}, |tr(BX)| {orth:.1e}, |2tr(BY)-s1| {:.1e}, |nuc-1| {:.1e}, |<F,R>-s1| {:.1e}",
            d.lambda_min,
            (d.trace - 1.0).abs(),
            (d.objective - d.sigma1).abs(),
            (nuc - 1.0).abs(),
            (pair - s.sigma1).abs()
        ));
    }
    check(ok, lines.join("; "))
}

fn criterion_6() -> Outcome {
    let mut grid_ok = 0;
    let mut grid_excess: f64 = 0.0;
    for i in 0..30u64 {
        let n = 2 + (i % 4) as usize;
        let k = 1 + (i % 2) as usize;
        let p = random_problem(FieldTag::Real, n, k, 6000 + i).unwrap();
        let s = solve(&p)?;
        let h = 2.0 * s.a.iter().map(|z| z.norm()).fold(0.0, f64::max) + 1.0;
        let grid = if k == 1 { 20_001 } else { 401 };
        let brute = brute_force_value(&p, h, grid).map_err(|e| e.to_string())?;
        let slack = grid_slack(&p, h, grid).map_err(|e| e.to_string())?;
        grid_excess = grid_excess.max((brute - s.sigma1) / (slack + 1e-6));
        if (brute - s.sigma1).abs() <= slack + 1e-6 && brute >= s.sigma1 - 1e-8 {
            grid_ok += 1;
        }
    }
    let mut oracle_ok = 0;
    let mut worst: f64 = 0.0;
    for i in 0..30u64 {
        let n = 2 + (i % 4) as usize;
        let m = random_matrix(FieldTag::Complex, n, 7000 + i);
        let h: Mat = (&m + m.adjoint()).scale(0.5);
        let p = Problem::new(FieldTag::Complex, h.clone(), vec![identity(n)]).unwrap();
        let s = solve(&p)?;
        let (_, value) = hermitian_shift_oracle(&h).map_err(|e| e.to_string())?;
        let err = (s.sigma1 - value).abs();
        worst = worst.max(err);
        if err <= 1e-8 {
            oracle_ok += 1;
        }
    }
    check(
        grid_ok == 30 && oracle_ok == 30,
        format!("grid oracle {grid_ok}/30 (largest excess/slack {grid_excess:.2}); Hermitian shift oracle {oracle_ok}/30 (max error {worst:.1e})"),
    )
}

fn criterion_7() -> Outcome {
    let mut weak = 0;
    let mut k1 = 0;
    let mut k1_ok = 0;
    let mut worst_k1: f64 = 0.0;
    let mut worst_excess = f64::NEG_INFINITY;
    for i in 0..50u64 {
        let field = if i % 2 == 0 {
            FieldTag::Real
        } else {
            FieldTag::Complex
        };
        let n = 2 + (i % 3) as usize;
        let k = 1 + ((i / 2) % 3) as usize;
        let p = random_problem(field, n, k, 8000 + i).unwrap();
        let s = solve(&p)?;
        let hints = solution_starts(&p, &s).map_err(|e| e.to_string())?;
        let mm = maxmin_solve(&p, &hints, &MaxMinSettings::default()).map_err(|e| e.to_string())?;
        worst_excess = worst_excess.max(mm.value - s.sigma1);
        if mm.value <= s.sigma1 + 1e-8 {
            weak += 1;
        }
        if k == 1 {
            k1 += 1;
            let rel = (s.sigma1 - mm.value) / s.sigma1;
            worst_k1 = worst_k1.max(rel);
            if rel <= 1e-4 {
                k1_ok += 1;
            }
        }
    }
    check(
        weak == 50 && k1_ok == k1,
        format!("maxmin <= minmax + 1e-8: {weak}/50 (max excess {worst_excess:.1e}); k=1 relative gap <= 1e-4: {k1_ok}/{k1} (max {worst_k1:.1e})"),
    )
}

fn criterion_8() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, p) in builtins() {
        let s = solve(&p)?;
        let c = extract_certificate(&p, &s, &CertifySettings::default())
            .map_err(|e| format!("{name}: {e}"))?;
        let d = double_problem(&p).map_err(|e| e.to_string())?;
        let start = doubled_start(&c).ok_or("empty certificate")?;
        let mm =
            maxmin_solve(&d, &[start], &MaxMinSettings::default()).map_err(|e| e.to_string())?;
        let rel = (s.sigma1 - mm.value).abs() / s.sigma1;
        ok &= rel <= 1e-6;
        lines.push(format!("{name} {rel:.1e}"));
    }
    check(
        ok,
        format!("relative |doubled maxmin - minmax|: {}", lines.join(", ")),
    )
}

/// Central differences of `objective` in every real coordinate of `v`.
fn fd_gradient(p: &Problem, v: &CVec, h: f64) -> Result<Vec<f64>, String> {
    let directions: Vec<C64> = match p.field() {
        FieldTag::Real => vec![C64::new(1.0, 0.0)],
        FieldTag::Complex => vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0)],
    };
    let mut out = Vec::new();
    for d in directions {
        for i in 0..v.len() {
            let (mut plus, mut minus) = (v.clone(), v.clone());
            plus[i] += d * h;
            minus[i] -= d * h;
            let fp = objective(p, &plus).map_err(|e| e.to_string())?;
            let fm = objective(p, &minus).map_err(|e| e.to_string())?;
            out.push((fp - fm) / (2.0 * h));
        }
    }
    Ok(out)
}

fn criterion_9() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut total = 0;
    for (idx, (_, p)) in builtins().into_iter().enumerate() {
        for j in 0..50u64 {
            let v = seeded_unit(p.field(), p.n(), 9000 + idx as u64, j);
            let g = danskin_gradient(&p, &v).map_err(|e| e.to_string())?;
            let analytic: Vec<f64> = match p.field() {
                FieldTag::Real => g.iter().map(|z| z.re).collect(),
                FieldTag::Complex => g
                    .iter()
                    .map(|z| z.re)
                    .chain(g.iter().map(|z| z.im))
                    .collect(),
            };
            let fd = fd_gradient(&p, &v, 1e-6)?;
            let diff = fd
                .iter()
                .zip(&analytic)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let norm = analytic.iter().map(|x| x * x).sum::<f64>().sqrt();
            worst = worst.max(diff / norm);
            total += 1;
        }
    }

    let lr = lau_riha_problem();
    let lmi = build_lmi(&lr);
    let settings = SdpSettings::default();
    let runs: Vec<_> = (0..3)
        .map(|_| ipm_solve(&lmi, &settings).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let bits = |r: &(specnorm::sdp::LmiSolution, specnorm::sdp::SdpReport)| -> Vec<u64> {
        r.0.params
            .iter()
            .map(|x| x.to_bits())
            .chain([r.0.t.to_bits(), r.1.duality_gap.to_bits()])
            .collect()
    };
    let ipm_same = runs
        .windows(2)
        .all(|w| bits(&w[0]) == bits(&w[1]) && w[0].1.iterations == w[1].1.iterations);
    let solves: Vec<Vec<u64>> = (0..3)
        .map(|_| {
            solve(&jordan(6, 3)).map(|s| {
                s.a.iter()
                    .flat_map(|z| [z.re.to_bits(), z.im.to_bits()])
                    .collect()
            })
        })
        .collect::<Result<_, _>>()?;
    let solve_same = solves.windows(2).all(|w| w[0] == w[1]);
    check(
        worst <= 1e-5 && ipm_same && solve_same,
        format!("Danskin vs central differences over {total} points: max relative error {worst:.1e}; IPM bitwise repeatable: {}", ipm_same && solve_same),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "Lau-Riha reproduction", criterion_1),
        (2, "Jordan family", criterion_2),
        (3, "singular stagnation", criterion_3),
        (4, "geometric equivalence", criterion_4),
        (5, "certificate and dual witness", criterion_5),
        (6, "oracle equivalence", criterion_6),
        (7, "weak duality and k=1 equality", criterion_7),
        (8, "doubling", criterion_8),
        (9, "numerical property checks", criterion_9),
    ];
    let filter: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("criterion {id} ({name}): PASS [{secs:.1}s] {msg}"),
            Err(msg) => {
                failed += 1;
                println!("criterion {id} ({name}): FAIL [{secs:.1}s] {msg}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
