use proptest::prelude::*;
use specnorm::certify::{
    aggregate_dual, build_dual_witness, extract_certificate, max_ell, verify_dual_witness,
    CertifySettings,
};
use specnorm::field::{build_grams, field_point, hull_membership_exact, sample_field, seeded_unit};
use specnorm::linalg::{
    identity, maximal_right_singular_subspace, nuclear_norm, residual, spectral_norm, svd, CVec,
    FieldTag, Mat, C64,
};
use specnorm::maxmin::{
    danskin_gradient, diagnose_gap, inner_min, maxmin_solve, objective, solution_starts,
    witness_holds, GapSettings, MaxMinSettings,
};
use specnorm::problems::{brute_force_value, ideal_gmres_problem, random_matrix, random_problem};
use specnorm::sdp::{solve_min_spectral, SdpSettings};
use specnorm::Problem;

fn field_of(complex: bool) -> FieldTag {
    if complex {
        FieldTag::Complex
    } else {
        FieldTag::Real
    }
}

fn unitary(field: FieldTag, n: usize, seed: u64) -> Mat {
    random_matrix(field, n, seed).qr().q()
}

fn sdp() -> SdpSettings {
    SdpSettings::default()
}

fn solved(field: FieldTag, n: usize, k: usize, seed: u64) -> (Problem, specnorm::Solution) {
    let p = random_problem(field, n, k, seed).unwrap();
    let (s, _) = solve_min_spectral(&p, &sdp()).unwrap();
    (p, s)
}

fn close_rel(a: f64, b: f64, rtol: f64) -> bool {
    (a - b).abs() <= rtol * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn spectral_at_most_nuclear(complex in any::<bool>(), n in 1usize..6, seed in any::<u64>()) {
        let m = random_matrix(field_of(complex), n, seed);
        let s = spectral_norm(&m).unwrap();
        let nuc = nuclear_norm(&m).unwrap();
        prop_assert!(s <= nuc * (1.0 + 1e-12));
        if n >= 2 {
            // Gaussian matrices have full rank almost surely
            prop_assert!(nuc > s * (1.0 + 1e-6));
        }
    }

    #[test]
    fn rank_one_has_equal_norms(complex in any::<bool>(), n in 1usize..6, seed in any::<u64>()) {
        let f = field_of(complex);
        let u = seeded_unit(f, n, seed, 0) * C64::new(3.0, 0.0);
        let v = seeded_unit(f, n, seed, 1);
        let m = &u * v.adjoint();
        prop_assert!(close_rel(spectral_norm(&m).unwrap(), nuclear_norm(&m).unwrap(), 1e-12));
    }

    #[test]
    fn spectral_norm_unitarily_invariant(complex in any::<bool>(), n in 1usize..7, seed in any::<u64>()) {
        let f = field_of(complex);
        let m = random_matrix(f, n, seed);
        let q = unitary(f, n, seed.wrapping_add(1));
        let r = unitary(f, n, seed.wrapping_add(2));
        let a = spectral_norm(&m).unwrap();
        let b = spectral_norm(&(&q * &m * &r)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn svd_reconstructs(complex in any::<bool>(), n in 1usize..7, seed in any::<u64>()) {
        let m = random_matrix(field_of(complex), n, seed);
        let s = svd(&m).unwrap();
        prop_assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
        let err = spectral_norm(&(&m - s.reconstruct())).unwrap();
        prop_assert!(err <= 1e-12 * s.sigma1() * n as f64);
    }

    #[test]
    fn maximal_subspace_attains_top_value(complex in any::<bool>(), n in 2usize..7, seed in any::<u64>()) {
        let f = field_of(complex);
        // force a repeated top singular value
        let mut d = vec![2.0, 2.0];
        d.extend((2..n).map(|i| 1.0 / i as f64));
        let q = unitary(f, n, seed);
        let r = unitary(f, n, seed.wrapping_add(7));
        let diag = Mat::from_fn(n, n, |i, j| if i == j { C64::new(d[i], 0.0) } else { C64::new(0.0, 0.0) });
        let m = &q * diag * &r;
        let rtol = 1e-6;
        let v = maximal_right_singular_subspace(&m, rtol).unwrap();
        prop_assert_eq!(v.ncols(), 2);
        for c in v.column_iter() {
            prop_assert!((&m * c).norm() >= 2.0 * (1.0 - 2.0 * rtol));
        }
    }

    #[test]
    fn gmres_basis_is_a_krylov_sequence(n in 3usize..6, k in 1usize..3, seed in any::<u64>()) {
        let a = random_matrix(FieldTag::Real, n, seed);
        let p = ideal_gmres_problem(&a, k).unwrap();
        for i in 1..k {
            prop_assert_eq!(&p.basis()[i], &(&a * &p.basis()[i - 1]));
        }
        prop_assert_eq!(&p.basis()[0], &a);
    }

    #[test]
    fn field_point_unitarily_invariant(complex in any::<bool>(), n in 1usize..6, seed in any::<u64>()) {
        let f = field_of(complex);
        let mats: Vec<Mat> = (0..3).map(|i| random_matrix(f, n, seed.wrapping_add(i))).collect();
        let q = unitary(f, n, seed.wrapping_add(10));
        let rotated: Vec<Mat> = mats.iter().map(|a| q.adjoint() * a * &q).collect();
        let v = seeded_unit(f, n, seed, 3);
        let a = field_point(f, &mats, &v);
        let b = field_point(f, &rotated, &(q.adjoint() * &v));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn solution_beats_random_coefficients(complex in any::<bool>(), n in 2usize..5, k in 1usize..3, seed in any::<u64>()) {
        let (p, s) = solved(field_of(complex), n, k, seed);
        let st = sdp();
        for j in 0..100u64 {
            let b: Vec<C64> = seeded_unit(p.field(), k, seed, 100 + j).iter().map(|z| z * 3.0).collect();
            let other = spectral_norm(&residual(&p, &b).unwrap()).unwrap();
            prop_assert!(s.sigma1 <= other + 10.0 * st.gap_tol);
        }
        prop_assert_eq!(s.rho, s.sigma1 * s.sigma1);
    }

    #[test]
    fn extra_basis_never_increases_value(complex in any::<bool>(), n in 2usize..5, k in 1usize..3, seed in any::<u64>()) {
        let (p, s) = solved(field_of(complex), n, k, seed);
        let bigger = p.with_extra_basis(random_matrix(p.field(), n, seed ^ 0x55)).unwrap();
        let (s2, _) = solve_min_spectral(&bigger, &sdp()).unwrap();
        prop_assert!(s2.sigma1 <= s.sigma1 + 1e-8);
    }

    #[test]
    fn value_is_positively_homogeneous(complex in any::<bool>(), n in 2usize..5, seed in any::<u64>(), scale in 0.1f64..10.0) {
        let (p, s) = solved(field_of(complex), n, 1, seed);
        let c = if complex { C64::from_polar(scale, 0.7) } else { C64::new(-scale, 0.0) };
        let (s2, _) = solve_min_spectral(&p.scaled(c).unwrap(), &sdp()).unwrap();
        prop_assert!(close_rel(s2.sigma1, scale * s.sigma1, 1e-9));
    }

    #[test]
    fn solver_is_bitwise_deterministic(complex in any::<bool>(), n in 2usize..5, k in 1usize..3, seed in any::<u64>()) {
        let p = random_problem(field_of(complex), n, k, seed).unwrap();
        let (s1, r1) = solve_min_spectral(&p, &sdp()).unwrap();
        let (s2, r2) = solve_min_spectral(&p, &sdp()).unwrap();
        prop_assert_eq!(s1.sigma1.to_bits(), s2.sigma1.to_bits());
        prop_assert!(s1.a.iter().zip(&s2.a).all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits()));
        prop_assert_eq!(format!("{r1:?}"), format!("{r2:?}"));
    }

    #[test]
    fn grid_never_beats_solver(n in 2usize..5, seed in any::<u64>()) {
        let (p, s) = solved(FieldTag::Real, n, 1, seed);
        let h = s.a[0].norm() + 1.0;
        let bf = brute_force_value(&p, h, 201).unwrap();
        prop_assert!(bf >= s.sigma1 - 1e-8);
    }

    #[test]
    fn certificate_invariants(complex in any::<bool>(), n in 2usize..5, k in 1usize..3, seed in any::<u64>()) {
        let (p, s) = solved(field_of(complex), n, k, seed);
        let c = extract_certificate(&p, &s, &CertifySettings::default()).unwrap();
        prop_assert!(c.ell() >= 1 && c.ell() <= max_ell(p.field(), k));
        prop_assert!(c.weights.iter().all(|&w| w > 0.0));
        prop_assert!((c.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        for (u, v) in c.u.iter().zip(&c.v) {
            prop_assert!((u.norm() - 1.0).abs() <= 1e-10);
            prop_assert!((v.norm() - 1.0).abs() <= 1e-10);
        }
        let f = aggregate_dual(&c);
        prop_assert!((f.nuclear_norm().unwrap() - 1.0).abs() <= 1e-6);
        if !complex {
            let w = build_dual_witness(&c).unwrap();
            let rep = verify_dual_witness(&p, &s, &w, 1e-6).unwrap();
            prop_assert!((rep.trace - 1.0).abs() <= 1e-10);
            prop_assert!(rep.lambda_min >= -1e-10);
            // strong duality
            let by = (w.b() * specnorm::linalg::real_part(p.y())).trace();
            prop_assert!((2.0 * by - s.sigma1).abs() <= 1e-6);
        }
    }

    #[test]
    fn gram_identity_holds(complex in any::<bool>(), n in 2usize..5, k in 1usize..3, seed in any::<u64>()) {
        let (p, s) = solved(field_of(complex), n, k, seed);
        let g = build_grams(&p, &s).unwrap();
        prop_assert!(g.identity_residual() <= 1e-10 * (1.0 + s.rho));
    }

    #[test]
    fn sampled_points_are_inside_their_hull(complex in any::<bool>(), n in 2usize..4, seed in any::<u64>()) {
        let f = field_of(complex);
        let mats: Vec<Mat> = (0..2).map(|i| random_matrix(f, n, seed.wrapping_add(i))).collect();
        let cloud = sample_field(f, &mats, None, 4, seed).unwrap();
        for (pt, g) in cloud.points.iter().zip(&cloud.generators) {
            let again = field_point(f, &mats, g);
            prop_assert!(pt.iter().zip(&again).all(|(a, b)| (a - b).abs() <= 1e-12));
            let r = hull_membership_exact(f, &mats, pt, 1e-8, &sdp()).unwrap();
            prop_assert!(r.is_inside(), "{:?} at {:?}", r.status, pt);
        }
    }

    #[test]
    fn maxmin_is_a_lower_bound(complex in any::<bool>(), n in 2usize..5, k in 1usize..3, seed in any::<u64>()) {
        let (p, s) = solved(field_of(complex), n, k, seed);
        let settings = MaxMinSettings { starts: 8, ..MaxMinSettings::default() };
        let mm = maxmin_solve(&p, &solution_starts(&p, &s).unwrap(), &settings).unwrap();
        prop_assert!(mm.value <= s.sigma1 + 1e-8);
        let direct = (residual(&p, &mm.a_of_v).unwrap() * &mm.v_star).norm();
        prop_assert!((mm.value - direct).abs() <= 1e-12 * (1.0 + direct));
    }

    #[test]
    fn single_basis_closes_the_gap(complex in any::<bool>(), n in 2usize..7, seed in any::<u64>()) {
        let (p, s) = solved(field_of(complex), n, 1, seed);
        let mm = maxmin_solve(&p, &solution_starts(&p, &s).unwrap(), &MaxMinSettings::default()).unwrap();
        prop_assert!((s.sigma1 - mm.value) / s.sigma1 <= 1e-4);
    }

    #[test]
    fn equal_status_has_a_valid_witness(complex in any::<bool>(), n in 2usize..5, k in 1usize..3, seed in any::<u64>()) {
        let (p, s) = solved(field_of(complex), n, k, seed);
        let settings = MaxMinSettings { starts: 16, ..MaxMinSettings::default() };
        let mm = maxmin_solve(&p, &solution_starts(&p, &s).unwrap(), &settings).unwrap();
        let gs = GapSettings::default();
        let rep = diagnose_gap(&p, &s, &mm, &gs).unwrap();
        if let Some(w) = &rep.witness {
            let g = build_grams(&p, &s).unwrap();
            prop_assert!(witness_holds(&g.with_y(), g.rho, w, gs.tol));
        }
    }

    #[test]
    fn danskin_gradient_matches_differences(complex in any::<bool>(), n in 2usize..5, k in 1usize..3, seed in any::<u64>()) {
        let f = field_of(complex);
        let p = random_problem(f, n, k, seed).unwrap();
        let h = 1e-6;
        for j in 0..10u64 {
            let v = seeded_unit(f, n, seed, 2 * j);
            if inner_min(&p, &v).unwrap().rank_deficient {
                continue;
            }
            let d = seeded_unit(f, n, seed, 2 * j + 1);
            let fd = (objective(&p, &(&v + &d * C64::new(h, 0.0))).unwrap()
                - objective(&p, &(&v - &d * C64::new(h, 0.0))).unwrap())
                / (2.0 * h);
            let an = danskin_gradient(&p, &v).unwrap().dotc(&d).re;
            let scale = danskin_gradient(&p, &v).unwrap().norm().max(1e-12);
            prop_assert!((fd - an).abs() <= 1e-5 * scale + 1e-12, "fd {fd} analytic {an}");
        }
    }
}

#[test]
fn identity_basis_matches_eigenvalue_oracle() {
    for seed in 0..10u64 {
        for f in [FieldTag::Real, FieldTag::Complex] {
            let z = random_matrix(f, 4, seed);
            let y = (&z + z.adjoint()) * C64::new(0.5, 0.0);
            let p = Problem::new(f, y.clone(), vec![identity(4)]).unwrap();
            let (s, _) = solve_min_spectral(&p, &sdp()).unwrap();
            let (_, value) = specnorm::problems::hermitian_shift_oracle(&y).unwrap();
            assert!(
                (s.sigma1 - value).abs() <= 1e-8,
                "{} vs {}",
                s.sigma1,
                value
            );
        }
    }
}

#[test]
fn unit_vectors_depend_only_on_seed_and_index() {
    let a: Vec<CVec> = (0..5)
        .map(|i| seeded_unit(FieldTag::Complex, 3, 9, i))
        .collect();
    let b: Vec<CVec> = (0..5)
        .rev()
        .map(|i| seeded_unit(FieldTag::Complex, 3, 9, i))
        .collect();
    assert!(a.iter().zip(b.iter().rev()).all(|(x, y)| x == y));
}
