use std::sync::Arc;

use mixloc::fracops::{assemble_fractional, assemble_mixed, GridFunction};
use mixloc::functionals::{boundary_flux, h1_seminorm_sq, hs_doublesum, int_F, int_uf, OperatorSet};
use mixloc::geometry::{boundary_quadrature, build_grid, Domain, DomainKind, Grid};
use mixloc::pohozaev::{check_dilation, check_pohozaev, system_verdict, threshold_verdict, Conclusion};
use mixloc::solvers::{solve_linear, Nonlinearity, SystemNonlinearity};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(kind: DomainKind, n: usize) -> Arc<Grid> {
    Arc::new(build_grid(Domain::new(kind, 1.0).unwrap(), n).unwrap())
}

fn random_function(g: &Arc<Grid>, rng: &mut ChaCha8Rng, lo: f64) -> GridFunction {
    let values = (0..g.len()).map(|_| rng.gen_range(lo..1.0)).collect();
    GridFunction::new(g.clone(), values).unwrap()
}

#[test]
fn maximum_principle_on_random_sources() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (kind, n) in [
        (DomainKind::Interval, 128),
        (DomainKind::Disk2d, 24),
        (DomainKind::Ball3dRadial, 128),
    ] {
        let g = grid(kind, n);
        let op = assemble_mixed(&g, 1.0, 0.4).unwrap();
        for _ in 0..20 {
            let rhs = random_function(&g, &mut rng, 0.0);
            let u = solve_linear(&op, &rhs).unwrap();
            assert!(u.min() >= 0.0, "{kind:?}: min {}", u.min());
        }
    }
}

#[test]
fn forms_are_symmetric_on_random_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (kind, n) in [
        (DomainKind::Interval, 64),
        (DomainKind::Disk2d, 16),
        (DomainKind::Ball3dRadial, 64),
    ] {
        let g = grid(kind, n);
        let op = assemble_mixed(&g, 0.7, 0.35).unwrap();
        for _ in 0..5 {
            let u = random_function(&g, &mut rng, -1.0);
            let w = random_function(&g, &mut rng, -1.0);
            let a = op.bilinear(u.values(), w.values());
            let b = op.bilinear(w.values(), u.values());
            assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()), "{kind:?}: {a} {b}");
            assert!(op.bilinear(u.values(), u.values()) > 0.0);
        }
    }
}

#[test]
fn grid_builds_serialize_identically() {
    for kind in [DomainKind::Interval, DomainKind::Disk2d, DomainKind::Ball3dRadial] {
        let a = serde_json::to_string(&*grid(kind, 16)).unwrap();
        let b = serde_json::to_string(&*grid(kind, 16)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn doubling_the_torsion_source_scales_quadratic_terms_by_four() {
    let g = grid(DomainKind::Interval, 256);
    let bq = boundary_quadrature(&g, 2).unwrap();
    let ops = OperatorSet::new(&g, 1.0, Some(0.5)).unwrap();
    let op = ops.mixed().unwrap();
    let u = solve_linear(&op, &GridFunction::from_fn(g.clone(), |_| 1.0)).unwrap();
    let u2 = u.scaled(2.0);
    let r1 = check_pohozaev(&u, &Nonlinearity::ConstantSource { c: 1.0 }, &ops, &bq).unwrap();
    let r2 = check_pohozaev(&u2, &Nonlinearity::ConstantSource { c: 2.0 }, &ops, &bq).unwrap();
    let (t1, t2) = (&r1.terms[0], &r2.terms[0]);
    assert_eq!(t2.h1_sq, 4.0 * t1.h1_sq);
    assert_eq!(t2.hs_sq_bilinear.unwrap(), 4.0 * t1.hs_sq_bilinear.unwrap());
    assert_eq!(t2.flux, 4.0 * t1.flux);
    assert_eq!(t2.int_F.unwrap(), 4.0 * t1.int_F.unwrap());
    assert_eq!(t2.int_uf.unwrap(), 4.0 * t1.int_uf.unwrap());
    assert_eq!(t2.energy.unwrap(), 4.0 * t1.energy.unwrap());
    assert_eq!((r2.lhs, r2.rhs), (4.0 * r1.lhs, 4.0 * r1.rhs));
}

fn tuple() -> impl Strategy<Value = SystemNonlinearity> {
    // equality cases (zero coefficients, exponents at 2* = 6) are drawn on purpose
    let v = prop_oneof![Just(0.0), -3.0..3.0f64];
    let e = prop_oneof![Just(3.0), Just(6.0), 1.0..9.0f64];
    (v.clone(), v.clone(), v, e.clone(), e.clone(), e.clone(), e).prop_map(
        |(lambda1, lambda2, delta, alpha, beta, p, q)| SystemNonlinearity {
            lambda1,
            lambda2,
            delta,
            alpha,
            beta,
            p,
            q,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn verdicts_are_exclusive_and_exhaustive(snl in tuple()) {
        let v = system_verdict(&snl, 3).unwrap();
        let h = v.hypothesis;
        let all = h.coupling && h.first && h.second;
        let strict = all && h.first_strict && h.second_strict;
        let matches = [
            v.conclusion == Conclusion::NoNontrivial,
            v.conclusion == Conclusion::NoPositive,
            v.conclusion == Conclusion::NoConclusion,
        ];
        prop_assert_eq!(matches.iter().filter(|m| **m).count(), 1);
        prop_assert_eq!(matches[0], strict);
        prop_assert_eq!(matches[1], all && !strict);
        prop_assert_eq!(matches[2], !all);
        prop_assert_eq!(system_verdict(&snl, 3).unwrap(), v);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn threshold_verdict_orders_lambda(lambda in -20.0..20.0f64, a in 0.0..3.0f64, s in 0.05..0.95f64, l1s in 0.5..10.0f64) {
        let v = threshold_verdict(lambda, a, s, l1s);
        prop_assert!(v.threshold >= 0.0);
        if lambda < v.threshold * (1.0 - 1e-5) {
            prop_assert_eq!(v.conclusion, mixloc::pohozaev::ThresholdConclusion::NonexistenceNontrivial);
        }
        if lambda > v.threshold * (1.0 + 1e-5) + 1e-300 {
            prop_assert_eq!(v.conclusion, mixloc::pohozaev::ThresholdConclusion::NoConclusion);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn functionals_are_homogeneous(c in -4.0..4.0f64, s in 0.1..0.9f64, kind in 0usize..3) {
        let kind = [DomainKind::Interval, DomainKind::Disk2d, DomainKind::Ball3dRadial][kind];
        let n = if kind == DomainKind::Disk2d { 16 } else { 64 };
        let g = grid(kind, n);
        let bq = boundary_quadrature(&g, 64).unwrap();
        let u = GridFunction::bump(g.clone(), 1.0).map(|v| v * (1.0 + v));
        let cu = u.scaled(c);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1e-300);
        let c2 = c * c;
        prop_assert!(close(h1_seminorm_sq(&cu), c2 * h1_seminorm_sq(&u)));
        let op = assemble_fractional(&g, s).unwrap();
        prop_assert!(close(op.bilinear(cu.values(), cu.values()), c2 * op.bilinear(u.values(), u.values())));
        prop_assert!(close(hs_doublesum(&cu, s).unwrap(), c2 * hs_doublesum(&u, s).unwrap()));
        prop_assert!(close(boundary_flux(&cu, &bq).unwrap().flux, c2 * boundary_flux(&u, &bq).unwrap().flux));
        let power = Nonlinearity::Power { lambda: 1.0, p: 3.5 };
        let k = c.abs().powf(3.5);
        prop_assert!(close(int_F(&cu, &power), k * int_F(&u, &power)));
        prop_assert!(close(int_uf(&cu, &power), k * int_uf(&u, &power)));
    }

    #[test]
    fn reports_recompute_bit_exactly(a in 0.0..2.0f64, s in 0.1..0.9f64, amp in 0.1..3.0f64) {
        let g = grid(DomainKind::Interval, 64);
        let bq = boundary_quadrature(&g, 2).unwrap();
        let ops = OperatorSet::new(&g, a, Some(s)).unwrap();
        let u = GridFunction::bump(g.clone(), amp);
        let nl = Nonlinearity::Power { lambda: 1.0, p: 3.0 };
        let r = check_pohozaev(&u, &nl, &ops, &bq).unwrap();
        prop_assert_eq!(r.recompute().unwrap(), (r.lhs, r.rhs));
        let (b, c) = check_dilation(&u, &ops, &bq).unwrap();
        prop_assert_eq!(b.recompute().unwrap(), (b.lhs, b.rhs));
        prop_assert_eq!(c.recompute().unwrap(), (c.lhs, c.rhs));
        prop_assert!(r.residual_rel >= 0.0);
    }
}
