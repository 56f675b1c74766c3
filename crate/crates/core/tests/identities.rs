use std::sync::Arc;

use mixloc::fracops::{assemble_fractional, assemble_laplacian, assemble_mixed, GridFunction};
use mixloc::functionals::{
    blowup_profile, boundary_flux, dilation_local, dilation_nonlocal, energy, h1_seminorm_sq, hs_seminorm_sq,
    pohozaev_terms, OperatorSet, TermRequest,
};
use mixloc::geometry::{boundary_quadrature, build_grid, BoundaryQuadrature, Domain, Grid};
use mixloc::pohozaev::{
    check_critical_threshold, check_dilation, check_eigen_flux, check_pohozaev, check_pohozaev_equivalent,
    check_system_nonexistence, check_system_pohozaev, convergence_study, ThresholdConclusion,
};
use mixloc::solvers::{
    principal_eigenpair, solve_linear, solve_semilinear, solve_system, Classification, Continuation, Nonlinearity,
    SystemNonlinearity,
};

fn interval(n: usize) -> (Arc<Grid>, BoundaryQuadrature) {
    let g = Arc::new(build_grid(Domain::interval(1.0).unwrap(), n).unwrap());
    let bq = boundary_quadrature(&g, 2).unwrap();
    (g, bq)
}

fn parabola(g: &Arc<Grid>) -> GridFunction {
    GridFunction::from_fn(g.clone(), |[x, _]| 1.0 - x * x)
}

#[test]
fn parabola_closed_form_terms() {
    let (g, bq) = interval(1024);
    let u = parabola(&g);
    let fl = boundary_flux(&u, &bq).unwrap();
    assert!((fl.flux - 8.0).abs() < 1e-9, "{}", fl.flux);
    let dl = dilation_local(&u).unwrap().value;
    assert!((dl / (-8.0 / 3.0) - 1.0).abs() < 0.01);
    let torsion = GridFunction::from_fn(g.clone(), |[x, _]| 0.5 * (1.0 - x * x));
    assert!((h1_seminorm_sq(&torsion) - 2.0 / 3.0).abs() < 1e-5);
    let ops = OperatorSet::new(&g, 0.0, None).unwrap();
    let nl = Nonlinearity::ConstantSource { c: 1.0 };
    let terms = pohozaev_terms(&torsion, &ops, Some(&nl), &bq, TermRequest::default()).unwrap();
    let e = energy(&torsion, &terms, 0.0, &nl).unwrap();
    assert!((e + 1.0 / 3.0).abs() < 1e-5);
}

#[test]
fn flux_is_sign_invariant() {
    let (g, bq) = interval(128);
    let u = parabola(&g);
    let a = boundary_flux(&u, &bq).unwrap().flux;
    let b = boundary_flux(&u.scaled(-1.0), &bq).unwrap().flux;
    assert_eq!(a, b);
}

#[test]
fn disk_flux_of_paraboloid() {
    let g = Arc::new(build_grid(Domain::disk(1.0).unwrap(), 256).unwrap());
    let bq = boundary_quadrature(&g, 256).unwrap();
    let u = GridFunction::from_fn(g.clone(), |[x, y]| 1.0 - x * x - y * y);
    let fl = boundary_flux(&u, &bq).unwrap().flux;
    let target = 8.0 * std::f64::consts::PI;
    assert!((fl / target - 1.0).abs() < 0.01, "{fl}");
}

#[test]
fn seminorm_estimators_approach_each_other() {
    let mut gaps = Vec::new();
    for n in [256, 512, 1024] {
        let (g, _) = interval(n);
        let op = assemble_fractional(&g, 0.75).unwrap();
        let est = hs_seminorm_sq(&parabola(&g), &op).unwrap();
        gaps.push((est.bilinear - est.doublesum).abs() / est.doublesum);
    }
    assert!(gaps[2] < gaps[1] && gaps[1] < gaps[0], "{gaps:?}");
}

#[test]
fn torsion_identity_converges_at_second_order() {
    let nl = Nonlinearity::ConstantSource { c: 1.0 };
    let study = convergence_study(&[256, 512, 1024], |n| {
        let (g, bq) = interval(n);
        let op = assemble_laplacian(&g);
        let u = solve_linear(&op, &GridFunction::from_fn(g.clone(), |_| 1.0))?;
        Ok(check_pohozaev(&u, &nl, &OperatorSet::from_operator(&op)?, &bq)?.residual_rel)
    })
    .unwrap();
    assert!(study.monotone);
    let order = study.order.unwrap();
    assert!((order - 2.0).abs() < 0.3, "{order}");
    assert!(study.residuals[2].unwrap() < 1e-3);
}

#[test]
fn equivalent_form_for_torsion() {
    let nl = Nonlinearity::ConstantSource { c: 1.0 };
    let (g, bq) = interval(512);
    let op = assemble_laplacian(&g);
    let u = solve_linear(&op, &GridFunction::from_fn(g.clone(), |_| 1.0)).unwrap();
    let r = check_pohozaev_equivalent(&u, &nl, &OperatorSet::from_operator(&op).unwrap(), &bq).unwrap();
    assert!((r.lhs - 1.0).abs() < 1e-4);
    assert!((r.rhs - 1.0).abs() < 1e-4);
    assert_eq!(r.recompute().unwrap(), (r.lhs, r.rhs));
}

#[test]
fn mixed_identity_with_both_forms() {
    let nl = Nonlinearity::ConstantSource { c: 1.0 };
    let mut residuals = Vec::new();
    let mut defects = Vec::new();
    for n in [256, 512, 1024] {
        let (g, bq) = interval(n);
        let ops = OperatorSet::new(&g, 1.0, Some(0.5)).unwrap();
        let u = solve_linear(&ops.mixed().unwrap(), &GridFunction::from_fn(g.clone(), |_| 1.0)).unwrap();
        let r = check_pohozaev(&u, &nl, &ops, &bq).unwrap();
        let e = check_pohozaev_equivalent(&u, &nl, &ops, &bq).unwrap();
        // the two left sides differ by (2-n)/2 times the integration-by-parts defect
        let int_uf = e.terms[0].int_uf.unwrap();
        assert!((r.lhs - e.lhs).abs() <= 0.5 * e.extra["ibp_defect"] * int_uf + 1e-12);
        residuals.push(r.residual_rel);
        defects.push(e.extra["ibp_defect"]);
    }
    assert!(
        residuals[2] < residuals[1] && residuals[1] < residuals[0],
        "{residuals:?}"
    );
    assert!(defects[2] < defects[0], "{defects:?}");
}

#[test]
fn dilation_reports_for_the_parabola() {
    let (g, bq) = interval(1024);
    let ops = OperatorSet::new(&g, 0.0, Some(0.5)).unwrap();
    let (b, c) = check_dilation(&parabola(&g), &ops, &bq).unwrap();
    assert_eq!(b.rhs, 0.0);
    assert!(b.lhs.abs() < 1e-2 * b.terms[0].hs_sq_bilinear.unwrap());
    assert!((c.rhs + 8.0 / 3.0).abs() < 1e-2);
    assert!(c.residual_rel < 1e-2);
    for r in [&b, &c] {
        assert_eq!(r.recompute().unwrap(), (r.lhs, r.rhs));
    }
}

#[test]
fn disk_dilation_residuals_decrease() {
    let mut rb = Vec::new();
    let mut rc = Vec::new();
    for n in [64, 128, 256] {
        let g = Arc::new(build_grid(Domain::disk(1.0).unwrap(), n).unwrap());
        let bq = boundary_quadrature(&g, 256).unwrap();
        let ops = OperatorSet::new(&g, 0.0, Some(0.3)).unwrap();
        let u = GridFunction::from_fn(g.clone(), |[x, y]| (1.0 - x * x - y * y).powi(2));
        let (b, c) = check_dilation(&u, &ops, &bq).unwrap();
        rb.push(b.residual_rel);
        // both sides tend to zero for this profile, so the absolute residual is the meaningful one
        rc.push(c.residual_abs);
    }
    assert!(rb[2] < rb[1] && rb[1] < rb[0], "{rb:?}");
    assert!(rc[2] < rc[1] && rc[1] < rc[0], "{rc:?}");
}

#[test]
fn radial_dilation_ratio() {
    let g = Arc::new(build_grid(Domain::ball(1.0).unwrap(), 1024).unwrap());
    let op = assemble_fractional(&g, 0.6).unwrap();
    let u = GridFunction::from_fn(g.clone(), |[r, _]| 1.0 - r * r);
    let hs = op.bilinear(u.values(), u.values());
    let ratio = dilation_nonlocal(&u, &op).unwrap().value / hs;
    assert!((ratio / -0.9 - 1.0).abs() < 0.01, "{ratio}");
}

#[test]
fn eigen_flux_for_the_local_operator() {
    let (g, bq) = interval(1024);
    let op = assemble_laplacian(&g);
    let eig = principal_eigenpair(&op).unwrap();
    let r = check_eigen_flux(&eig, &OperatorSet::from_operator(&op).unwrap(), &bq).unwrap();
    assert!(r.residual_rel < 1e-4, "{}", r.residual_rel);
    assert!(r.extra["min_normal_derivative"] > 0.0);
}

#[test]
fn eigen_flux_rejects_unconverged_pairs() {
    let (g, bq) = interval(64);
    let op = assemble_laplacian(&g);
    let mut eig = principal_eigenpair(&op).unwrap();
    eig.residual = 1e-6;
    assert!(check_eigen_flux(&eig, &OperatorSet::from_operator(&op).unwrap(), &bq).is_err());
}

#[test]
fn critical_threshold_on_the_ball() {
    let g = Arc::new(build_grid(Domain::ball(1.0).unwrap(), 256).unwrap());
    let bq = boundary_quadrature(&g, 2).unwrap();
    let op = assemble_laplacian(&g);
    let ops = OperatorSet::new(&g, 0.0, Some(0.5)).unwrap();
    let l1 = principal_eigenpair(&op).unwrap().value;
    let l1s = principal_eigenpair(&assemble_fractional(&g, 0.5).unwrap())
        .unwrap()
        .value;
    let lambda = 0.5 * l1;
    let c = Continuation {
        lambda_start: 0.95 * l1,
        lambda_end: lambda,
    };
    let nl = Nonlinearity::brezis_nirenberg(lambda, 3).unwrap();
    let rep = solve_semilinear(&op, &nl, &GridFunction::bump(g.clone(), 1.0), Some(&c)).unwrap();
    let (r, v) = check_critical_threshold(rep.solution(), lambda, &ops, &bq, l1s).unwrap();
    assert!(r.residual_rel < 0.05, "{}", r.residual_rel);
    assert_eq!(v.threshold, 0.0);
    assert_eq!(v.conclusion, ThresholdConclusion::NoConclusion);

    let (g1, bq1) = interval(64);
    let u = parabola(&g1);
    let ops1 = OperatorSet::new(&g1, 0.0, Some(0.5)).unwrap();
    assert!(check_critical_threshold(&u, -1.0, &ops1, &bq1, 1.0).is_err());
}

fn coupled() -> SystemNonlinearity {
    SystemNonlinearity {
        lambda1: 1.0,
        lambda2: 1.0,
        delta: 0.1,
        alpha: 2.0,
        beta: 2.0,
        p: 3.0,
        q: 3.0,
    }
}

#[test]
fn coupled_system_identities() {
    let (g, bq) = interval(2048);
    let ops = OperatorSet::new(&g, 1.0, Some(0.5)).unwrap();
    let op = ops.mixed().unwrap();
    let start = GridFunction::bump(g.clone(), 5.0);
    let snl = coupled();
    let rep = solve_system(&op, &op, &snl, (&start, &start)).unwrap();
    assert_eq!(rep.classification, Classification::Nontrivial);
    let (u, v) = (&rep.components[0], &rep.components[1]);
    let r = check_system_pohozaev(u, v, &snl, (&ops, &ops), &bq).unwrap();
    assert!(r.residual_rel < 0.03, "{}", r.residual_rel);
    // symmetric data: both components coincide and carry equal flux
    let (fu, fv) = (r.terms[0].flux, r.terms[1].flux);
    assert!((fu - fv).abs() < 1e-9 * fu, "{fu} {fv}");
    let c = check_system_nonexistence(u, v, &snl, (&ops, &ops), &bq).unwrap();
    assert!(c.rhs >= 0.0);
    assert_eq!(c.recompute().unwrap(), (c.lhs, c.rhs));
}

#[test]
fn decoupled_system_reduces_to_the_scalar_identity() {
    let (g, bq) = interval(1024);
    let ops = OperatorSet::new(&g, 1.0, Some(0.5)).unwrap();
    let op = ops.mixed().unwrap();
    let snl = SystemNonlinearity {
        delta: 0.0,
        ..coupled()
    };
    let start = GridFunction::bump(g.clone(), 5.0);
    let zero = GridFunction::zeros(g.clone());
    let rep = solve_system(&op, &op, &snl, (&start, &zero)).unwrap();
    let (u, v) = (&rep.components[0], &rep.components[1]);
    assert_eq!(v.max_abs(), 0.0);
    let sys = check_system_pohozaev(u, v, &snl, (&ops, &ops), &bq).unwrap();
    let scalar = check_pohozaev(u, &Nonlinearity::Power { lambda: 1.0, p: 3.0 }, &ops, &bq).unwrap();
    assert!((sys.lhs - scalar.lhs).abs() < 1e-12 * scalar.lhs.abs());
    assert_eq!(sys.rhs, scalar.rhs);
    let c = check_system_nonexistence(u, v, &snl, (&ops, &ops), &bq).unwrap();
    assert!(c.residual_rel < 0.03, "{}", c.residual_rel);
}

#[test]
fn zero_pair_gives_zero_identities() {
    let (g, bq) = interval(64);
    let ops = OperatorSet::new(&g, 1.0, Some(0.5)).unwrap();
    let z = GridFunction::zeros(g.clone());
    let r = check_system_nonexistence(&z, &z, &coupled(), (&ops, &ops), &bq).unwrap();
    assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    assert!(!r.warnings.is_empty());
}

#[test]
fn zero_scenario_study_is_degenerate() {
    let nl = Nonlinearity::Linear { lambda: 1.0 };
    let study = convergence_study(&[64, 128, 256], |n| {
        let (g, bq) = interval(n);
        let ops = OperatorSet::new(&g, 1.0, Some(0.5))?;
        Ok(check_pohozaev(&GridFunction::zeros(g.clone()), &nl, &ops, &bq)?.residual_rel)
    })
    .unwrap();
    assert_eq!(study.status, mixloc::pohozaev::StudyStatus::Degenerate);
    assert!(study.order.is_none());
}

#[test]
fn blowup_of_zero_is_degenerate() {
    let (g, _) = interval(256);
    let op = assemble_mixed(&g, 1.0, 0.5).unwrap();
    let frac = op.fractional_part().unwrap();
    assert!(
        blowup_profile(&GridFunction::zeros(g.clone()), &frac)
            .unwrap()
            .degenerate
    );
}
