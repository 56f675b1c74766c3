use std::sync::Arc;

use mixloc::fracops::{assemble_fractional, assemble_laplacian, assemble_mixed, GridFunction};
use mixloc::geometry::{build_grid, Domain, Grid};
use mixloc::numerics::richardson;
use mixloc::solvers::{
    principal_eigenpair, solve_linear, solve_semilinear, solve_system, Classification, Continuation, Nonlinearity,
    SystemNonlinearity,
};

fn interval(n: usize) -> Arc<Grid> {
    Arc::new(build_grid(Domain::interval(1.0).unwrap(), n).unwrap())
}

fn ones(g: &Arc<Grid>) -> GridFunction {
    GridFunction::from_fn(g.clone(), |_| 1.0)
}

#[test]
fn torsion_solution_is_the_parabola() {
    let g = interval(1024);
    let u = solve_linear(&assemble_laplacian(&g), &ones(&g)).unwrap();
    let err = g
        .coords()
        .iter()
        .zip(u.values())
        .map(|(x, v)| (v - 0.5 * (1.0 - x[0] * x[0])).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-4, "{err:e}");
    let z = solve_linear(&assemble_laplacian(&g), &GridFunction::zeros(g.clone())).unwrap();
    assert_eq!(z.max_abs(), 0.0);
}

#[test]
fn mixed_torsion_lies_below_the_local_one() {
    let g = interval(256);
    let local = solve_linear(&assemble_laplacian(&g), &ones(&g)).unwrap();
    let mixed = solve_linear(&assemble_mixed(&g, 1.0, 0.5).unwrap(), &ones(&g)).unwrap();
    for (m, l) in mixed.values().iter().zip(local.values()) {
        assert!(*m >= 0.0 && *m <= *l);
    }
}

#[test]
fn constant_source_newton_matches_linear_solve() {
    let g = interval(256);
    let op = assemble_mixed(&g, 1.0, 0.4).unwrap();
    let lin = solve_linear(&op, &ones(&g)).unwrap();
    let rep = solve_semilinear(
        &op,
        &Nonlinearity::ConstantSource { c: 1.0 },
        &GridFunction::zeros(g.clone()),
        None,
    )
    .unwrap();
    let diff = rep
        .solution()
        .values()
        .iter()
        .zip(lin.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-10, "{diff:e}");
}

#[test]
fn interval_eigenvalue_extrapolates_to_pi_squared_over_four() {
    let l: Vec<f64> = [1024, 2048]
        .iter()
        .map(|&n| principal_eigenpair(&assemble_laplacian(&interval(n))).unwrap().value)
        .collect();
    let target = std::f64::consts::PI.powi(2) / 4.0;
    assert!((richardson(l[0], l[1], 2.0) - target).abs() < 1e-4);
}

#[test]
fn disk_eigenvalue_is_the_bessel_root_squared() {
    let g = Arc::new(build_grid(Domain::disk(1.0).unwrap(), 64).unwrap());
    let e = principal_eigenpair(&assemble_laplacian(&g)).unwrap();
    assert!((e.value / 5.783185962946784 - 1.0).abs() < 0.01, "{}", e.value);
    assert!(e.positive);
    assert!(e.residual < 1e-8);
}

#[test]
fn mixed_eigenvalue_bounds_and_monotonicity() {
    let g = interval(512);
    let l1 = principal_eigenpair(&assemble_laplacian(&g)).unwrap().value;
    let l1s = principal_eigenpair(&assemble_fractional(&g, 0.5).unwrap())
        .unwrap()
        .value;
    let mut last = 0.0;
    for a in [0.0, 0.5, 1.0, 2.0] {
        let v = principal_eigenpair(&assemble_mixed(&g, a, 0.5).unwrap()).unwrap().value;
        assert!(v >= l1 + a * l1s - 1e-6, "a={a}");
        assert!(v >= last);
        last = v;
    }
}

#[test]
fn power_nonlinearity_has_a_positive_ground_state() {
    let g = interval(256);
    let op = assemble_laplacian(&g);
    let nl = Nonlinearity::Power { lambda: 1.0, p: 3.0 };
    let rep = solve_semilinear(&op, &nl, &GridFunction::bump(g.clone(), 5.0), None).unwrap();
    assert_eq!(rep.classification, Classification::Nontrivial);
    assert!(rep.positive[0]);
    // quadratic tail
    let h = &rep.history;
    let k = h.len();
    assert!(k >= 3);
    if h[k - 2] > 1e-13 {
        assert!(h[k - 1] <= 10.0 * h[k - 2].powf(1.5), "{h:?}");
    }
}

#[test]
fn brezis_nirenberg_positive_branch_by_continuation() {
    let g = Arc::new(build_grid(Domain::ball(1.0).unwrap(), 256).unwrap());
    let op = assemble_laplacian(&g);
    let l1 = principal_eigenpair(&op).unwrap().value;
    let nl = Nonlinearity::brezis_nirenberg(0.5 * l1, 3).unwrap();
    let c = Continuation {
        lambda_start: 0.95 * l1,
        lambda_end: 0.5 * l1,
    };
    let rep = solve_semilinear(&op, &nl, &GridFunction::bump(g.clone(), 1.0), Some(&c)).unwrap();
    assert_eq!(rep.classification, Classification::Nontrivial);
    assert!(rep.positive[0]);
    assert_eq!(rep.lambda, Some(0.5 * l1));
}

fn system() -> SystemNonlinearity {
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
fn decoupled_system_matches_scalar_solves() {
    let g = interval(128);
    let op = assemble_laplacian(&g);
    let snl = SystemNonlinearity { delta: 0.0, ..system() };
    let start = GridFunction::bump(g.clone(), 5.0);
    let rep = solve_system(&op, &op, &snl, (&start, &start)).unwrap();
    let scalar = solve_semilinear(&op, &Nonlinearity::Power { lambda: 1.0, p: 3.0 }, &start, None).unwrap();
    for c in &rep.components {
        for (a, b) in c.values().iter().zip(scalar.solution().values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn zero_starts_stay_trivial() {
    let g = interval(64);
    let op = assemble_laplacian(&g);
    let z = GridFunction::zeros(g.clone());
    let rep = solve_system(&op, &op, &system(), (&z, &z)).unwrap();
    assert_eq!(rep.classification, Classification::Trivial);
    assert_eq!(rep.iterations, 0);
}

#[test]
fn coupled_subcritical_pair_converges() {
    let g = interval(256);
    let op = assemble_mixed(&g, 1.0, 0.5).unwrap();
    let start = GridFunction::bump(g.clone(), 5.0);
    let rep = solve_system(&op, &op, &system(), (&start, &start)).unwrap();
    assert_eq!(rep.classification, Classification::Nontrivial);
    assert_eq!(rep.positive, vec![true, true]);
}

#[test]
fn solves_are_deterministic() {
    let g = interval(128);
    let op = assemble_mixed(&g, 1.0, 0.3).unwrap();
    let nl = Nonlinearity::Power { lambda: 1.0, p: 3.0 };
    let start = GridFunction::bump(g.clone(), 5.0);
    let a = solve_semilinear(&op, &nl, &start, None).unwrap();
    let b = solve_semilinear(&op, &nl, &start, None).unwrap();
    assert_eq!(a.solution().values(), b.solution().values());
    assert_eq!(a.history, b.history);
}
