//! Scenario execution: solves, checks and convergence studies.

use std::sync::Arc;
use std::time::Instant;

use mixloc::fracops::{assemble_fractional, GridFunction};
use mixloc::functionals::{blowup_profile, BlowupProfile, OperatorSet};
use mixloc::geometry::{boundary_quadrature, BoundaryQuadrature, Grid};
use mixloc::pohozaev::{
    check_critical_threshold, check_dilation, check_eigen_flux, check_pohozaev, check_pohozaev_equivalent,
    check_system_nonexistence, check_system_pohozaev, convergence_study, ConvergenceStudy, Identity, IdentityReport,
    ThresholdVerdict,
};
use mixloc::solvers::{
    principal_eigenpair, solve_linear, solve_semilinear, solve_system, Classification, Continuation, EigenPair,
    Nonlinearity, SolveReport,
};
use serde::Serialize;

use crate::config::{LambdaUnits, Metric, ScenarioConfig, SolverKind, Start, BLOWUP_CHECK};

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub start: Vec<f64>,
    pub classification: Classification,
    pub iterations: usize,
    pub residual: f64,
    pub positive: Vec<bool>,
    pub max_abs: Vec<f64>,
    pub lambda: Option<f64>,
    pub note: Option<String>,
}

impl SolveSummary {
    fn of(start: Vec<f64>, r: &SolveReport) -> Self {
        Self {
            start,
            classification: r.classification,
            iterations: r.iterations,
            residual: r.residual,
            positive: r.positive.clone(),
            max_abs: r.components.iter().map(|c| c.max_abs()).collect(),
            lambda: r.lambda,
            note: r.note.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenSummary {
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
    pub positive: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupOutcome {
    /// `min(0, 1 - 2s)`: the exponent of the boundary bound
    pub bound_exponent: f64,
    /// `max(0, bound_exponent - slope)`
    pub shortfall: f64,
    pub profile: BlowupProfile,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    /// value of the configured metric (`None` when the check could not run)
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<IdentityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<ThresholdVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blowup: Option<BlowupOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridRun {
    #[serde(rename = "N")]
    pub n: usize,
    pub h: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub solves: Vec<SolveSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eigen: Option<EigenSummary>,
    /// λ actually used after unit conversion (semilinear only)
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub checks: Vec<CheckOutcome>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyOutcome {
    pub name: String,
    pub study: ConvergenceStudy,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckVerdict {
    pub name: String,
    #[serde(rename = "N")]
    pub n: usize,
    /// `residual_rel`, `residual_abs`, or `slope_shortfall` for the blow-up check
    pub metric: &'static str,
    pub value: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Everything a run produces except timings.
#[derive(Debug, Clone, Serialize)]
pub struct RunBody {
    pub artifact: &'static str,
    pub version: &'static str,
    pub config_sha256: String,
    pub config: ScenarioConfig,
    pub grids: Vec<GridRun>,
    pub studies: Vec<StudyOutcome>,
    pub verdicts: Vec<CheckVerdict>,
    pub passed: bool,
}

pub struct RunResult {
    pub body: RunBody,
    /// wall-clock seconds per grid, in grid order
    pub timings: Vec<(usize, f64)>,
}

/// State produced by the solver stage on one grid.
enum Solved {
    Scalar { u: GridFunction, nl: Nonlinearity },
    Pair { u: GridFunction, v: GridFunction },
    Eigen(EigenPair),
    Profile(GridFunction),
    Failed(String),
}

struct Setup {
    grid: Arc<Grid>,
    bq: BoundaryQuadrature,
    ops: OperatorSet,
    ops2: Option<OperatorSet>,
}

fn setup(cfg: &ScenarioConfig, n: usize) -> anyhow::Result<Setup> {
    let grid = Arc::new(Grid::new(cfg.domain()?, n)?);
    let bq = boundary_quadrature(&grid, cfg.boundary_nodes)?;
    let ops = OperatorSet::new(&grid, cfg.operator.a, cfg.operator.s)?;
    let ops2 = if cfg.solver == SolverKind::System {
        let o = cfg.second();
        Some(OperatorSet::new(&grid, o.a, o.s)?)
    } else {
        None
    };
    Ok(Setup { grid, bq, ops, ops2 })
}

fn amplitude(s: &Start) -> Vec<f64> {
    match *s {
        Start::Single(m) => vec![m],
        Start::Pair([a, b]) => vec![a, b],
    }
}

/// Picks the state used by the checks: the first nontrivial converged
/// solve, else the first trivial one.
fn pick(reports: &[SolveReport]) -> Option<usize> {
    reports
        .iter()
        .position(|r| r.classification == Classification::Nontrivial)
        .or_else(|| reports.iter().position(|r| r.classification == Classification::Trivial))
}

fn solve(cfg: &ScenarioConfig, st: &Setup, run: &mut GridRun) -> anyhow::Result<Solved> {
    let op = st.ops.mixed()?;
    Ok(match cfg.solver {
        SolverKind::Linear => {
            let nl = cfg.nonlinearity.expect("validated");
            let Nonlinearity::ConstantSource { c } = nl else {
                unreachable!("validated")
            };
            let u = solve_linear(&op, &GridFunction::from_fn(st.grid.clone(), |_| c))?;
            Solved::Scalar { u, nl }
        }
        SolverKind::Eigen => {
            let e = principal_eigenpair(&op)?;
            run.eigen = Some(EigenSummary {
                value: e.value,
                residual: e.residual,
                iterations: e.iterations,
                positive: e.positive,
            });
            Solved::Eigen(e)
        }
        SolverKind::Semilinear => {
            let base = cfg.nonlinearity.expect("validated");
            let scale = match cfg.lambda_units {
                LambdaUnits::Absolute => 1.0,
                LambdaUnits::PrincipalEigenvalue => principal_eigenpair(&op)?.value,
            };
            let nl = match base.lambda() {
                Some(l) => base.with_lambda(l * scale),
                None => base,
            };
            run.lambda = nl.lambda();
            let cont = cfg.continuation.map(|c| Continuation {
                lambda_start: c.lambda_start * scale,
                lambda_end: c.lambda_end * scale,
            });
            let starts = if cfg.starts.is_empty() {
                vec![Start::Single(1.0)]
            } else {
                cfg.starts.clone()
            };
            let mut reports = Vec::new();
            for s in &starts {
                let mu = amplitude(s)[0];
                let r = solve_semilinear(&op, &nl, &GridFunction::bump(st.grid.clone(), mu), cont.as_ref())?;
                run.solves.push(SolveSummary::of(vec![mu], &r));
                reports.push(r);
            }
            match pick(&reports) {
                Some(k) => Solved::Scalar {
                    u: reports[k].solution().clone(),
                    nl,
                },
                None => Solved::Failed("every start diverged".into()),
            }
        }
        SolverKind::System => {
            let snl = cfg.system.expect("validated");
            let op2 = st.ops2.as_ref().expect("system setup").mixed()?;
            let mut reports = Vec::new();
            for s in &cfg.starts {
                let m = amplitude(s);
                let a = GridFunction::bump(st.grid.clone(), m[0]);
                let b = GridFunction::bump(st.grid.clone(), m[1]);
                let r = solve_system(&op, &op2, &snl, (&a, &b))?;
                run.solves.push(SolveSummary::of(m, &r));
                reports.push(r);
            }
            match pick(&reports) {
                Some(k) => Solved::Pair {
                    u: reports[k].components[0].clone(),
                    v: reports[k].components[1].clone(),
                },
                None => Solved::Failed("every start diverged".into()),
            }
        }
        SolverKind::Manufactured => {
            let profile = cfg.profile.expect("validated");
            let r2 = st.grid.radius() * st.grid.radius();
            Solved::Profile(GridFunction::from_fn(st.grid.clone(), |[x, y]| {
                profile.eval((x * x + y * y) / r2)
            }))
        }
    })
}

fn metric_value(metric: Metric, r: &IdentityReport) -> f64 {
    match metric {
        Metric::ResidualRel => r.residual_rel,
        Metric::ResidualAbs => r.residual_abs,
    }
}

fn identity_outcome(name: &str, metric: Metric, r: anyhow::Result<IdentityReport>) -> CheckOutcome {
    match r {
        Ok(r) => CheckOutcome {
            name: name.into(),
            value: Some(metric_value(metric, &r)),
            report: Some(r),
            verdict: None,
            blowup: None,
            error: None,
        },
        Err(e) => failed(name, e.to_string()),
    }
}

fn failed(name: &str, msg: String) -> CheckOutcome {
    CheckOutcome {
        name: name.into(),
        value: None,
        report: None,
        verdict: None,
        blowup: None,
        error: Some(msg),
    }
}

fn run_checks(cfg: &ScenarioConfig, st: &Setup, solved: &Solved) -> Vec<CheckOutcome> {
    // the dilation checker yields both reports at once
    let dilation = match solved {
        Solved::Profile(u)
            if cfg
                .checks
                .iter()
                .any(|c| c.name == "dilation_local" || c.name == "dilation_nonlocal") =>
        {
            Some(check_dilation(u, &st.ops, &st.bq).map_err(anyhow::Error::from))
        }
        _ => None,
    };
    cfg.checks
        .iter()
        .map(|c| {
            let name = c.name.as_str();
            if let Solved::Failed(msg) = solved {
                return failed(name, format!("no solution to check: {msg}"));
            }
            if name == BLOWUP_CHECK {
                let Solved::Scalar { u, .. } = solved else {
                    unreachable!("validated")
                };
                return blowup_check(u, st, cfg);
            }
            let id = Identity::parse(name).expect("validated");
            let r: anyhow::Result<IdentityReport> = match (id, solved) {
                (Identity::Pohozaev, Solved::Scalar { u, nl }) => {
                    check_pohozaev(u, nl, &st.ops, &st.bq).map_err(Into::into)
                }
                (Identity::PohozaevEquivalent, Solved::Scalar { u, nl }) => {
                    check_pohozaev_equivalent(u, nl, &st.ops, &st.bq).map_err(Into::into)
                }
                (Identity::DilationNonlocal | Identity::DilationLocal, Solved::Profile(_)) => {
                    match dilation.as_ref().expect("computed above") {
                        Ok((b, l)) => Ok(if id == Identity::DilationNonlocal {
                            b.clone()
                        } else {
                            l.clone()
                        }),
                        Err(e) => Err(anyhow::anyhow!("{e}")),
                    }
                }
                (Identity::SystemPohozaev, Solved::Pair { u, v }) => {
                    let ops2 = st.ops2.as_ref().expect("system setup");
                    check_system_pohozaev(u, v, &cfg.system.expect("validated"), (&st.ops, ops2), &st.bq)
                        .map_err(Into::into)
                }
                (Identity::SystemNonexistence, Solved::Pair { u, v }) => {
                    let ops2 = st.ops2.as_ref().expect("system setup");
                    check_system_nonexistence(u, v, &cfg.system.expect("validated"), (&st.ops, ops2), &st.bq)
                        .map_err(Into::into)
                }
                (Identity::EigenFlux, Solved::Eigen(e)) => check_eigen_flux(e, &st.ops, &st.bq).map_err(Into::into),
                (Identity::CriticalThreshold, Solved::Scalar { u, nl }) => {
                    return threshold_check(name, c.metric, u, nl, st);
                }
                _ => unreachable!("validated"),
            };
            identity_outcome(name, c.metric, r)
        })
        .collect()
}

fn threshold_check(name: &str, metric: Metric, u: &GridFunction, nl: &Nonlinearity, st: &Setup) -> CheckOutcome {
    let run = || -> anyhow::Result<(IdentityReport, ThresholdVerdict)> {
        let lambda = nl
            .lambda()
            .ok_or_else(|| anyhow::anyhow!("the threshold check needs a family with a λ parameter"))?;
        let lambda1s = match st.ops.s() {
            Some(s) => principal_eigenpair(&assemble_fractional(&st.grid, s)?)?.value,
            None => 0.0,
        };
        Ok(check_critical_threshold(u, lambda, &st.ops, &st.bq, lambda1s)?)
    };
    match run() {
        Ok((r, v)) => CheckOutcome {
            name: name.into(),
            value: Some(metric_value(metric, &r)),
            report: Some(r),
            verdict: Some(v),
            blowup: None,
            error: None,
        },
        Err(e) => failed(name, e.to_string()),
    }
}

fn blowup_check(u: &GridFunction, st: &Setup, cfg: &ScenarioConfig) -> CheckOutcome {
    let s = cfg.operator.s.expect("validated");
    let bound_exponent = (1.0 - 2.0 * s).min(0.0);
    let frac = st.ops.fractional.as_ref().expect("validated");
    match blowup_profile(u, frac) {
        Ok(profile) => {
            let shortfall = profile.slope.map(|k| (bound_exponent - k).max(0.0));
            CheckOutcome {
                name: BLOWUP_CHECK.into(),
                value: shortfall,
                report: None,
                verdict: None,
                blowup: Some(BlowupOutcome {
                    bound_exponent,
                    shortfall: shortfall.unwrap_or(f64::NAN),
                    profile,
                }),
                error: shortfall
                    .is_none()
                    .then(|| "degenerate profile: slope undefined".to_string()),
            }
        }
        Err(e) => failed(BLOWUP_CHECK, e.to_string()),
    }
}

fn run_grid(cfg: &ScenarioConfig, n: usize) -> anyhow::Result<GridRun> {
    let st = setup(cfg, n)?;
    let mut run = GridRun {
        n,
        h: st.grid.h(),
        solves: Vec::new(),
        eigen: None,
        lambda: None,
        checks: Vec::new(),
    };
    let solved = solve(cfg, &st, &mut run)?;
    run.checks = run_checks(cfg, &st, &solved);
    Ok(run)
}

/// Runs every grid of the scenario and evaluates pass/fail on the finest one.
pub fn execute(cfg: &ScenarioConfig, config_sha256: String) -> anyhow::Result<RunResult> {
    let grids = cfg.grids();
    let mut runs = Vec::with_capacity(grids.len());
    let mut timings = Vec::with_capacity(grids.len());
    for &n in &grids {
        let t0 = Instant::now();
        runs.push(run_grid(cfg, n)?);
        timings.push((n, t0.elapsed().as_secs_f64()));
    }
    let mut studies = Vec::new();
    if grids.len() > 1 {
        for c in cfg.checks.iter().filter(|c| c.name != BLOWUP_CHECK) {
            let study = convergence_study(&grids, |n| {
                let run = runs.iter().find(|r| r.n == n).expect("every grid ran");
                let out = run.checks.iter().find(|o| o.name == c.name).expect("every check ran");
                out.value
                    .ok_or_else(|| mixloc::Error::Insufficient(out.error.clone().unwrap_or_default()))
            })?;
            studies.push(StudyOutcome {
                name: c.name.clone(),
                study,
            });
        }
    }
    let finest = runs.last().expect("at least one grid");
    let verdicts: Vec<CheckVerdict> = cfg
        .checks
        .iter()
        .map(|c| {
            let out = finest
                .checks
                .iter()
                .find(|o| o.name == c.name)
                .expect("every check ran");
            CheckVerdict {
                name: c.name.clone(),
                n: finest.n,
                metric: match c.metric {
                    _ if c.name == BLOWUP_CHECK => "slope_shortfall",
                    Metric::ResidualRel => "residual_rel",
                    Metric::ResidualAbs => "residual_abs",
                },
                value: out.value,
                tolerance: c.tolerance,
                passed: out.value.is_some_and(|v| v <= c.tolerance),
            }
        })
        .collect();
    let passed = verdicts.iter().all(|v| v.passed);
    Ok(RunResult {
        body: RunBody {
            artifact: "mixloc",
            version: env!("CARGO_PKG_VERSION"),
            config_sha256,
            config: cfg.clone(),
            grids: runs,
            studies,
            verdicts,
            passed,
        },
        timings,
    })
}
