//! Linear solves, principal eigenpairs and damped Newton for semilinear
//! problems and two-component systems.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fracops::{DiscreteOperator, GridFunction};
use crate::linalg::{minres, pcg, LinearOperator, Preconditioner};
use crate::numerics::{dot, max_abs, wdot};

/// Sup-norm below which a converged state counts as the zero solution.
pub const TRIVIAL_THRESHOLD: f64 = 1e-8;
/// Target sup-norm of the Newton residual.
pub const NEWTON_TOL: f64 = 1e-10;
pub const NEWTON_MAX_STEPS: usize = 50;
pub const LINEAR_TOL: f64 = 1e-10;
pub const EIGEN_TOL: f64 = 1e-8;
pub const EIGEN_MAX_ITER: usize = 500;
pub const CONTINUATION_STEPS: usize = 20;
/// Amplitudes of the deterministic start profiles `μ(1 - |x|²/R²)`.
pub const START_AMPLITUDES: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 5.0];

const INNER_TOL: f64 = 1e-12;

/// `|t|^e`, with the value at `t = 0` taken as 0 for `e < 0`.
fn pow_abs(t: f64, e: f64) -> f64 {
    if t == 0.0 {
        if e == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        t.abs().powf(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Nonlinearity {
    /// `f(t) = c`
    ConstantSource { c: f64 },
    /// `f(t) = λ t`
    Linear { lambda: f64 },
    /// `f(t) = λ |t|^{p-2} t`
    Power { lambda: f64, p: f64 },
    /// `f(t) = |t|^{2*-2} t + λ t` with `2* = 2n/(n-2)`
    BrezisNirenberg { lambda: f64, n: usize },
}

impl Nonlinearity {
    pub fn brezis_nirenberg(lambda: f64, n: usize) -> Result<Self> {
        let nl = Nonlinearity::BrezisNirenberg { lambda, n };
        nl.validate()?;
        Ok(nl)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Nonlinearity::Power { p, .. } if !(p > 1.0) => {
                Err(Error::InvalidParameter(format!("power exponent p = {p} must exceed 1")))
            }
            Nonlinearity::BrezisNirenberg { n, .. } if n != 3 => Err(Error::Unsupported(format!(
                "brezis_nirenberg needs n = 3: the critical exponent 2n/(n-2) is undefined for n = {n}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn critical_exponent(n: usize) -> Option<f64> {
        (n >= 3).then(|| 2.0 * n as f64 / (n as f64 - 2.0))
    }

    /// The λ parameter, if the family has one.
    pub fn lambda(&self) -> Option<f64> {
        match *self {
            Nonlinearity::ConstantSource { .. } => None,
            Nonlinearity::Linear { lambda }
            | Nonlinearity::Power { lambda, .. }
            | Nonlinearity::BrezisNirenberg { lambda, .. } => Some(lambda),
        }
    }

    pub fn with_lambda(&self, value: f64) -> Self {
        let mut out = *self;
        match &mut out {
            Nonlinearity::ConstantSource { .. } => {}
            Nonlinearity::Linear { lambda }
            | Nonlinearity::Power { lambda, .. }
            | Nonlinearity::BrezisNirenberg { lambda, .. } => *lambda = value,
        }
        out
    }

    pub fn f(&self, t: f64) -> f64 {
        match *self {
            Nonlinearity::ConstantSource { c } => c,
            Nonlinearity::Linear { lambda } => lambda * t,
            Nonlinearity::Power { lambda, p } => lambda * pow_abs(t, p - 2.0) * t,
            Nonlinearity::BrezisNirenberg { lambda, n } => {
                let q = Self::critical_exponent(n).unwrap_or(f64::NAN);
                pow_abs(t, q - 2.0) * t + lambda * t
            }
        }
    }

    /// Primitive with `F(0) = 0`.
    #[allow(non_snake_case)]
    pub fn F(&self, t: f64) -> f64 {
        match *self {
            Nonlinearity::ConstantSource { c } => c * t,
            Nonlinearity::Linear { lambda } => 0.5 * lambda * t * t,
            Nonlinearity::Power { lambda, p } => lambda * pow_abs(t, p) / p,
            Nonlinearity::BrezisNirenberg { lambda, n } => {
                let q = Self::critical_exponent(n).unwrap_or(f64::NAN);
                pow_abs(t, q) / q + 0.5 * lambda * t * t
            }
        }
    }

    pub fn df(&self, t: f64) -> f64 {
        match *self {
            Nonlinearity::ConstantSource { .. } => 0.0,
            Nonlinearity::Linear { lambda } => lambda,
            Nonlinearity::Power { lambda, p } => lambda * (p - 1.0) * pow_abs(t, p - 2.0),
            Nonlinearity::BrezisNirenberg { lambda, n } => {
                let q = Self::critical_exponent(n).unwrap_or(f64::NAN);
                (q - 1.0) * pow_abs(t, q - 2.0) + lambda
            }
        }
    }

    /// Dimension the family is restricted to, if any.
    fn required_dimension(&self) -> Option<usize> {
        match *self {
            Nonlinearity::BrezisNirenberg { n, .. } => Some(n),
            _ => None,
        }
    }
}

/// Parameters of the coupled power system
/// `F(u, v) = λ₁|u|^p/p + λ₂|v|^q/q + δ|u|^α|v|^β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemNonlinearity {
    pub lambda1: f64,
    pub lambda2: f64,
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub p: f64,
    pub q: f64,
}

impl SystemNonlinearity {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("p", self.p), ("q", self.q)] {
            if !(v > 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "system exponent {name} = {v} must exceed 1"
                )));
            }
        }
        Ok(())
    }

    #[allow(non_snake_case)]
    pub fn F(&self, u: f64, v: f64) -> f64 {
        self.lambda1 * pow_abs(u, self.p) / self.p
            + self.lambda2 * pow_abs(v, self.q) / self.q
            + self.delta * pow_abs(u, self.alpha) * pow_abs(v, self.beta)
    }

    pub fn f_u(&self, u: f64, v: f64) -> f64 {
        self.lambda1 * pow_abs(u, self.p - 2.0) * u
            + self.delta * self.alpha * pow_abs(u, self.alpha - 2.0) * u * pow_abs(v, self.beta)
    }

    pub fn f_v(&self, u: f64, v: f64) -> f64 {
        self.lambda2 * pow_abs(v, self.q - 2.0) * v
            + self.delta * self.beta * pow_abs(u, self.alpha) * pow_abs(v, self.beta - 2.0) * v
    }

    /// `[[F_uu, F_uv], [F_uv, F_vv]]`.
    pub fn hessian(&self, u: f64, v: f64) -> [[f64; 2]; 2] {
        let (a, b, d) = (self.alpha, self.beta, self.delta);
        let uu = self.lambda1 * (self.p - 1.0) * pow_abs(u, self.p - 2.0)
            + d * a * (a - 1.0) * pow_abs(u, a - 2.0) * pow_abs(v, b);
        let vv = self.lambda2 * (self.q - 1.0) * pow_abs(v, self.q - 2.0)
            + d * b * (b - 1.0) * pow_abs(u, a) * pow_abs(v, b - 2.0);
        let uv = d * a * b * pow_abs(u, a - 2.0) * u * pow_abs(v, b - 2.0) * v;
        [[uu, uv], [uv, vv]]
    }
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    /// Unit discrete L² norm, maximum entry positive.
    pub function: GridFunction,
    /// `‖Aφ - λφ‖ / ‖φ‖` in the discrete L² norm
    pub residual: f64,
    pub iterations: usize,
    /// every interior value strictly positive
    pub positive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Trivial,
    Nontrivial,
    Diverged,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    /// one entry for scalar problems, two for systems
    pub components: Vec<GridFunction>,
    pub iterations: usize,
    /// final sup-norm of the residual
    pub residual: f64,
    /// sup-norm residual before each Newton step and at the end (last leg only)
    pub history: Vec<f64>,
    /// tolerance that was applied to `residual`
    pub tolerance: f64,
    pub classification: Classification,
    pub component_classes: Vec<Classification>,
    /// per component: min interior value > 0
    pub positive: Vec<bool>,
    /// λ at which the report was produced (continuation end point)
    pub lambda: Option<f64>,
    pub note: Option<String>,
}

impl SolveReport {
    pub fn solution(&self) -> &GridFunction {
        &self.components[0]
    }

    pub fn converged(&self) -> bool {
        self.classification != Classification::Diverged
    }
}

/// Fixed-step λ path `start → end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Continuation {
    pub lambda_start: f64,
    pub lambda_end: f64,
}

impl Continuation {
    pub fn path(&self) -> Vec<f64> {
        let step = (self.lambda_end - self.lambda_start) / CONTINUATION_STEPS as f64;
        (0..=CONTINUATION_STEPS)
            .map(|k| {
                if k == CONTINUATION_STEPS {
                    self.lambda_end
                } else {
                    self.lambda_start + k as f64 * step
                }
            })
            .collect()
    }
}

/// Solves `A u = g` by preconditioned CG on the form matrix.
pub fn solve_linear(op: &DiscreteOperator, g: &GridFunction) -> Result<GridFunction> {
    g.ensure_same_grid(op.grid())?;
    let w = op.grid().weights();
    let rhs: Vec<f64> = g.values().iter().zip(w).map(|(a, b)| a * b).collect();
    let max_iter = 10 * op.grid().n();
    let (x, stats) = pcg(op, &rhs, &op.preconditioner(), LINEAR_TOL, max_iter);
    if !stats.converged {
        return Err(Error::NoConvergence {
            what: "conjugate gradients",
            iterations: stats.iterations,
            residual: stats.relative_residual,
        });
    }
    GridFunction::new(op.grid().clone(), x)
}

/// Smallest eigenpair of `A` by inverse iteration from a positive start.
pub fn principal_eigenpair(op: &DiscreteOperator) -> Result<EigenPair> {
    let grid = op.grid().clone();
    let w = grid.weights();
    let pre = op.preconditioner();
    let inner_max = 20 * grid.len() + 100;
    let normalize = |x: &mut Vec<f64>| {
        let norm = wdot(w, x, x).sqrt();
        for v in x.iter_mut() {
            *v /= norm;
        }
    };
    let mut phi = GridFunction::bump(grid.clone(), 1.0).into_values();
    normalize(&mut phi);
    let mut residual = f64::INFINITY;
    for it in 1..=EIGEN_MAX_ITER {
        let rhs: Vec<f64> = phi.iter().zip(w).map(|(a, b)| a * b).collect();
        let (mut next, stats) = pcg(op, &rhs, &pre, INNER_TOL, inner_max);
        if !stats.converged && stats.relative_residual > 1e-9 {
            return Err(Error::NoConvergence {
                what: "inverse iteration inner solve",
                iterations: stats.iterations,
                residual: stats.relative_residual,
            });
        }
        normalize(&mut next);
        phi = next;
        let s_phi = LinearOperator::apply(op, &phi);
        let value = dot(&phi, &s_phi);
        let r: Vec<f64> = s_phi
            .iter()
            .zip(w)
            .zip(&phi)
            .map(|((sp, wi), p)| sp / wi - value * p)
            .collect();
        residual = wdot(w, &r, &r).sqrt();
        if residual < EIGEN_TOL {
            if phi.iter().copied().fold(f64::NEG_INFINITY, f64::max) < 0.0 {
                phi.iter_mut().for_each(|v| *v = -*v);
            }
            let positive = phi.iter().all(|&v| v > 0.0);
            return Ok(EigenPair {
                value,
                function: GridFunction::new(grid, phi)?,
                residual,
                iterations: it,
                positive,
            });
        }
    }
    Err(Error::NoConvergence {
        what: "inverse iteration",
        iterations: EIGEN_MAX_ITER,
        residual,
    })
}

/// Newton Jacobian `S_c x_c - W Σ_d H_cd x_d` on stacked components.
struct Jacobian<'a> {
    ops: &'a [&'a DiscreteOperator],
    w: &'a [f64],
    /// `hess[c * m + d]`, pointwise
    hess: Vec<Vec<f64>>,
}

impl LinearOperator for Jacobian<'_> {
    fn dim(&self) -> usize {
        self.ops.len() * self.w.len()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.w.len();
        let m = self.ops.len();
        for c in 0..m {
            self.ops[c].apply_into(&x[c * n..(c + 1) * n], &mut y[c * n..(c + 1) * n]);
            for d in 0..m {
                let h = &self.hess[c * m + d];
                let yc = &mut y[c * n..(c + 1) * n];
                for i in 0..n {
                    yc[i] -= self.w[i] * h[i] * x[d * n + i];
                }
            }
        }
    }
}

/// Pointwise source values and Jacobian blocks for a stacked state.
type SourceEval<'a> = dyn Fn(&[f64]) -> (Vec<f64>, Vec<Vec<f64>>) + 'a;

struct NewtonOutcome {
    u: Vec<f64>,
    iterations: usize,
    history: Vec<f64>,
    residual: f64,
    tolerance: f64,
    converged: bool,
    note: Option<String>,
}

fn pointwise_residual(ops: &[&DiscreteOperator], w: &[f64], u: &[f64], f: &[f64]) -> Vec<f64> {
    let n = w.len();
    let mut r = vec![0.0; u.len()];
    for (c, op) in ops.iter().enumerate() {
        op.apply_into(&u[c * n..(c + 1) * n], &mut r[c * n..(c + 1) * n]);
    }
    for (k, rk) in r.iter_mut().enumerate() {
        *rk = *rk / w[k % n] - f[k];
    }
    r
}

fn weighted_norm(w: &[f64], r: &[f64]) -> f64 {
    let n = w.len();
    let wr: Vec<f64> = r.iter().enumerate().map(|(k, v)| w[k % n] * v * v).collect();
    crate::numerics::pairwise_sum(&wr).sqrt()
}

fn newton(ops: &[&DiscreteOperator], eval: &SourceEval, u0: Vec<f64>, scalar_monotone: bool) -> NewtonOutcome {
    let w = ops[0].grid().weights();
    let n = w.len();
    let max_diag = ops.iter().map(|o| o.max_pointwise_diagonal()).fold(0.0, f64::max);
    let pre = if ops.len() == 1 {
        ops[0].preconditioner()
    } else {
        Preconditioner::Blocks {
            size: n,
            blocks: ops.iter().map(|o| o.preconditioner()).collect(),
        }
    };
    let inner_max = 20 * ops.len() * n + 100;
    let mut u = u0;
    let mut history = Vec::new();
    let (f0, mut hess) = eval(&u);
    let mut r = pointwise_residual(ops, w, &u, &f0);
    let fail = |u: Vec<f64>, it, history: Vec<f64>, res, tol, why: &str| NewtonOutcome {
        u,
        iterations: it,
        history,
        residual: res,
        tolerance: tol,
        converged: false,
        note: Some(why.to_string()),
    };
    for it in 0..=NEWTON_MAX_STEPS {
        let res = max_abs(&r);
        history.push(res);
        // residual cannot drop below the round-off of the operator apply
        let tolerance = NEWTON_TOL.max(32.0 * f64::EPSILON * max_diag * max_abs(&u));
        if !res.is_finite() || !max_abs(&u).is_finite() {
            return fail(u, it, history, res, tolerance, "non-finite state");
        }
        if res < tolerance {
            return NewtonOutcome {
                u,
                iterations: it,
                history,
                residual: res,
                tolerance,
                converged: true,
                note: None,
            };
        }
        if it == NEWTON_MAX_STEPS {
            return fail(u, it, history, res, tolerance, "Newton step limit reached");
        }
        let rhs: Vec<f64> = r.iter().enumerate().map(|(k, v)| -w[k % n] * v).collect();
        let jac = Jacobian { ops, w, hess };
        let spd = scalar_monotone && jac.hess[0].iter().all(|&h| h <= 0.0);
        let (delta, _) = if spd {
            pcg(&jac, &rhs, &pre, INNER_TOL, inner_max)
        } else {
            minres(&jac, &rhs, &pre, INNER_TOL, inner_max)
        };
        let merit = weighted_norm(w, &r);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + t * d).collect();
            let (ft, ht) = eval(&trial);
            let rt = pointwise_residual(ops, w, &trial, &ft);
            if weighted_norm(w, &rt) <= (1.0 - 1e-4 * t) * merit {
                accepted = Some((trial, ht, rt));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, ht, rt)) => {
                u = trial;
                hess = ht;
                r = rt;
            }
            None => return fail(u, it + 1, history, res, tolerance, "line search failed"),
        }
    }
    unreachable!()
}

fn classify(values: &[f64]) -> Classification {
    if max_abs(values) < TRIVIAL_THRESHOLD {
        Classification::Trivial
    } else {
        Classification::Nontrivial
    }
}

fn scalar_eval(nl: Nonlinearity) -> impl Fn(&[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    move |u: &[f64]| {
        let f = u.iter().map(|&t| nl.f(t)).collect();
        let h = vec![u.iter().map(|&t| nl.df(t)).collect()];
        (f, h)
    }
}

fn build_report(
    grid: &std::sync::Arc<crate::geometry::Grid>,
    out: NewtonOutcome,
    m: usize,
    lambda: Option<f64>,
    total_iterations: usize,
) -> Result<SolveReport> {
    let n = grid.len();
    let components: Vec<GridFunction> = (0..m)
        .map(|c| GridFunction::new(grid.clone(), out.u[c * n..(c + 1) * n].to_vec()))
        .collect::<Result<_>>()?;
    let component_classes: Vec<Classification> = components
        .iter()
        .map(|g| {
            if out.converged {
                classify(g.values())
            } else {
                Classification::Diverged
            }
        })
        .collect();
    let classification = if !out.converged {
        Classification::Diverged
    } else if component_classes.iter().all(|c| *c == Classification::Trivial) {
        Classification::Trivial
    } else {
        Classification::Nontrivial
    };
    let positive = components.iter().map(|g| g.min() > 0.0).collect();
    Ok(SolveReport {
        components,
        iterations: total_iterations,
        residual: out.residual,
        history: out.history,
        tolerance: out.tolerance,
        classification,
        component_classes,
        positive,
        lambda,
        note: out.note,
    })
}

/// Damped Newton for `A u = f(u)`, optionally marching λ along a fixed path
/// and reusing each converged state as the next initial guess.
pub fn solve_semilinear(
    op: &DiscreteOperator,
    nl: &Nonlinearity,
    u0: &GridFunction,
    continuation: Option<&Continuation>,
) -> Result<SolveReport> {
    nl.validate()?;
    u0.ensure_same_grid(op.grid())?;
    if let Some(n) = nl.required_dimension() {
        if n != op.grid().dimension() {
            return Err(Error::Unsupported(format!(
                "nonlinearity for n = {n} used on a {}-dimensional grid",
                op.grid().dimension()
            )));
        }
    }
    let path = match continuation {
        Some(c) => {
            if nl.lambda().is_none() {
                return Err(Error::InvalidParameter(
                    "continuation needs a family with a λ parameter".into(),
                ));
            }
            c.path()
        }
        None => vec![nl.lambda().unwrap_or(f64::NAN)],
    };
    let ops = [op];
    let mut u = u0.values().to_vec();
    let mut total = 0;
    let mut last = None;
    for &lam in &path {
        let current = if lam.is_nan() { *nl } else { nl.with_lambda(lam) };
        let eval = scalar_eval(current);
        let out = newton(&ops, &eval, u, true);
        total += out.iterations;
        let converged = out.converged;
        u = out.u.clone();
        last = Some((out, current.lambda()));
        if !converged {
            break;
        }
    }
    let (out, lambda) = last.expect("path is never empty");
    build_report(op.grid(), out, 1, lambda, total)
}

/// Coupled Newton for `A₁u = F_u(u, v)`, `A₂v = F_v(u, v)`.
pub fn solve_system(
    op1: &DiscreteOperator,
    op2: &DiscreteOperator,
    snl: &SystemNonlinearity,
    starts: (&GridFunction, &GridFunction),
) -> Result<SolveReport> {
    snl.validate()?;
    if !op1.grid().same_as(op2.grid()) {
        return Err(Error::GridMismatch("system operators live on different grids".into()));
    }
    starts.0.ensure_same_grid(op1.grid())?;
    starts.1.ensure_same_grid(op1.grid())?;
    let n = op1.grid().len();
    let snl = *snl;
    let eval = move |x: &[f64]| {
        let (u, v) = x.split_at(n);
        let mut f = Vec::with_capacity(2 * n);
        f.extend(u.iter().zip(v).map(|(&a, &b)| snl.f_u(a, b)));
        f.extend(u.iter().zip(v).map(|(&a, &b)| snl.f_v(a, b)));
        let mut h = vec![Vec::with_capacity(n); 4];
        for (&a, &b) in u.iter().zip(v) {
            let m = snl.hessian(a, b);
            h[0].push(m[0][0]);
            h[1].push(m[0][1]);
            h[2].push(m[1][0]);
            h[3].push(m[1][1]);
        }
        (f, h)
    };
    let mut x = starts.0.values().to_vec();
    x.extend_from_slice(starts.1.values());
    let ops = [op1, op2];
    let out = newton(&ops, &eval, x, false);
    let it = out.iterations;
    build_report(op1.grid(), out, 2, None, it)
}
