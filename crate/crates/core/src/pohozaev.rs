//! Identity reports, mesh-convergence studies and nonexistence verdicts.
//!
//! Every report stores the terms and scalar parameters it was built from;
//! [`IdentityReport::recompute`] evaluates the same formula again and
//! reproduces `lhs` and `rhs` bit for bit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fracops::GridFunction;
use crate::functionals::{pohozaev_terms, weighted, OperatorSet, PohozaevTerms, TermRequest};
use crate::geometry::{BoundaryQuadrature, DomainKind, Grid};
use crate::numerics::pairwise_sum;
use crate::solvers::{EigenPair, Nonlinearity, SystemNonlinearity, EIGEN_TOL, TRIVIAL_THRESHOLD};

/// Lower bound of the residual normalization.
pub const SCALE_FLOOR: f64 = 1e-12;
/// Relative tolerance on λ for the equality case of the threshold verdict.
pub const THRESHOLD_RTOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Identity {
    /// `s a [u]_s² + [u]_1² - n E(u) = ½ ∮ (∂u/∂ν)² x·ν`
    Pohozaev,
    /// `(s-1) a [u]_s² + (2-n)/2 ∫u f(u) + n ∫F(u) = ½ ∮ (∂u/∂ν)² x·ν`
    PohozaevEquivalent,
    /// `∫ (x·∇u)(-Δ)^s u = (2s-n)/2 [u]_s²`
    DilationNonlocal,
    /// `∫ (x·∇u)(-Δu) = (2-n)/2 [u]_1² - ½ ∮ (∂u/∂ν)² x·ν`
    DilationLocal,
    /// two-component version of `Pohozaev`
    SystemPohozaev,
    /// the power/coupling system rearranged into sign-definite sides
    SystemNonexistence,
    /// `½ flux(φ) = s a [φ]_s² + [φ]_1²` for a principal eigenpair
    EigenFlux,
    /// `λ ∫u² = ½ flux + a(1-s)[u]_s²` for the critical problem on the ball
    CriticalThreshold,
}

impl Identity {
    pub const ALL: [Identity; 8] = [
        Identity::Pohozaev,
        Identity::PohozaevEquivalent,
        Identity::DilationNonlocal,
        Identity::DilationLocal,
        Identity::SystemPohozaev,
        Identity::SystemNonexistence,
        Identity::EigenFlux,
        Identity::CriticalThreshold,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Identity::Pohozaev => "pohozaev",
            Identity::PohozaevEquivalent => "pohozaev_equivalent",
            Identity::DilationNonlocal => "dilation_nonlocal",
            Identity::DilationLocal => "dilation_local",
            Identity::SystemPohozaev => "system_pohozaev",
            Identity::SystemNonexistence => "system_nonexistence",
            Identity::EigenFlux => "eigen_flux",
            Identity::CriticalThreshold => "critical_threshold",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|i| i.name() == name)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown identity '{name}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridMeta {
    pub kind: DomainKind,
    pub dimension: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub h: f64,
}

impl GridMeta {
    pub fn of(grid: &Grid) -> Self {
        Self {
            kind: grid.kind(),
            dimension: grid.dimension(),
            n: grid.n(),
            h: grid.h(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub identity: Identity,
    pub lhs: f64,
    pub rhs: f64,
    pub residual_abs: f64,
    pub residual_rel: f64,
    /// one entry per component
    pub terms: Vec<PohozaevTerms>,
    /// scalar parameters entering the formula
    pub params: BTreeMap<String, f64>,
    /// further integrals entering the formula, and diagnostics
    pub extra: BTreeMap<String, f64>,
    pub grid: GridMeta,
    pub warnings: Vec<String>,
}

impl IdentityReport {
    /// Re-evaluates `(lhs, rhs)` from the stored terms and parameters.
    pub fn recompute(&self) -> Result<(f64, f64)> {
        evaluate(
            self.identity,
            &self.terms,
            &self.params,
            &self.extra,
            self.grid.dimension,
        )
    }
}

fn get(map: &BTreeMap<String, f64>, key: &str) -> Result<f64> {
    map.get(key)
        .copied()
        .ok_or_else(|| Error::InvalidParameter(format!("report is missing '{key}'")))
}

fn term(value: Option<f64>, what: &str) -> Result<f64> {
    value.ok_or_else(|| Error::InvalidParameter(format!("term '{what}' was not computed")))
}

/// `coef · [u]_s²`, with a vanishing coefficient not requiring the seminorm.
fn hs_part(coef: f64, t: &PohozaevTerms) -> Result<f64> {
    if coef == 0.0 {
        Ok(0.0)
    } else {
        Ok(coef * term(t.hs_sq_bilinear, "hs_sq")?)
    }
}

fn component(terms: &[PohozaevTerms], k: usize) -> Result<&PohozaevTerms> {
    terms
        .get(k)
        .ok_or_else(|| Error::InvalidParameter(format!("report has no component {k}")))
}

/// `(lhs, rhs)` of `identity` from stored terms.
pub fn evaluate(
    identity: Identity,
    terms: &[PohozaevTerms],
    params: &BTreeMap<String, f64>,
    extra: &BTreeMap<String, f64>,
    n: usize,
) -> Result<(f64, f64)> {
    let nf = n as f64;
    let t = component(terms, 0)?;
    let half_flux = 0.5 * t.flux;
    match identity {
        Identity::Pohozaev => {
            let (a, s) = (get(params, "a")?, get(params, "s")?);
            let lhs = hs_part(s * a, t)? + t.h1_sq - nf * term(t.energy, "energy")?;
            Ok((lhs, half_flux))
        }
        Identity::PohozaevEquivalent => {
            let (a, s) = (get(params, "a")?, get(params, "s")?);
            let lhs = hs_part((s - 1.0) * a, t)?
                + 0.5 * (2.0 - nf) * term(t.int_uf, "int_uf")?
                + nf * term(t.int_F, "int_F")?;
            Ok((lhs, half_flux))
        }
        Identity::DilationNonlocal => {
            let s = get(params, "s")?;
            let rhs = 0.5 * (2.0 * s - nf) * term(t.hs_sq_bilinear, "hs_sq")?;
            Ok((term(t.dil_nonlocal, "dil_nonlocal")?, rhs))
        }
        Identity::DilationLocal => {
            let rhs = 0.5 * (2.0 - nf) * t.h1_sq - half_flux;
            Ok((term(t.dil_local, "dil_local")?, rhs))
        }
        Identity::SystemPohozaev => {
            let v = component(terms, 1)?;
            let (a1, s1) = (get(params, "a1")?, get(params, "s1")?);
            let (a2, s2) = (get(params, "a2")?, get(params, "s2")?);
            let energy =
                hs_part(0.5 * a1, t)? + 0.5 * t.h1_sq + hs_part(0.5 * a2, v)? + 0.5 * v.h1_sq - get(extra, "int_F")?;
            let lhs = hs_part(s1 * a1, t)? + t.h1_sq + hs_part(s2 * a2, v)? + v.h1_sq - nf * energy;
            Ok((lhs, 0.5 * (t.flux + v.flux)))
        }
        Identity::SystemNonexistence => {
            let v = component(terms, 1)?;
            let (a1, s1) = (get(params, "a1")?, get(params, "s1")?);
            let (a2, s2) = (get(params, "a2")?, get(params, "s2")?);
            let (l1, l2, d) = (get(params, "lambda1")?, get(params, "lambda2")?, get(params, "delta")?);
            let (p, q) = (get(params, "p")?, get(params, "q")?);
            let ab = get(params, "alpha")? + get(params, "beta")?;
            let m = 0.5 * (nf - 2.0);
            let lhs = l1 * (nf / p - m) * get(extra, "int_u_p")?
                + l2 * (nf / q - m) * get(extra, "int_v_q")?
                + d * (nf - m * ab) * get(extra, "int_u_alpha_v_beta")?;
            let rhs = 0.5 * (t.flux + v.flux) + hs_part(a1 * (1.0 - s1), t)? + hs_part(a2 * (1.0 - s2), v)?;
            Ok((lhs, rhs))
        }
        Identity::EigenFlux => {
            let (a, s) = (get(params, "a")?, get(params, "s")?);
            Ok((half_flux, hs_part(s * a, t)? + t.h1_sq))
        }
        Identity::CriticalThreshold => {
            let (a, s, lambda) = (get(params, "a")?, get(params, "s")?, get(params, "lambda")?);
            let lhs = lambda * get(extra, "int_u2")?;
            Ok((lhs, half_flux + hs_part(a * (1.0 - s), t)?))
        }
    }
}

fn build(
    identity: Identity,
    grid: &Grid,
    terms: Vec<PohozaevTerms>,
    params: BTreeMap<String, f64>,
    extra: BTreeMap<String, f64>,
    warnings: Vec<String>,
) -> Result<IdentityReport> {
    let meta = GridMeta::of(grid);
    let (lhs, rhs) = evaluate(identity, &terms, &params, &extra, meta.dimension)?;
    let residual_abs = (lhs - rhs).abs();
    let residual_rel = residual_abs / lhs.abs().max(rhs.abs()).max(SCALE_FLOOR);
    Ok(IdentityReport {
        identity,
        lhs,
        rhs,
        residual_abs,
        residual_rel,
        terms,
        params,
        extra,
        grid: meta,
        warnings,
    })
}

fn params<const K: usize>(entries: [(&str, f64); K]) -> BTreeMap<String, f64> {
    entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// `(a, s)` of an operator set; `s` is reported as 0 when there is no
/// fractional part (it then never multiplies anything).
fn order_params(ops: &OperatorSet) -> (f64, f64) {
    (ops.a, ops.s().unwrap_or(0.0))
}

fn trivial_warning(u: &GridFunction, what: &str) -> Vec<String> {
    if u.max_abs() < TRIVIAL_THRESHOLD {
        vec![format!(
            "{what} is trivial (max |u| < {TRIVIAL_THRESHOLD:e}); the identity reads 0 = 0 and carries no information"
        )]
    } else {
        Vec::new()
    }
}

/// Scalar identity for a solve of `-Δu + a(-Δ)^s u = f(u)`.
pub fn check_pohozaev(
    u: &GridFunction,
    nl: &Nonlinearity,
    ops: &OperatorSet,
    bq: &BoundaryQuadrature,
) -> Result<IdentityReport> {
    let t = pohozaev_terms(u, ops, Some(nl), bq, TermRequest::default())?;
    let (a, s) = order_params(ops);
    build(
        Identity::Pohozaev,
        u.grid(),
        vec![t],
        params([("a", a), ("s", s)]),
        BTreeMap::new(),
        trivial_warning(u, "solution"),
    )
}

/// The equivalent form, with an integration-by-parts cross-check.
///
/// `extra.ibp_defect` is `|[u]_1² + a[u]_s² - ∫u f(u)| / |∫u f(u)|` with
/// the double-sum seminorm, i.e. how far the discrete solution is from
/// satisfying `∫u(-Δ)^s u = [u]_s²` with the independent estimator; it
/// bounds the gap between the two forms of the identity up to the factor
/// `|2-n|/2`. `extra.lhs_gap` is that gap as measured.
pub fn check_pohozaev_equivalent(
    u: &GridFunction,
    nl: &Nonlinearity,
    ops: &OperatorSet,
    bq: &BoundaryQuadrature,
) -> Result<IdentityReport> {
    let (a, s) = order_params(ops);
    let req = TermRequest {
        doublesum: a > 0.0,
        dilation: false,
    };
    let t = pohozaev_terms(u, ops, Some(nl), bq, req)?;
    let n = u.grid().dimension() as f64;
    let int_uf = term(t.int_uf, "int_uf")?;
    let hs_ds = if a > 0.0 {
        a * term(t.hs_sq_doublesum, "hs_sq_doublesum")?
    } else {
        0.0
    };
    let hs_bil = hs_part(a, &t)?;
    let scale = int_uf.abs().max(SCALE_FLOOR);
    let ibp_defect = (t.h1_sq + hs_ds - int_uf).abs() / scale;
    let discrete_defect = (t.h1_sq + hs_bil - int_uf).abs() / scale;
    let lhs_pohozaev = hs_part(s * a, &t)? + t.h1_sq - n * term(t.energy, "energy")?;
    let mut report = build(
        Identity::PohozaevEquivalent,
        u.grid(),
        vec![t],
        params([("a", a), ("s", s)]),
        BTreeMap::new(),
        trivial_warning(u, "solution"),
    )?;
    let lhs_gap = (lhs_pohozaev - report.lhs).abs() / report.lhs.abs().max(SCALE_FLOOR);
    report.extra.insert("ibp_defect".into(), ibp_defect);
    report.extra.insert("discrete_ibp_defect".into(), discrete_defect);
    report.extra.insert("lhs_gap".into(), lhs_gap);
    Ok(report)
}

/// Both dilation identities for an admissible (possibly manufactured)
/// profile: `(nonlocal, local)`.
pub fn check_dilation(
    u: &GridFunction,
    ops: &OperatorSet,
    bq: &BoundaryQuadrature,
) -> Result<(IdentityReport, IdentityReport)> {
    let s = ops
        .s()
        .ok_or_else(|| Error::InvalidParameter("the nonlocal dilation identity needs an order s".into()))?;
    let req = TermRequest {
        doublesum: false,
        dilation: true,
    };
    let t = pohozaev_terms(u, ops, None, bq, req)?;
    let warn = trivial_warning(u, "profile");
    let mut collar_b = BTreeMap::new();
    collar_b.insert(
        "collar".to_string(),
        term(t.dil_nonlocal_collar, "dil_nonlocal_collar")?,
    );
    let mut collar_c = BTreeMap::new();
    collar_c.insert("collar".to_string(), term(t.dil_local_collar, "dil_local_collar")?);
    let b = build(
        Identity::DilationNonlocal,
        u.grid(),
        vec![t.clone()],
        params([("s", s)]),
        collar_b,
        warn.clone(),
    )?;
    let c = build(
        Identity::DilationLocal,
        u.grid(),
        vec![t],
        BTreeMap::new(),
        collar_c,
        warn,
    )?;
    Ok((b, c))
}

/// Joint integrals of a system solution.
fn system_integrals(u: &GridFunction, v: &GridFunction, snl: &SystemNonlinearity) -> BTreeMap<String, f64> {
    let w = u.grid().weights();
    let joint = |f: &dyn Fn(f64, f64) -> f64| -> f64 {
        let terms: Vec<f64> = u
            .values()
            .iter()
            .zip(v.values())
            .zip(w)
            .map(|((a, b), w)| w * f(*a, *b))
            .collect();
        pairwise_sum(&terms)
    };
    let mut m = BTreeMap::new();
    m.insert("int_F".into(), joint(&|a, b| snl.F(a, b)));
    m.insert("int_u_p".into(), joint(&|a, _| a.abs().powf(snl.p)));
    m.insert("int_v_q".into(), joint(&|_, b| b.abs().powf(snl.q)));
    m.insert(
        "int_u_alpha_v_beta".into(),
        joint(&|a, b| a.abs().powf(snl.alpha) * b.abs().powf(snl.beta)),
    );
    m
}

fn system_terms(
    u: &GridFunction,
    v: &GridFunction,
    ops: (&OperatorSet, &OperatorSet),
    bq: &BoundaryQuadrature,
) -> Result<(Vec<PohozaevTerms>, BTreeMap<String, f64>)> {
    if !ops.0.grid().same_as(ops.1.grid()) {
        return Err(Error::GridMismatch("system operators live on different grids".into()));
    }
    let tu = pohozaev_terms(u, ops.0, None, bq, TermRequest::default())?;
    let tv = pohozaev_terms(v, ops.1, None, bq, TermRequest::default())?;
    let (a1, s1) = order_params(ops.0);
    let (a2, s2) = order_params(ops.1);
    Ok((vec![tu, tv], params([("a1", a1), ("s1", s1), ("a2", a2), ("s2", s2)])))
}

fn pair_warning(u: &GridFunction, v: &GridFunction) -> Vec<String> {
    if u.max_abs() < TRIVIAL_THRESHOLD && v.max_abs() < TRIVIAL_THRESHOLD {
        vec!["solution pair is trivial; the identity reads 0 = 0 and carries no information".into()]
    } else {
        Vec::new()
    }
}

/// Two-component identity for a solve of the coupled system.
pub fn check_system_pohozaev(
    u: &GridFunction,
    v: &GridFunction,
    snl: &SystemNonlinearity,
    ops: (&OperatorSet, &OperatorSet),
    bq: &BoundaryQuadrature,
) -> Result<IdentityReport> {
    let (terms, p) = system_terms(u, v, ops, bq)?;
    build(
        Identity::SystemPohozaev,
        u.grid(),
        terms,
        p,
        system_integrals(u, v, snl),
        pair_warning(u, v),
    )
}

/// The sign-definite rearrangement used for nonexistence: the left side
/// collects the power and coupling integrals, the right side is a sum of
/// nonnegative terms.
pub fn check_system_nonexistence(
    u: &GridFunction,
    v: &GridFunction,
    snl: &SystemNonlinearity,
    ops: (&OperatorSet, &OperatorSet),
    bq: &BoundaryQuadrature,
) -> Result<IdentityReport> {
    let (terms, mut p) = system_terms(u, v, ops, bq)?;
    for (k, val) in [
        ("lambda1", snl.lambda1),
        ("lambda2", snl.lambda2),
        ("delta", snl.delta),
        ("alpha", snl.alpha),
        ("beta", snl.beta),
        ("p", snl.p),
        ("q", snl.q),
    ] {
        p.insert(k.into(), val);
    }
    build(
        Identity::SystemNonexistence,
        u.grid(),
        terms,
        p,
        system_integrals(u, v, snl),
        pair_warning(u, v),
    )
}

/// Flux identity of a principal eigenpair; also reports the smallest
/// boundary normal derivative, which must stay away from zero.
pub fn check_eigen_flux(eig: &EigenPair, ops: &OperatorSet, bq: &BoundaryQuadrature) -> Result<IdentityReport> {
    if !(eig.residual <= EIGEN_TOL) {
        return Err(Error::InvalidParameter(format!(
            "eigenpair residual {:e} exceeds {EIGEN_TOL:e}",
            eig.residual
        )));
    }
    let t = pohozaev_terms(&eig.function, ops, None, bq, TermRequest::default())?;
    let (a, s) = order_params(ops);
    let mut extra = BTreeMap::new();
    extra.insert("min_normal_derivative".into(), t.flux_min_normal_derivative);
    extra.insert("eigenvalue".into(), eig.value);
    build(
        Identity::EigenFlux,
        eig.function.grid(),
        vec![t],
        params([("a", a), ("s", s)]),
        extra,
        Vec::new(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdConclusion {
    NonexistenceNontrivial,
    NonexistencePositive,
    NoConclusion,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdVerdict {
    pub lambda: f64,
    /// `a (1 - s) λ_{1,s}`
    pub threshold: f64,
    pub conclusion: ThresholdConclusion,
    pub note: String,
}

/// Where `λ` sits relative to `a(1-s)λ_{1,s}` for the critical problem on the
/// 3D ball: below gives no nontrivial solution, equality (relative
/// tolerance [`THRESHOLD_RTOL`]) no positive solution.
pub fn threshold_verdict(lambda: f64, a: f64, s: f64, lambda1s: f64) -> ThresholdVerdict {
    let threshold = if a == 0.0 { 0.0 } else { a * (1.0 - s) * lambda1s };
    let tol = THRESHOLD_RTOL * threshold.abs().max(lambda.abs());
    let conclusion = if (lambda - threshold).abs() <= tol {
        ThresholdConclusion::NonexistencePositive
    } else if lambda < threshold {
        ThresholdConclusion::NonexistenceNontrivial
    } else {
        ThresholdConclusion::NoConclusion
    };
    let note = match conclusion {
        ThresholdConclusion::NonexistenceNontrivial => {
            "λ below a(1-s)λ₁ₛ: consistent with nonexistence of nontrivial solutions (numerical evidence, not proof)"
        }
        ThresholdConclusion::NonexistencePositive => {
            "λ at a(1-s)λ₁ₛ: consistent with nonexistence of positive solutions (numerical evidence, not proof)"
        }
        ThresholdConclusion::NoConclusion => "λ above a(1-s)λ₁ₛ: the threshold argument gives no conclusion",
    };
    ThresholdVerdict {
        lambda,
        threshold,
        conclusion,
        note: note.into(),
    }
}

/// Identity and threshold verdict for a solve of the critical problem
/// `-Δu + a(-Δ)^s u = λu + u⁵` on the radial 3D ball.
pub fn check_critical_threshold(
    u: &GridFunction,
    lambda: f64,
    ops: &OperatorSet,
    bq: &BoundaryQuadrature,
    lambda1s: f64,
) -> Result<(IdentityReport, ThresholdVerdict)> {
    let dim = u.grid().dimension();
    if dim != 3 {
        return Err(Error::Unsupported(format!(
            "the critical threshold check needs n = 3, got n = {dim}"
        )));
    }
    let t = pohozaev_terms(u, ops, None, bq, TermRequest::default())?;
    let (a, s) = order_params(ops);
    let mut extra = BTreeMap::new();
    extra.insert("int_u2".into(), weighted(u, |x| x * x));
    let report = build(
        Identity::CriticalThreshold,
        u.grid(),
        vec![t],
        params([("a", a), ("s", s), ("lambda", lambda)]),
        extra,
        trivial_warning(u, "solution"),
    )?;
    Ok((report, threshold_verdict(lambda, a, s, lambda1s)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conclusion {
    NoNontrivial,
    NoPositive,
    NoConclusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HypothesisCheck {
    /// `δ((α+β) - 2*) ≥ 0`
    pub coupling: bool,
    /// `λ₁(p - 2*) ≥ 0`
    pub first: bool,
    /// `λ₂(q - 2*) ≥ 0`
    pub second: bool,
    pub first_strict: bool,
    pub second_strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NonexistenceVerdict {
    pub hypothesis: HypothesisCheck,
    pub conclusion: Conclusion,
}

/// Hypothesis predicate for the power/coupling system in dimension 3
/// (`2* = 6`). Pure: no numerics involved.
pub fn system_verdict(snl: &SystemNonlinearity, n: usize) -> Result<NonexistenceVerdict> {
    let crit = Nonlinearity::critical_exponent(n)
        .filter(|_| n == 3)
        .ok_or_else(|| Error::Unsupported(format!("the system verdict needs n = 3, got n = {n}")))?;
    let c = snl.delta * (snl.alpha + snl.beta - crit);
    let f = snl.lambda1 * (snl.p - crit);
    let g = snl.lambda2 * (snl.q - crit);
    let hypothesis = HypothesisCheck {
        coupling: c >= 0.0,
        first: f >= 0.0,
        second: g >= 0.0,
        first_strict: f > 0.0,
        second_strict: g > 0.0,
    };
    let all = hypothesis.coupling && hypothesis.first && hypothesis.second;
    let conclusion = if all && hypothesis.first_strict && hypothesis.second_strict {
        Conclusion::NoNontrivial
    } else if all {
        Conclusion::NoPositive
    } else {
        Conclusion::NoConclusion
    };
    Ok(NonexistenceVerdict { hypothesis, conclusion })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyStatus {
    Complete,
    /// at least one grid failed
    Incomplete,
    /// every residual is exactly zero
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceStudy {
    #[serde(rename = "grids_N")]
    pub grids: Vec<usize>,
    /// relative residual per grid; `None` where the run failed
    pub residuals: Vec<Option<f64>>,
    /// strictly decreasing across all grids
    pub monotone: bool,
    /// mean of `log₂(r_N / r_{2N})`, only for monotone studies
    pub order: Option<f64>,
    /// Richardson estimate of the zero-mesh residual from the two finest grids
    pub extrapolated: Option<f64>,
    pub status: StudyStatus,
    pub errors: Vec<String>,
}

/// Checks that `grids` is ascending, dyadic and has at least three entries.
pub fn validate_dyadic(grids: &[usize]) -> Result<()> {
    if grids.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "a convergence study needs at least 3 grids, got {}",
            grids.len()
        )));
    }
    for w in grids.windows(2) {
        if w[1] != 2 * w[0] {
            return Err(Error::InvalidParameter(format!(
                "grid list must double at each step: {} is followed by {}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// Runs `run(N)` per grid (ascending) and summarizes the residuals.
pub fn convergence_study<F: FnMut(usize) -> Result<f64>>(grids: &[usize], mut run: F) -> Result<ConvergenceStudy> {
    validate_dyadic(grids)?;
    let mut residuals = Vec::with_capacity(grids.len());
    let mut errors = Vec::new();
    for &n in grids {
        match run(n) {
            Ok(r) => residuals.push(Some(r)),
            Err(e) => {
                errors.push(format!("N={n}: {e}"));
                residuals.push(None);
            }
        }
    }
    let done: Vec<f64> = residuals.iter().flatten().copied().collect();
    let status = if done.len() < residuals.len() {
        StudyStatus::Incomplete
    } else if done.iter().all(|r| *r == 0.0) {
        StudyStatus::Degenerate
    } else {
        StudyStatus::Complete
    };
    let complete = status == StudyStatus::Complete;
    let monotone = complete && done.windows(2).all(|w| w[1] < w[0]);
    let order = (monotone && done.iter().all(|r| *r > 0.0)).then(|| {
        let logs: Vec<f64> = done.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        logs.iter().sum::<f64>() / logs.len() as f64
    });
    let extrapolated = order.map(|p| {
        let k = done.len();
        crate::numerics::richardson(done[k - 2], done[k - 1], p)
    });
    Ok(ConvergenceStudy {
        grids: grids.to_vec(),
        residuals,
        monotone,
        order,
        extrapolated,
        status,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::fracops::assemble_laplacian;
    use crate::geometry::{boundary_quadrature, Domain};
    use crate::solvers::solve_linear;

    fn torsion(n: usize) -> (GridFunction, OperatorSet, BoundaryQuadrature) {
        let g = Arc::new(Grid::new(Domain::interval(1.0).unwrap(), n).unwrap());
        let op = assemble_laplacian(&g);
        let u = solve_linear(&op, &GridFunction::from_fn(g.clone(), |_| 1.0)).unwrap();
        let bq = boundary_quadrature(&g, 2).unwrap();
        (u, OperatorSet::from_operator(&op).unwrap(), bq)
    }

    #[test]
    fn torsion_identity_closes_at_second_order() {
        let nl = Nonlinearity::ConstantSource { c: 1.0 };
        let (u, ops, bq) = torsion(256);
        let r = check_pohozaev(&u, &nl, &ops, &bq).unwrap();
        let h = 2.0 / 256.0;
        // lhs = 1 - h²/4 exactly for the three-point scheme
        assert!((r.lhs - (1.0 - h * h / 4.0)).abs() < 1e-9, "{}", r.lhs);
        assert!((r.rhs - 1.0).abs() < 1e-9);
        assert_eq!(r.recompute().unwrap(), (r.lhs, r.rhs));
        let e = check_pohozaev_equivalent(&u, &nl, &ops, &bq).unwrap();
        assert!((e.lhs - 1.0).abs() < 1e-4);
    }

    #[test]
    fn zero_solution_warns() {
        let nl = Nonlinearity::Linear { lambda: 1.0 };
        let (u, ops, bq) = torsion(64);
        let z = GridFunction::zeros(u.grid().clone());
        let r = check_pohozaev(&z, &nl, &ops, &bq).unwrap();
        assert_eq!((r.lhs, r.rhs, r.residual_rel), (0.0, 0.0, 0.0));
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn worked_system_verdicts() {
        let base = SystemNonlinearity {
            lambda1: 1.0,
            lambda2: 1.0,
            delta: 0.0,
            alpha: 3.0,
            beta: 3.0,
            p: 7.0,
            q: 7.0,
        };
        assert_eq!(system_verdict(&base, 3).unwrap().conclusion, Conclusion::NoNontrivial);
        let border = SystemNonlinearity {
            p: 6.0,
            q: 6.0,
            delta: 1.0,
            ..base
        };
        assert_eq!(system_verdict(&border, 3).unwrap().conclusion, Conclusion::NoPositive);
        let sub = SystemNonlinearity { p: 4.0, ..base };
        assert_eq!(system_verdict(&sub, 3).unwrap().conclusion, Conclusion::NoConclusion);
        assert!(system_verdict(&base, 2).is_err());
    }

    #[test]
    fn threshold_cases() {
        let v = threshold_verdict(-1.0, 0.0, 0.5, 10.0);
        assert_eq!(v.conclusion, ThresholdConclusion::NonexistenceNontrivial);
        assert_eq!(v.threshold, 0.0);
        let v = threshold_verdict(0.0, 0.0, 0.5, 10.0);
        assert_eq!(v.conclusion, ThresholdConclusion::NonexistencePositive);
        let v = threshold_verdict(5.0, 1.0, 0.5, 10.0);
        assert_eq!(v.threshold, 5.0);
        assert_eq!(v.conclusion, ThresholdConclusion::NonexistencePositive);
        assert_eq!(
            threshold_verdict(6.0, 1.0, 0.5, 10.0).conclusion,
            ThresholdConclusion::NoConclusion
        );
    }

    #[test]
    fn study_flags() {
        let s = convergence_study(&[8, 16, 32], |n| Ok(1.0 / (n * n) as f64)).unwrap();
        assert!(s.monotone);
        assert!((s.order.unwrap() - 2.0).abs() < 1e-12);
        let d = convergence_study(&[8, 16, 32], |_| Ok(0.0)).unwrap();
        assert_eq!(d.status, StudyStatus::Degenerate);
        assert!(d.order.is_none());
        let i = convergence_study(&[8, 16, 32], |n| {
            if n == 16 {
                Err(Error::Insufficient("x".into()))
            } else {
                Ok(1.0)
            }
        })
        .unwrap();
        assert_eq!(i.status, StudyStatus::Incomplete);
        assert!(convergence_study(&[8, 16, 24], |_| Ok(1.0)).is_err());
    }
}
