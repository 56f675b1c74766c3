//! Scalar quantities entering the Pohozaev identities: seminorms, energy,
//! boundary flux, dilation integrals and the boundary blow-up diagnostic.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fracops::kernel::square_self_integral;
use crate::fracops::{
    assemble_fractional, assemble_laplacian, assemble_mixed, DiscreteOperator, FractionalKernelSpec, GridFunction,
};
use crate::geometry::{BoundaryQuadrature, DomainKind, Grid};
use crate::numerics::{linear_fit, pairwise_sum, zeta, GaussRule};
use crate::solvers::Nonlinearity;

/// Nodes closer than this many cells to ∂Ω form the boundary collar.
const COLLAR_CELLS: f64 = 1.5;
/// Angles of the trapezoid rule for the disk exterior kernel.
const EXTERIOR_ANGLES: usize = 512;
/// Offsets `max(|p|, |q|)` up to this use exact cell integrals in the disk double sum.
const NEAR_OFFSETS: usize = 3;
const BLOWUP_BINS: usize = 16;
const BLOWUP_MIN_BINS: usize = 5;

/// Laplacian and (optionally) fractional operator of `-Δ + a(-Δ)^s` on one grid.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub laplacian: DiscreteOperator,
    pub fractional: Option<DiscreteOperator>,
    pub a: f64,
}

impl OperatorSet {
    /// `s` may be given with `a = 0`; the fractional part is then available
    /// for seminorms but does not enter the operator.
    pub fn new(grid: &Arc<Grid>, a: f64, s: Option<f64>) -> Result<Self> {
        if !(a >= 0.0) {
            return Err(Error::NegativeCoupling(a));
        }
        if a > 0.0 && s.is_none() {
            return Err(Error::InvalidParameter("a > 0 needs a fractional order s".into()));
        }
        let fractional = s.map(|s| assemble_fractional(grid, s)).transpose()?;
        Ok(Self {
            laplacian: assemble_laplacian(grid),
            fractional,
            a,
        })
    }

    /// Splits a Laplacian or mixed operator into its parts.
    pub fn from_operator(op: &DiscreteOperator) -> Result<Self> {
        let laplacian = op
            .laplacian_part()
            .ok_or_else(|| Error::Unsupported("a pure fractional operator has no local part".into()))?;
        let fractional = op.fractional_part();
        let a = if fractional.is_some() { op.coupling() } else { 0.0 };
        Ok(Self {
            laplacian,
            fractional,
            a,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.laplacian.grid()
    }

    pub fn s(&self) -> Option<f64> {
        self.fractional.as_ref().and_then(|f| f.order())
    }

    /// The assembled operator `-Δ + a(-Δ)^s`.
    pub fn mixed(&self) -> Result<DiscreteOperator> {
        match self.s() {
            Some(s) if self.a > 0.0 => assemble_mixed(self.grid(), self.a, s),
            _ => Ok(self.laplacian.clone()),
        }
    }
}

/// Every term of the identities for one grid function. Terms that were not
/// requested (or have no meaning for the inputs) are `None`.
#[allow(non_snake_case)]
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PohozaevTerms {
    pub hs_sq_bilinear: Option<f64>,
    pub hs_sq_doublesum: Option<f64>,
    pub h1_sq: f64,
    pub int_F: Option<f64>,
    pub int_uf: Option<f64>,
    pub energy: Option<f64>,
    pub flux: f64,
    pub flux_min_normal_derivative: f64,
    pub dil_local: Option<f64>,
    pub dil_local_collar: Option<f64>,
    pub dil_nonlocal: Option<f64>,
    pub dil_nonlocal_collar: Option<f64>,
}

/// Which of the more expensive terms to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TermRequest {
    pub doublesum: bool,
    pub dilation: bool,
}

/// Evaluates the terms of `u` for the operator set and (optional) nonlinearity.
pub fn pohozaev_terms(
    u: &GridFunction,
    ops: &OperatorSet,
    nl: Option<&Nonlinearity>,
    bq: &BoundaryQuadrature,
    req: TermRequest,
) -> Result<PohozaevTerms> {
    u.ensure_same_grid(ops.grid())?;
    let mut t = PohozaevTerms {
        h1_sq: ops.laplacian.bilinear(u.values(), u.values()),
        ..Default::default()
    };
    if let Some(frac) = &ops.fractional {
        t.hs_sq_bilinear = Some(frac.bilinear(u.values(), u.values()));
        if req.doublesum {
            t.hs_sq_doublesum = Some(hs_doublesum(u, frac.order().unwrap_or(f64::NAN))?);
        }
    }
    if let Some(nl) = nl {
        t.int_F = Some(int_F(u, nl));
        t.int_uf = Some(int_uf(u, nl));
        t.energy = Some(energy(u, &t, ops.a, nl)?);
    }
    let fl = boundary_flux(u, bq)?;
    t.flux = fl.flux;
    t.flux_min_normal_derivative = fl.min_normal_derivative;
    if req.dilation {
        let dl = dilation_local(u)?;
        t.dil_local = Some(dl.value);
        t.dil_local_collar = Some(dl.collar);
        if let Some(frac) = &ops.fractional {
            let dn = dilation_nonlocal(u, frac)?;
            t.dil_nonlocal = Some(dn.value);
            t.dil_nonlocal_collar = Some(dn.collar);
        }
    }
    Ok(t)
}

/// `[u]_1² = ∫|∇u|²` as the edge form of the discrete Laplacian (cut links
/// at the disk boundary included).
pub fn h1_seminorm_sq(u: &GridFunction) -> f64 {
    let lap = assemble_laplacian(u.grid());
    lap.bilinear(u.values(), u.values())
}

/// Two estimates of `[u]_s²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HsEstimate {
    /// `uᵀ S u` with the form matrix of the fractional operator
    pub bilinear: f64,
    /// double integral of the difference quotients plus the exterior term
    pub doublesum: f64,
}

pub fn hs_seminorm_sq(u: &GridFunction, op: &DiscreteOperator) -> Result<HsEstimate> {
    u.ensure_same_grid(op.grid())?;
    let frac = op
        .fractional_part()
        .ok_or_else(|| Error::InvalidParameter("operator has no fractional part".into()))?;
    let s = frac.order().unwrap_or(f64::NAN);
    Ok(HsEstimate {
        bilinear: frac.bilinear(u.values(), u.values()),
        doublesum: hs_doublesum(u, s)?,
    })
}

/// `(c/2)∬_{Ω×Ω} (u(x)-u(y))²/|x-y|^{n+2s} + ∫_Ω u² κ` with
/// `κ(x) = c ∫_{Ω^c} |x-y|^{-n-2s} dy`.
///
/// On the radial ball this uses `[u]_s² = 2π [w]_s²` for the odd 1D
/// profile `w(t) = t u(|t|)` on `(-R, R)`.
pub fn hs_doublesum(u: &GridFunction, s: f64) -> Result<f64> {
    let grid = u.grid();
    let h = grid.h();
    let n = grid.n();
    match grid.kind() {
        DomainKind::Interval => {
            let vals: Vec<f64> = (0..=n).map(|k| grid.line_value(u.values(), k)).collect();
            line_doublesum(&vals, h, s)
        }
        DomainKind::Ball3dRadial => {
            let vals: Vec<f64> = (0..=2 * n)
                .map(|k| {
                    let t = k as f64 - n as f64;
                    t * h * grid.line_value(u.values(), k.abs_diff(n))
                })
                .collect();
            Ok(2.0 * PI * line_doublesum(&vals, h, s)?)
        }
        DomainKind::Disk2d => disk_doublesum(u, s),
    }
}

/// Double sum on a closed 1D lattice `t_0..t_M` (boundary values zero).
///
/// For fixed `x_i` the smooth factor `(u_i - u(y))²/|x_i - y|²` is
/// interpolated by hats in `y` and integrated exactly against `|x_i - y|^{1-2s}`.
fn line_doublesum(vals: &[f64], h: f64, s: f64) -> Result<f64> {
    let m = vals.len() - 1;
    if m < 4 {
        return Err(Error::Insufficient("double sum needs at least four cells".into()));
    }
    let c = FractionalKernelSpec::new(1, s)?.c_ns;
    let q = 3.0 - 2.0 * s;
    let e = q - 2.0;
    let rule = GaussRule::new(16);
    // rise[k] = ∫_k^{k+1} (z-k) z^e dz, fall[k] = ∫_k^{k+1} (k+1-z) z^e dz
    let mut rise = vec![1.0 / q; m];
    let mut fall = vec![1.0 / ((q - 1.0) * q); m];
    for k in 1..m {
        let kf = k as f64;
        rise[k] = rule.integrate(kf, kf + 1.0, |z| (z - kf) * z.powf(e));
        fall[k] = rule.integrate(kf, kf + 1.0, |z| (kf + 1.0 - z) * z.powf(e));
    }
    let scale = h.powf(q - 1.0);
    let radius = 0.5 * m as f64 * h;
    let deriv = |i: usize| -> f64 {
        if i == 0 {
            (-3.0 * vals[0] + 4.0 * vals[1] - vals[2]) / (2.0 * h)
        } else if i == m {
            (3.0 * vals[m] - 4.0 * vals[m - 1] + vals[m - 2]) / (2.0 * h)
        } else {
            (vals[i + 1] - vals[i - 1]) / (2.0 * h)
        }
    };
    let rows: Vec<f64> = (0..=m)
        .into_par_iter()
        .map(|i| {
            let ui = vals[i];
            let di = deriv(i);
            let sides = (i > 0) as usize + (i < m) as usize;
            let mut acc = sides as f64 * fall[0] * di * di;
            for (j, &uj) in vals.iter().enumerate() {
                if j == i {
                    continue;
                }
                let k = i.abs_diff(j);
                let w = if j == 0 || j == m {
                    rise[k - 1]
                } else {
                    rise[k - 1] + fall[k]
                };
                let d = (ui - uj) / (k as f64 * h);
                acc += w * d * d;
            }
            let outer = if i == 0 || i == m { 0.5 * h } else { h };
            let mut row = 0.5 * c * scale * acc;
            if i > 0 && i < m {
                let x = -radius + i as f64 * h;
                let kappa = c / (2.0 * s) * ((radius - x).powf(-2.0 * s) + (radius + x).powf(-2.0 * s));
                row += ui * ui * kappa;
            }
            outer * row
        })
        .collect();
    Ok(pairwise_sum(&rows))
}

/// `∫_{cell(p,q)} |z|^{-2s} dz / |(p,q)|²` on the unit lattice.
fn near_cell_weight(rule: &GaussRule, s: f64, p: usize, q: usize) -> f64 {
    let sub = 8;
    let step = 1.0 / sub as f64;
    let (pf, qf) = (p as f64, q as f64);
    let mut acc = 0.0;
    for a in 0..sub {
        let x0 = pf - 0.5 + a as f64 * step;
        for b in 0..sub {
            let y0 = qf - 0.5 + b as f64 * step;
            acc += rule.integrate(x0, x0 + step, |x| {
                rule.integrate(y0, y0 + step, |y| (x * x + y * y).powf(-s))
            });
        }
    }
    acc / (pf * pf + qf * qf)
}

fn disk_doublesum(u: &GridFunction, s: f64) -> Result<f64> {
    let grid = u.grid();
    let n = grid.n();
    let h = grid.h();
    let radius = grid.radius();
    let c = FractionalKernelSpec::new(2, s)?.c_ns;
    let stride = n + 1;
    let rule = GaussRule::new(6);
    let mut table = vec![0.0; stride * stride];
    for p in 0..=n {
        for q in 0..=n {
            if p == 0 && q == 0 {
                continue;
            }
            table[p * stride + q] = if p.max(q) <= NEAR_OFFSETS {
                near_cell_weight(&rule, s, p, q)
            } else {
                ((p * p + q * q) as f64).powf(-1.0 - s)
            };
        }
    }
    let self_cell = square_self_integral(s);
    let vals = u.values();
    let lat = grid.lattice();
    let grad = disk_gradient(grid, vals);
    let scale = h.powf(-2.0 * s);
    let cell = h * h;
    let rows: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let ui = vals[i];
            let [pi, qi] = lat[i];
            let mut acc = 0.0;
            for (j, &uj) in vals.iter().enumerate() {
                if j == i {
                    continue;
                }
                let [pj, qj] = lat[j];
                let d = ui - uj;
                acc += d * d * table[pi.abs_diff(pj) * stride + qi.abs_diff(qj)];
            }
            let [gx, gy] = grad[i];
            acc += 0.5 * (gx * gx + gy * gy) * self_cell * cell;
            let kappa = disk_exterior_kernel(c, s, radius, grid.norm(i));
            cell * (0.5 * c * scale * acc + ui * ui * kappa)
        })
        .collect();
    Ok(pairwise_sum(&rows))
}

/// `c ∫_{|y|>R} |x-y|^{-2-2s} dy` for `|x| = r < R`.
fn disk_exterior_kernel(c: f64, s: f64, radius: f64, r: f64) -> f64 {
    let m = EXTERIOR_ANGLES;
    let mut acc = 0.0;
    for k in 0..m {
        let t = 2.0 * PI * k as f64 / m as f64;
        let ct = t.cos();
        let reach = -r * ct + (radius * radius - r * r * (1.0 - ct * ct)).sqrt();
        acc += reach.powf(-2.0 * s);
    }
    c / (2.0 * s) * acc * 2.0 * PI / m as f64
}

/// Distances (in units of length) and values at the four lattice neighbours
/// of disk node `idx`, ordered `-x, +x, -y, +y`. A link that leaves the disk
/// ends on the circle with value 0.
fn disk_links(grid: &Grid, vals: &[f64], idx: usize) -> [(f64, f64); 4] {
    let h = grid.h();
    let r = grid.radius();
    let [i, j] = grid.lattice()[idx];
    let [x, y] = grid.coords()[idx];
    let (i, j) = (i as isize, j as isize);
    let sx = (r * r - y * y).max(0.0).sqrt();
    let sy = (r * r - x * x).max(0.0).sqrt();
    let dirs = [(-1, 0, sx + x), (1, 0, sx - x), (0, -1, sy + y), (0, 1, sy - y)];
    dirs.map(|(di, dj, reach)| match grid.disk_index(i + di, j + dj) {
        Some(k) => (h, vals[k]),
        None => (reach.clamp(1e-3 * h, h), 0.0),
    })
}

/// Nonuniform three-point derivative and second derivative from samples at
/// `-hl`, `0`, `hr`.
fn three_point(hl: f64, ul: f64, u0: f64, hr: f64, ur: f64) -> (f64, f64) {
    let d1 = (hl * hl * (ur - u0) + hr * hr * (u0 - ul)) / (hl * hr * (hl + hr));
    let d2 = 2.0 * ((ur - u0) / hr - (u0 - ul) / hl) / (hl + hr);
    (d1, d2)
}

fn disk_gradient(grid: &Grid, vals: &[f64]) -> Vec<[f64; 2]> {
    (0..grid.len())
        .map(|i| {
            let l = disk_links(grid, vals, i);
            let (gx, _) = three_point(l[0].0, l[0].1, vals[i], l[1].0, l[1].1);
            let (gy, _) = three_point(l[2].0, l[2].1, vals[i], l[3].0, l[3].1);
            [gx, gy]
        })
        .collect()
}

/// `x·∇u` at every node.
fn radial_derivative_field(u: &GridFunction) -> Vec<f64> {
    let grid = u.grid();
    let vals = u.values();
    let h = grid.h();
    let n = grid.n();
    match grid.kind() {
        DomainKind::Interval => (1..n)
            .map(|k| {
                let x = grid.coords()[k - 1][0];
                x * (grid.line_value(vals, k + 1) - grid.line_value(vals, k - 1)) / (2.0 * h)
            })
            .collect(),
        DomainKind::Ball3dRadial => {
            // u'(0) = 0 gives u(0) = (4u(h) - u(2h))/3 to second order
            let centre = (4.0 * vals[0] - vals.get(1).copied().unwrap_or(0.0)) / 3.0;
            (1..n)
                .map(|k| {
                    let r = grid.coords()[k - 1][0];
                    let left = if k == 1 { centre } else { grid.line_value(vals, k - 1) };
                    r * (grid.line_value(vals, k + 1) - left) / (2.0 * h)
                })
                .collect()
        }
        DomainKind::Disk2d => disk_gradient(grid, vals)
            .iter()
            .zip(grid.coords())
            .map(|(g, x)| g[0] * x[0] + g[1] * x[1])
            .collect(),
    }
}

/// Pointwise `-Δu`, with Shortley–Weller differences at cut links on the disk.
fn pointwise_laplacian(u: &GridFunction) -> Vec<f64> {
    let grid = u.grid();
    match grid.kind() {
        DomainKind::Disk2d => {
            let vals = u.values();
            (0..grid.len())
                .map(|i| {
                    let l = disk_links(grid, vals, i);
                    let (_, xx) = three_point(l[0].0, l[0].1, vals[i], l[1].0, l[1].1);
                    let (_, yy) = three_point(l[2].0, l[2].1, vals[i], l[3].0, l[3].1);
                    -(xx + yy)
                })
                .collect()
        }
        _ => assemble_laplacian(grid).apply_values(u.values()),
    }
}

/// Inward normal derivative and squared-flux integral on the boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluxEstimate {
    /// `∮ (∂u/∂ν)² (x·ν) dS`
    pub flux: f64,
    /// `min |∂u/∂ν|` over the boundary nodes
    pub min_normal_derivative: f64,
    /// `-∂u/∂ν` per boundary node
    pub normal_derivatives: Vec<f64>,
}

/// Sampling distances along the inward normal, in cells.
pub const FLUX_SAMPLE_CELLS: [usize; 2] = [2, 4];

/// `∂u/∂ν` from `u(∂Ω) = 0` and samples at distances `2h`, `4h` along the
/// inward normal: `-∂u/∂ν ≈ (4u(2h) - u(4h))/(4h)`.
pub fn boundary_flux(u: &GridFunction, bq: &BoundaryQuadrature) -> Result<FluxEstimate> {
    let grid = u.grid();
    let h = grid.h();
    let r = grid.radius();
    let vals = u.values();
    if grid.n() < 8 {
        return Err(Error::Insufficient("flux extraction needs N >= 8".into()));
    }
    let mut dns = Vec::with_capacity(bq.len());
    for (p, nu) in bq.nodes.iter().zip(&bq.normals) {
        let pr = p[0].hypot(p[1]);
        if (pr - r).abs() > 1e-9 * r {
            return Err(Error::GridMismatch(format!(
                "boundary node at radius {pr} does not lie on |x| = {r}"
            )));
        }
        let sample = |cells: usize| -> f64 {
            match grid.kind() {
                DomainKind::Interval => {
                    let k = if p[0] < 0.0 { cells } else { grid.n() - cells };
                    grid.line_value(vals, k)
                }
                DomainKind::Ball3dRadial => grid.line_value(vals, grid.n() - cells),
                DomainKind::Disk2d => {
                    let d = cells as f64 * h;
                    grid.disk_interpolate(vals, p[0] - d * nu[0], p[1] - d * nu[1])
                }
            }
        };
        let [a, b] = FLUX_SAMPLE_CELLS;
        dns.push((4.0 * sample(a) - sample(b)) / (4.0 * h));
    }
    let terms: Vec<f64> = dns
        .iter()
        .zip(&bq.weights)
        .zip(&bq.xdotnu)
        .map(|((d, w), xn)| w * d * d * xn)
        .collect();
    Ok(FluxEstimate {
        flux: pairwise_sum(&terms),
        min_normal_derivative: dns.iter().map(|d| d.abs()).fold(f64::INFINITY, f64::min),
        normal_derivatives: dns,
    })
}

/// A dilation integral with an error bar for the boundary collar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DilationEstimate {
    pub value: f64,
    /// size of the collar contribution (disk, local case) or of the singular
    /// endpoint correction (interval and radial ball, nonlocal case)
    pub collar: f64,
}

/// `∫_Ω (x·∇u)(-Δu)` with boundary-fitted weights.
pub fn dilation_local(u: &GridFunction) -> Result<DilationEstimate> {
    let grid = u.grid();
    let g = radial_derivative_field(u);
    let lap = pointwise_laplacian(u);
    let w = grid.fitted_weights();
    Ok(collar_sum(grid, &w, &g, &lap))
}

fn collar_sum(grid: &Grid, w: &[f64], g: &[f64], f: &[f64]) -> DilationEstimate {
    let terms: Vec<f64> = w.iter().zip(g).zip(f).map(|((w, g), f)| w * g * f).collect();
    let limit = COLLAR_CELLS * grid.h();
    let collar: Vec<f64> = terms
        .iter()
        .zip(grid.dist())
        .map(|(t, d)| if *d < limit { *t } else { 0.0 })
        .collect();
    DilationEstimate {
        value: pairwise_sum(&terms),
        collar: pairwise_sum(&collar).abs(),
    }
}

/// Coefficient `C` in `(-Δ)^s (d_+) = C d^{1-2s}` for the 1D ramp; at
/// `s = 1/2` the profile is `(1/π) log d + const` and the log coefficient is returned.
fn ramp_coefficient(s: f64) -> Result<f64> {
    let c = FractionalKernelSpec::new(1, s)?.c_ns;
    if is_half(s) {
        Ok(c)
    } else {
        Ok(c * (1.0 / (2.0 * s) - 1.0 / (2.0 * s - 1.0)))
    }
}

fn is_half(s: f64) -> bool {
    (s - 0.5).abs() < 1e-12
}

/// `∫_Ω (x·∇u) (-Δ)^s u`.
///
/// Near ∂Ω the integrand behaves like `A d^{1-2s} + B` (`A log d + B` at
/// `s = 1/2`), with `A` fixed by the normal derivative. On the interval and
/// the radial ball the node sum is corrected at each boundary end by the
/// generalized Euler–Maclaurin (zeta) terms of that expansion. On the disk
/// the boundary-fitted node sum is used and the collar contribution is
/// reported as the error bar.
pub fn dilation_nonlocal(u: &GridFunction, op: &DiscreteOperator) -> Result<DilationEstimate> {
    u.ensure_same_grid(op.grid())?;
    let frac = op
        .fractional_part()
        .ok_or_else(|| Error::InvalidParameter("operator has no fractional part".into()))?;
    let s = frac.order().unwrap_or(f64::NAN);
    let grid = u.grid();
    let g = radial_derivative_field(u);
    let au = frac.apply_values(u.values());
    if grid.kind() == DomainKind::Disk2d {
        return Ok(collar_sum(grid, &grid.fitted_weights(), &g, &au));
    }
    let h = grid.h();
    let n = grid.n();
    let r = grid.radius();
    let vals = u.values();
    let w = grid.weights();
    let terms: Vec<f64> = w.iter().zip(&g).zip(&au).map(|((w, g), a)| w * g * a).collect();
    let raw = pairwise_sum(&terms);
    let cs = ramp_coefficient(s)?;
    let beta = 1.0 - 2.0 * s;
    // (node index of the first interior node, outward sign, surface measure)
    let ends: Vec<(usize, f64)> = match grid.kind() {
        DomainKind::Interval => vec![(0, 1.0), (n - 2, 1.0)],
        _ => vec![(n - 2, 4.0 * PI * r * r)],
    };
    let mut correction = 0.0;
    for (idx, measure) in ends {
        let near = |cells: usize| -> f64 {
            let k = if idx == 0 { cells } else { n - cells };
            grid.line_value(vals, k)
        };
        let dn = (4.0 * near(2) - near(4)) / (4.0 * h);
        // x·∇u on ∂Ω is -R ∂u/∂d
        let amp = cs * dn * (-r * dn) * measure;
        let density = terms[idx] / h;
        let (lead, model) = if is_half(s) {
            (amp * h * (0.5 * (2.0 * PI).ln() - 0.5 * h.ln()), amp * h.ln())
        } else {
            (amp * zeta(-beta) * h.powf(1.0 + beta), amp * h.powf(beta))
        };
        let regular = density - model;
        correction += lead - 0.5 * h * regular;
    }
    Ok(DilationEstimate {
        value: raw - correction,
        collar: correction.abs(),
    })
}

/// `∫_Ω F(u)` with the node weights.
#[allow(non_snake_case)]
pub fn int_F(u: &GridFunction, nl: &Nonlinearity) -> f64 {
    weighted(u, |t| nl.F(t))
}

/// `∫_Ω u f(u)` with the node weights.
pub fn int_uf(u: &GridFunction, nl: &Nonlinearity) -> f64 {
    weighted(u, |t| t * nl.f(t))
}

/// `∫_Ω g(u)` with the node weights.
pub fn weighted<F: Fn(f64) -> f64>(u: &GridFunction, g: F) -> f64 {
    let terms: Vec<f64> = u
        .values()
        .iter()
        .zip(u.grid().weights())
        .map(|(v, w)| w * g(*v))
        .collect();
    pairwise_sum(&terms)
}

/// `E(u) = (a/2)[u]_s² + (1/2)[u]_1² - ∫F(u)`, using the bilinear `[u]_s²`.
pub fn energy(u: &GridFunction, terms: &PohozaevTerms, a: f64, nl: &Nonlinearity) -> Result<f64> {
    let nonlocal = if a == 0.0 {
        0.0
    } else {
        let hs = terms
            .hs_sq_bilinear
            .ok_or_else(|| Error::InvalidParameter("energy with a > 0 needs [u]_s²".into()))?;
        0.5 * a * hs
    };
    Ok(nonlocal + 0.5 * terms.h1_sq - terms.int_F.unwrap_or_else(|| int_F(u, nl)))
}

/// Log–log fit of the envelope of `|(-Δ)^s u|` against the distance to ∂Ω.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupProfile {
    /// `None` when the profile is degenerate
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// a fit `M = a + b log d` has a smaller squared error than the power fit
    pub log_preferred: bool,
    pub power_sse: Option<f64>,
    pub log_sse: Option<f64>,
    /// `[mean distance, M(d)]` per non-empty bin
    pub bins: Vec<[f64; 2]>,
    pub degenerate: bool,
}

/// Bins the nodes by distance to ∂Ω on logarithmic bins over `[4h, R/4]`
/// and fits `M(d) ≈ C d^slope`, where `M(d) = max |(-Δ)^s u(x)|` over nodes
/// with `dist(x) ≥` the bin's lower edge. `M` is the quantity a bound of the
/// form `|(-Δ)^s u| ≤ C dist^γ` controls; `|(-Δ)^s u|` itself can change
/// sign inside the window, which would make a direct log fit meaningless.
pub fn blowup_profile(u: &GridFunction, op: &DiscreteOperator) -> Result<BlowupProfile> {
    u.ensure_same_grid(op.grid())?;
    let frac = op
        .fractional_part()
        .ok_or_else(|| Error::InvalidParameter("operator has no fractional part".into()))?;
    let grid = u.grid();
    let au = frac.apply_values(u.values());
    let lo = 4.0 * grid.h();
    let hi = 0.25 * grid.radius();
    if !(hi > lo) {
        return Err(Error::Insufficient("distance range [4h, R/4] is empty".into()));
    }
    let step = (hi / lo).ln() / BLOWUP_BINS as f64;
    // (distance sum, count, max |v|) per bin; beyond the window only the max matters
    let mut sums = vec![(0.0, 0usize, 0.0f64); BLOWUP_BINS];
    let mut beyond = 0.0f64;
    for (d, v) in grid.dist().iter().zip(&au) {
        if *d < lo {
            continue;
        }
        if *d > hi {
            beyond = beyond.max(v.abs());
            continue;
        }
        let b = (((d / lo).ln() / step) as usize).min(BLOWUP_BINS - 1);
        sums[b].0 += d;
        sums[b].1 += 1;
        sums[b].2 = sums[b].2.max(v.abs());
    }
    let mut envelope = beyond;
    let mut bins: Vec<[f64; 2]> = Vec::new();
    for b in sums.iter().rev().filter(|b| b.1 > 0) {
        envelope = envelope.max(b.2);
        bins.push([b.0 / b.1 as f64, envelope]);
    }
    bins.reverse();
    if bins.len() < BLOWUP_MIN_BINS {
        return Err(Error::Insufficient(format!(
            "{} distance bins in [4h, R/4], need {BLOWUP_MIN_BINS}",
            bins.len()
        )));
    }
    if bins.iter().all(|b| b[1] == 0.0) {
        return Ok(BlowupProfile {
            slope: None,
            intercept: None,
            log_preferred: false,
            power_sse: None,
            log_sse: None,
            bins,
            degenerate: true,
        });
    }
    let positive: Vec<&[f64; 2]> = bins.iter().filter(|b| b[1] > 0.0).collect();
    let lx: Vec<f64> = positive.iter().map(|b| b[0].ln()).collect();
    let ly: Vec<f64> = positive.iter().map(|b| b[1].ln()).collect();
    let (intercept, slope, _) =
        linear_fit(&lx, &ly).ok_or_else(|| Error::Insufficient("power fit is singular".into()))?;
    let vals: Vec<f64> = positive.iter().map(|b| b[1]).collect();
    let power_sse: f64 = lx
        .iter()
        .zip(&vals)
        .map(|(x, v)| {
            let r = v - (intercept + slope * x).exp();
            r * r
        })
        .sum();
    let log_sse = linear_fit(&lx, &vals).map(|f| f.2);
    Ok(BlowupProfile {
        slope: Some(slope),
        intercept: Some(intercept),
        log_preferred: log_sse.is_some_and(|l| l < power_sse),
        power_sse: Some(power_sse),
        log_sse,
        bins,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{boundary_quadrature, Domain};
    use approx::assert_relative_eq;

    fn line(n: usize) -> Arc<Grid> {
        Arc::new(Grid::new(Domain::interval(1.0).unwrap(), n).unwrap())
    }

    #[test]
    fn torsion_profile_closed_forms() {
        let g = line(256);
        let u = GridFunction::from_fn(g.clone(), |[x, _]| 0.5 * (1.0 - x * x));
        assert_relative_eq!(h1_seminorm_sq(&u), 2.0 / 3.0, max_relative = 1e-4);
        let bq = boundary_quadrature(&g, 2).unwrap();
        let fl = boundary_flux(&u, &bq).unwrap();
        assert_relative_eq!(fl.flux, 2.0, max_relative = 1e-12);
        let nl = Nonlinearity::ConstantSource { c: 1.0 };
        let ops = OperatorSet::new(&g, 0.0, None).unwrap();
        let t = pohozaev_terms(&u, &ops, Some(&nl), &bq, TermRequest::default()).unwrap();
        assert_relative_eq!(t.energy.unwrap(), -1.0 / 3.0, max_relative = 1e-4);
    }

    #[test]
    fn zero_function_gives_zero_terms() {
        let g = line(64);
        let u = GridFunction::zeros(g.clone());
        let op = assemble_fractional(&g, 0.4).unwrap();
        let hs = hs_seminorm_sq(&u, &op).unwrap();
        assert_eq!((hs.bilinear, hs.doublesum), (0.0, 0.0));
        assert_eq!(dilation_local(&u).unwrap().value, 0.0);
        assert_eq!(dilation_nonlocal(&u, &op).unwrap().value, 0.0);
        let bp = blowup_profile(&u, &op).unwrap();
        assert!(bp.degenerate && bp.slope.is_none());
    }

    #[test]
    fn ramp_coefficient_matches_oracle() {
        // (-Δ)^s of a wide tent (1 - |x|)_+ near x = 1 - d behaves like C d^{1-2s}
        use crate::fracops::pointwise_oracle;
        let s = 0.75;
        let dom = Domain::interval(1.0).unwrap();
        let tent = |p: &[f64]| 1.0 - p[0].abs();
        let c = ramp_coefficient(s).unwrap();
        let d1 = 1e-4;
        let d2 = 4e-4;
        let v1 = pointwise_oracle(&dom, &tent, &[1.0 - d1], s, 1e-8).unwrap();
        let v2 = pointwise_oracle(&dom, &tent, &[1.0 - d2], s, 1e-8).unwrap();
        // the difference removes the bounded part
        let want = c * (d1.powf(1.0 - 2.0 * s) - d2.powf(1.0 - 2.0 * s));
        assert_relative_eq!(v1 - v2, want, max_relative = 2e-2);
    }

    #[test]
    fn fitted_weights_cover_the_domain() {
        for (dom, n, vol) in [
            (Domain::interval(1.0).unwrap(), 64, 2.0),
            (Domain::ball(1.0).unwrap(), 64, 4.0 * PI / 3.0),
            (Domain::disk(1.0).unwrap(), 64, PI),
        ] {
            let g = Grid::new(dom, n).unwrap();
            let total: f64 = g.fitted_weights().iter().sum();
            assert_relative_eq!(total, vol, max_relative = 1e-5);
        }
    }

    #[test]
    fn zeta_correction_recovers_singular_integral() {
        // h Σ_{k≥1} k^{-1/2} h^{-1/2} over [0, 1] versus ∫ d^{-1/2} = 2 (far end regular)
        let h = 1.0 / 1024.0;
        let beta: f64 = -0.5;
        let raw: f64 = (1..1024).map(|k| h * (k as f64 * h).powf(beta)).sum::<f64>() + 0.5 * h;
        let corrected = raw - zeta(-beta) * h.powf(1.0 + beta);
        assert_relative_eq!(corrected, 2.0, max_relative = 1e-6);
    }
}
