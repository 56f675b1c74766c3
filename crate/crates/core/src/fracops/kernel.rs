//! Singular-kernel quadrature weights for the integral fractional Laplacian.
//!
//! All weights here are for unit spacing; a lattice of spacing `h` scales
//! them by `h^{-2s}`.

use std::f64::consts::PI;

use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::numerics::GaussRule;

pub const S_MIN: f64 = 0.05;
pub const S_MAX: f64 = 0.95;

pub(crate) fn check_order(s: f64) -> Result<()> {
    if !(S_MIN..=S_MAX).contains(&s) || s.is_nan() {
        return Err(Error::OrderOutOfRange(s));
    }
    Ok(())
}

/// `c_{n,s} = s 4^s Γ((n+2s)/2) / (π^{n/2} Γ(1-s))`.
pub fn normalizing_constant(n: usize, s: f64) -> Result<f64> {
    if !(1..=3).contains(&n) {
        return Err(Error::Dimension(n));
    }
    check_order(s)?;
    let nf = n as f64;
    Ok(s * 4f64.powf(s) * gamma((nf + 2.0 * s) / 2.0) / (PI.powf(nf / 2.0) * gamma(1.0 - s)))
}

/// Dimension, order and normalizing constant of the kernel `c |z|^{-n-2s}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FractionalKernelSpec {
    pub n: usize,
    pub s: f64,
    pub c_ns: f64,
}

impl FractionalKernelSpec {
    pub fn new(n: usize, s: f64) -> Result<Self> {
        Ok(Self {
            n,
            s,
            c_ns: normalizing_constant(n, s)?,
        })
    }

    /// `|S^{n-1}|`, with the convention `|S^0| = 2`.
    pub fn sphere_area(&self) -> f64 {
        match self.n {
            1 => 2.0,
            2 => 2.0 * PI,
            _ => 4.0 * PI,
        }
    }

    /// `c ∫_{|z|>ρ} |z|^{-n-2s} dz = c |S^{n-1}| ρ^{-2s} / (2s)`.
    pub fn tail(&self, rho: f64) -> f64 {
        self.c_ns * self.sphere_area() * rho.powf(-2.0 * self.s) / (2.0 * self.s)
    }
}

/// Product-integration weights of the piecewise-linear interpolant against
/// `z^{-1-2s}` on `[1, count]`, for lattice offsets `k = 1..=count`.
/// Entry `k-1` is the weight of node `k`; the hat at `count` keeps only its
/// rising half.
pub(crate) fn line_hat_weights(s: f64, count: usize) -> Vec<f64> {
    let rule = GaussRule::new(16);
    let e = -1.0 - 2.0 * s;
    // rising[m] = ∫_m^{m+1} (z-m) z^e dz, falling[m] = ∫_m^{m+1} (m+1-z) z^e dz
    let rising = |m: usize| {
        let mf = m as f64;
        rule.integrate(mf, mf + 1.0, |z| (z - mf) * z.powf(e))
    };
    let falling = |m: usize| {
        let mf = m as f64;
        rule.integrate(mf, mf + 1.0, |z| (mf + 1.0 - z) * z.powf(e))
    };
    (1..=count)
        .map(|k| {
            let up = if k >= 2 { rising(k - 1) } else { 0.0 };
            let down = if k < count { falling(k) } else { 0.0 };
            up + down
        })
        .collect()
}

/// Pointwise 1D stencil `T_m` (`m = 0..=cover`) of `(-Δ)^s` on a lattice of
/// spacing `h`: `(A u)_i = Σ_j T_{|i-j|} u_j` for zero-extended `u`.
///
/// The cell `|z| < h` uses the second-order Taylor expansion
/// `2u(x) - u(x+z) - u(x-z) ≈ -u''(x) z²` with the three-point `u''`;
/// `h ≤ |z| ≤ cover·h` uses product integration of the piecewise-linear
/// interpolant; `|z| > cover·h` is the exact exterior tail.
pub(crate) fn line_stencil(s: f64, h: f64, cover: usize) -> Result<Vec<f64>> {
    let spec = FractionalKernelSpec::new(1, s)?;
    let c = spec.c_ns;
    let scale = h.powf(-2.0 * s);
    let near = 1.0 / (2.0 - 2.0 * s);
    let w = line_hat_weights(s, cover);
    let lattice_mass: f64 = w.iter().sum();
    let mut t = Vec::with_capacity(cover + 1);
    let diag = c * scale * 2.0 * (near + lattice_mass) + spec.tail(cover as f64 * h);
    t.push(diag);
    t.push(-c * scale * (near + w[0]));
    for wk in &w[1..] {
        t.push(-c * scale * wk);
    }
    Ok(t)
}

/// `∫_{[-1/2,1/2]^2} |z|^{-2s} dz`.
pub(crate) fn square_self_integral(s: f64) -> f64 {
    let rule = GaussRule::new(24);
    let p = 2.0 - 2.0 * s;
    8.0 / p * rule.integrate(0.0, PI / 4.0, |t| (2.0 * t.cos()).powf(-p))
}

/// `∫_{|z|_∞ > b} |z|^{-2-2s} dz / b^{-2s}` (exterior of a square).
pub(crate) fn square_exterior_integral(s: f64) -> f64 {
    let rule = GaussRule::new(24);
    8.0 / (2.0 * s) * rule.integrate(0.0, PI / 4.0, |t| t.cos().powf(2.0 * s))
}

/// `∫_{cell} |z|^{-2-2s} dz` for the unit cell centred at integer offset `(p, q) ≠ 0`.
fn lattice_cell_weight(rule: &GaussRule, s: f64, p: usize, q: usize) -> f64 {
    let e = -1.0 - s; // |z|^{-2-2s} = (|z|^2)^{-1-s}
    let f = |x: f64, y: f64| (x * x + y * y).powf(e);
    let (px, qy) = (p as f64, q as f64);
    let sub = if p.max(q) <= 3 { 8 } else { 1 };
    let step = 1.0 / sub as f64;
    let mut acc = 0.0;
    for a in 0..sub {
        let x0 = px - 0.5 + a as f64 * step;
        for b in 0..sub {
            let y0 = qy - 0.5 + b as f64 * step;
            acc += rule.integrate(x0, x0 + step, |x| rule.integrate(y0, y0 + step, |y| f(x, y)));
        }
    }
    acc
}

/// 2D lattice stencil of `(-Δ)^s` with spacing `h` covering offsets
/// `|p|, |q| ≤ cover`.
#[derive(Debug, Clone)]
pub(crate) struct LatticeStencil {
    /// pointwise diagonal
    pub diag: f64,
    /// `table[p * (cover + 1) + q]` is the (positive) coupling magnitude at offset `(±p, ±q)`
    pub table: Vec<f64>,
    /// extra coupling magnitude for the four nearest neighbours (Taylor cell)
    pub neighbor: f64,
    pub cover: usize,
}

impl LatticeStencil {
    pub fn coupling(&self, p: usize, q: usize) -> f64 {
        let base = self.table[p * (self.cover + 1) + q];
        if p + q == 1 {
            base + self.neighbor
        } else {
            base
        }
    }
}

pub(crate) fn lattice_stencil(s: f64, h: f64, cover: usize) -> Result<LatticeStencil> {
    let spec = FractionalKernelSpec::new(2, s)?;
    let c = spec.c_ns;
    let scale = h.powf(-2.0 * s);
    let rule = GaussRule::new(4);
    let stride = cover + 1;
    let mut table = vec![0.0; stride * stride];
    let mut mass = 0.0;
    for p in 0..=cover {
        for q in 0..=p {
            if p == 0 && q == 0 {
                continue;
            }
            let w = c * scale * lattice_cell_weight(&rule, s, p, q);
            table[p * stride + q] = w;
            table[q * stride + p] = w;
        }
    }
    for p in 0..=cover {
        for q in 0..=cover {
            if p == 0 && q == 0 {
                continue;
            }
            let mult = match (p, q) {
                (0, _) | (_, 0) => 2.0,
                _ => 4.0,
            };
            mass += mult * table[p * stride + q];
        }
    }
    let self_cell = c * scale * square_self_integral(s);
    let b = cover as f64 + 0.5;
    let tail = c * scale * square_exterior_integral(s) * b.powf(-2.0 * s);
    Ok(LatticeStencil {
        diag: mass + tail + self_cell,
        table,
        neighbor: self_cell / 4.0,
        cover,
    })
}

/// Angular integral `∫_{S²} |x - ρω|^{-3-2s} dω` for `|x| = r`:
/// `2π / (r ρ (1+2s)) · (|r-ρ|^{-1-2s} - (r+ρ)^{-1-2s})`.
pub fn ring_kernel(r: f64, rho: f64, s: f64) -> f64 {
    let e = -1.0 - 2.0 * s;
    2.0 * PI / (r * rho * (1.0 + 2.0 * s)) * ((r - rho).abs().powf(e) - (r + rho).powf(e))
}
