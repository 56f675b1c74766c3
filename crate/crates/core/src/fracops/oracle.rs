use std::f64::consts::PI;

use super::kernel::FractionalKernelSpec;
use crate::error::{Error, Result};
use crate::geometry::{Domain, DomainKind};
use crate::numerics::integrate_adaptive;

/// Smallest absolute tolerance the oracle accepts.
pub const ORACLE_TOL_FLOOR: f64 = 1e-10;

/// Independent evaluation of `(-Δ)^s u(x)` by adaptive quadrature of the
/// principal-value integral, for a closed-form `u` vanishing outside Ω.
///
/// `u` receives Cartesian coordinates in the domain dimension, except on the
/// radial ball where it receives `[|y|]`; `x` follows the same convention.
/// Values of `u` outside Ω are ignored (treated as zero).
///
/// The integral is split into a Taylor ball `|z| < z0` (second-order
/// expansion with a finite-difference Laplacian), shells `z0 < |z| < R + |x|`
/// integrated adaptively with the inner spherical average broken at the
/// boundary crossings, and the exact exterior tail.
pub fn pointwise_oracle(domain: &Domain, u: &dyn Fn(&[f64]) -> f64, x: &[f64], s: f64, tol: f64) -> Result<f64> {
    if !(tol >= ORACLE_TOL_FLOOR) {
        return Err(Error::InvalidParameter(format!(
            "oracle tolerance {tol:e} below the quadrature floor {ORACLE_TOL_FLOOR:e}"
        )));
    }
    let n = domain.dimension();
    let spec = FractionalKernelSpec::new(n, s)?;
    let radius = domain.radius;
    let expect = if domain.kind == DomainKind::Ball3dRadial { 1 } else { n };
    if x.len() != expect {
        return Err(Error::InvalidParameter(format!(
            "oracle point has {} coordinates, expected {expect}",
            x.len()
        )));
    }
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r >= radius {
        return Err(Error::InvalidParameter(
            "oracle point must lie inside the domain".into(),
        ));
    }
    let dist = radius - r;
    let c = spec.c_ns;
    let area = spec.sphere_area();
    let e = -1.0 - 2.0 * s;

    let field = |p: &[f64]| -> f64 {
        let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm >= radius {
            0.0
        } else {
            u(p)
        }
    };
    // u as a function of a 3-vector for the radial ball
    let radial = |y: [f64; 3]| -> f64 {
        let rr = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
        field(&[rr])
    };
    let ux = field(x);

    let z0 = (1e-3 * radius).min(0.25 * dist);
    let lap = fd_laplacian(domain.kind, &field, &radial, x, r, (2e-3 * radius).min(0.25 * dist));
    let near = -lap / (2.0 * n as f64) * area * z0.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s);

    let inner_tol = 1e-3 * tol;
    let failed = std::cell::Cell::new(false);
    // G(ρ) = ∫_{S^{n-1}} (u(x) - u(x + ρω)) dω
    let shell = |rho: f64| -> f64 {
        match domain.kind {
            DomainKind::Interval => 2.0 * ux - field(&[x[0] + rho]) - field(&[x[0] - rho]),
            DomainKind::Disk2d => {
                let g = |t: f64| ux - field(&[x[0] + rho * t.cos(), x[1] + rho * t.sin()]);
                let mut cuts = vec![0.0, 2.0 * PI];
                if r > 0.0 {
                    let cosv = (radius * radius - r * r - rho * rho) / (2.0 * r * rho);
                    if cosv.abs() < 1.0 {
                        let base = x[1].atan2(x[0]);
                        let off = cosv.acos();
                        for a in [base + off, base - off] {
                            cuts.push(a.rem_euclid(2.0 * PI));
                        }
                    }
                }
                sum_pieces(&g, &mut cuts, inner_tol, &failed)
            }
            DomainKind::Ball3dRadial => {
                let g = |mu: f64| ux - radial([r + rho * mu, rho * (1.0 - mu * mu).max(0.0).sqrt(), 0.0]);
                let mut cuts = vec![-1.0, 1.0];
                if r > 0.0 {
                    let mu = (radius * radius - r * r - rho * rho) / (2.0 * r * rho);
                    if mu.abs() < 1.0 {
                        cuts.push(mu);
                    }
                }
                2.0 * PI * sum_pieces(&g, &mut cuts, inner_tol, &failed)
            }
        }
    };
    let far = radius + r;
    let mut cuts = vec![z0, far];
    if dist > z0 {
        cuts.push(dist);
    }
    let outer = sum_pieces(&|rho: f64| shell(rho) * rho.powf(e), &mut cuts, 0.5 * tol / c, &failed);
    let tail = ux * area * far.powf(-2.0 * s) / (2.0 * s);
    if failed.get() {
        return Err(Error::NoConvergence {
            what: "oracle quadrature",
            iterations: 4000,
            residual: tol,
        });
    }
    Ok(c * (near + outer + tail))
}

fn sum_pieces(f: &dyn Fn(f64) -> f64, cuts: &mut [f64], tol: f64, failed: &std::cell::Cell<bool>) -> f64 {
    cuts.sort_by(f64::total_cmp);
    let pieces = cuts.len() - 1;
    let mut total = 0.0;
    for w in cuts.windows(2) {
        if w[1] > w[0] {
            let q = integrate_adaptive(f, w[0], w[1], tol / pieces as f64);
            if !q.converged {
                failed.set(true);
            }
            total += q.value;
        }
    }
    total
}

/// Fourth-order finite-difference Laplacian at `x` (Richardson on two steps).
fn fd_laplacian(
    kind: DomainKind,
    field: &dyn Fn(&[f64]) -> f64,
    radial: &dyn Fn([f64; 3]) -> f64,
    x: &[f64],
    r: f64,
    eta: f64,
) -> f64 {
    let lap = |h: f64| -> f64 {
        match kind {
            DomainKind::Interval => (field(&[x[0] + h]) + field(&[x[0] - h]) - 2.0 * field(x)) / (h * h),
            DomainKind::Disk2d => {
                let mut acc = -4.0 * field(x);
                for (dx, dy) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)] {
                    acc += field(&[x[0] + dx, x[1] + dy]);
                }
                acc / (h * h)
            }
            DomainKind::Ball3dRadial => {
                let mut acc = -6.0 * radial([r, 0.0, 0.0]);
                for d in [
                    [h, 0.0, 0.0],
                    [-h, 0.0, 0.0],
                    [0.0, h, 0.0],
                    [0.0, -h, 0.0],
                    [0.0, 0.0, h],
                    [0.0, 0.0, -h],
                ] {
                    acc += radial([r + d[0], d[1], d[2]]);
                }
                acc / (h * h)
            }
        }
    };
    (4.0 * lap(0.5 * eta) - lap(eta)) / 3.0
}
