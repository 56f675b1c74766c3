//! Sparse symmetric storage, preconditioners and Krylov solvers (CG, MINRES).
//!
//! All reductions go through [`crate::numerics`] so iteration histories are
//! bit-reproducible for fixed inputs.

use rayon::prelude::*;

use crate::numerics::{axpy, dot};

/// Symmetric linear map `y = A x`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply_into(&self, x: &[f64], y: &mut [f64]);

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply_into(x, &mut y);
        y
    }
}

/// Compressed sparse rows with both triangles stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSym {
    /// Builds from per-row `(col, value)` lists; rows must be sorted by column.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let dim = rows.len();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.entry(i, i)).collect()
    }
}

impl LinearOperator for SparseSym {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let mut acc = 0.0;
            for (c, v) in self.row(i) {
                acc += v * x[c];
            }
            *yi = acc;
        });
    }
}

/// Symmetric positive definite preconditioners `M ≈ A`; `solve` returns `M⁻¹ r`.
#[derive(Debug, Clone, PartialEq)]
pub enum Preconditioner {
    Identity,
    Jacobi(Vec<f64>),
    /// Symmetric tridiagonal with `diag[i]` and `off[i]` coupling `i` and `i+1`.
    Tridiagonal {
        diag: Vec<f64>,
        off: Vec<f64>,
    },
    /// Block diagonal with equal block sizes.
    Blocks {
        size: usize,
        blocks: Vec<Preconditioner>,
    },
}

impl Preconditioner {
    pub fn solve(&self, r: &[f64]) -> Vec<f64> {
        match self {
            Preconditioner::Identity => r.to_vec(),
            Preconditioner::Jacobi(d) => r.iter().zip(d).map(|(a, b)| a / b).collect(),
            Preconditioner::Tridiagonal { diag, off } => thomas(diag, off, r),
            Preconditioner::Blocks { size, blocks } => {
                let mut out = Vec::with_capacity(r.len());
                for (b, chunk) in blocks.iter().zip(r.chunks(*size)) {
                    out.extend(b.solve(chunk));
                }
                out
            }
        }
    }
}

/// Thomas algorithm for a symmetric tridiagonal system.
pub fn thomas(diag: &[f64], off: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    if n == 0 {
        return Vec::new();
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    c[0] = if n > 1 { off[0] / denom } else { 0.0 };
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - off[i - 1] * c[i - 1];
        if i + 1 < n {
            c[i] = off[i] / denom;
        }
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / denom;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovStats {
    pub iterations: usize,
    /// final `‖b - A x‖₂ / ‖b‖₂`
    pub relative_residual: f64,
    pub converged: bool,
}

/// Preconditioned conjugate gradients from `x = 0`.
pub fn pcg(
    op: &dyn LinearOperator,
    b: &[f64],
    pre: &Preconditioner,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, KrylovStats) {
    let n = op.dim();
    let mut x = vec![0.0; n];
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return (
            x,
            KrylovStats {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
            },
        );
    }
    let mut r = b.to_vec();
    let mut z = pre.solve(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = 1.0;
    for it in 1..=max_iter {
        op.apply_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return (
                x,
                KrylovStats {
                    iterations: it,
                    relative_residual: rel,
                    converged: false,
                },
            );
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= tol {
            return (
                x,
                KrylovStats {
                    iterations: it,
                    relative_residual: rel,
                    converged: true,
                },
            );
        }
        z = pre.solve(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    (
        x,
        KrylovStats {
            iterations: max_iter,
            relative_residual: rel,
            converged: false,
        },
    )
}

/// Preconditioned MINRES (Paige–Saunders) for symmetric, possibly
/// indefinite systems, from `x = 0`. `pre` must be positive definite.
pub fn minres(
    op: &dyn LinearOperator,
    b: &[f64],
    pre: &Preconditioner,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, KrylovStats) {
    let n = op.dim();
    let mut x = vec![0.0; n];
    let bnorm = dot(b, b).sqrt();
    let done = |x: Vec<f64>, it: usize, rel: f64, ok: bool| {
        (
            x,
            KrylovStats {
                iterations: it,
                relative_residual: rel,
                converged: ok,
            },
        )
    };
    if bnorm == 0.0 {
        return done(x, 0, 0.0, true);
    }
    let mut r1 = b.to_vec();
    let mut y = pre.solve(&r1);
    let beta1 = dot(&r1, &y).sqrt();
    let mut r2 = r1.clone();
    let mut oldb = 0.0;
    let mut beta = beta1;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta1;
    let mut cs = -1.0;
    let mut sn = 0.0;
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut av = vec![0.0; n];
    for it in 1..=max_iter {
        let sc = 1.0 / beta;
        for (vi, yi) in v.iter_mut().zip(&y) {
            *vi = sc * yi;
        }
        op.apply_into(&v, &mut av);
        let mut yv = av.clone();
        if it >= 2 {
            axpy(-beta / oldb, &r1, &mut yv);
        }
        let alfa = dot(&v, &yv);
        axpy(-alfa / beta, &r2, &mut yv);
        r1 = std::mem::replace(&mut r2, yv);
        y = pre.solve(&r2);
        oldb = beta;
        beta = dot(&r2, &y).max(0.0).sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        let denom = 1.0 / gamma;
        let w1 = std::mem::replace(&mut w2, w.clone());
        for i in 0..n {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) * denom;
        }
        axpy(phi, &w, &mut x);
        if phibar / beta1 <= tol || beta == 0.0 {
            let r = op.apply(&x);
            let res: Vec<f64> = b.iter().zip(&r).map(|(bi, ri)| bi - ri).collect();
            let rel = dot(&res, &res).sqrt() / bnorm;
            return done(x, it, rel, true);
        }
    }
    let r = op.apply(&x);
    let res: Vec<f64> = b.iter().zip(&r).map(|(bi, ri)| bi - ri).collect();
    let rel = dot(&res, &res).sqrt() / bnorm;
    done(x, max_iter, rel, rel <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize, shift: f64) -> SparseSym {
        let rows = (0..n)
            .map(|i| {
                let mut r = Vec::new();
                if i > 0 {
                    r.push((i - 1, -1.0));
                }
                r.push((i, 2.0 - shift));
                if i + 1 < n {
                    r.push((i + 1, -1.0));
                }
                r
            })
            .collect();
        SparseSym::from_rows(rows)
    }

    #[test]
    fn thomas_solves_tridiagonal() {
        let a = laplacian_1d(50, 0.0);
        let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.apply(&xs);
        let x = thomas(&a.diagonal(), &vec![-1.0; 49], &b);
        for (u, v) in x.iter().zip(&xs) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn cg_and_minres_agree_on_spd_system() {
        let a = laplacian_1d(200, 0.0);
        let b: Vec<f64> = (0..200).map(|i| 1.0 + (i % 7) as f64).collect();
        let (x1, s1) = pcg(&a, &b, &Preconditioner::Identity, 1e-12, 2000);
        let (x2, s2) = minres(&a, &b, &Preconditioner::Jacobi(a.diagonal()), 1e-12, 2000);
        assert!(s1.converged && s2.converged);
        for (u, v) in x1.iter().zip(&x2) {
            assert!((u - v).abs() < 1e-6 * u.abs().max(1.0));
        }
    }

    #[test]
    fn minres_handles_indefinite_system() {
        // shifted past the smallest eigenvalue of the 1D Laplacian
        let a = laplacian_1d(100, 0.05);
        let xs: Vec<f64> = (0..100).map(|i| ((i * 13 % 17) as f64) - 8.0).collect();
        let b = a.apply(&xs);
        let pre = Preconditioner::Tridiagonal {
            diag: vec![2.0; 100],
            off: vec![-1.0; 99],
        };
        let (x, st) = minres(&a, &b, &pre, 1e-12, 5000);
        assert!(st.converged, "{st:?}");
        for (u, v) in x.iter().zip(&xs) {
            assert!((u - v).abs() < 1e-7);
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = laplacian_1d(10, 0.0);
        let (x, st) = pcg(&a, &[0.0; 10], &Preconditioner::Identity, 1e-10, 10);
        assert_eq!(st.iterations, 0);
        assert!(x.iter().all(|&v| v == 0.0));
    }
}
