use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::kernel::{check_order, lattice_stencil, line_stencil, FractionalKernelSpec, LatticeStencil};
use super::GridFunction;
use crate::error::{Error, Result};
use crate::geometry::{DomainKind, Grid};
use crate::linalg::{LinearOperator, Preconditioner, SparseSym};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorKind {
    Laplacian,
    Fractional { s: f64 },
    Mixed { a: f64, s: f64 },
}

#[derive(Debug, Clone)]
enum Stencil {
    /// pointwise Toeplitz entries `T_0..T_K` on the line
    Line(Vec<f64>),
    /// Toeplitz entries of the odd-extended line operator acting on `r u(r)`
    Radial(Vec<f64>),
    Lattice {
        stencil: LatticeStencil,
        /// per lattice column `p`: (first interior index, first `q`, count)
        columns: Vec<(usize, usize, usize)>,
    },
}

#[derive(Debug, Clone)]
struct Nonlocal {
    spec: FractionalKernelSpec,
    stencil: Stencil,
}

/// Discrete `-Δ`, `(-Δ)^s` or `-Δ + a(-Δ)^s` over the interior nodes.
///
/// The operator is stored through its symmetric form matrix `S` with
/// `uᵀ S v ≈ ∫ u L v`; the pointwise action is `(L u)_i = (S u)_i / w_i`
/// with the grid quadrature weights `w`.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    grid: Arc<Grid>,
    kind: OperatorKind,
    local: Option<SparseSym>,
    nonlocal: Option<Nonlocal>,
    coupling: f64,
}

pub fn assemble_laplacian(grid: &Arc<Grid>) -> DiscreteOperator {
    DiscreteOperator {
        grid: grid.clone(),
        kind: OperatorKind::Laplacian,
        local: Some(laplacian_form(grid)),
        nonlocal: None,
        coupling: 0.0,
    }
}

pub fn assemble_fractional(grid: &Arc<Grid>, s: f64) -> Result<DiscreteOperator> {
    check_order(s)?;
    Ok(DiscreteOperator {
        grid: grid.clone(),
        kind: OperatorKind::Fractional { s },
        local: None,
        nonlocal: Some(nonlocal_part(grid, s)?),
        coupling: 1.0,
    })
}

/// `-Δ + a(-Δ)^s`; `a = 0` yields exactly the Laplacian.
pub fn assemble_mixed(grid: &Arc<Grid>, a: f64, s: f64) -> Result<DiscreteOperator> {
    if a < 0.0 || a.is_nan() {
        return Err(Error::NegativeCoupling(a));
    }
    check_order(s)?;
    if a == 0.0 {
        return Ok(assemble_laplacian(grid));
    }
    Ok(DiscreteOperator {
        grid: grid.clone(),
        kind: OperatorKind::Mixed { a, s },
        local: Some(laplacian_form(grid)),
        nonlocal: Some(nonlocal_part(grid, s)?),
        coupling: a,
    })
}

fn laplacian_form(grid: &Grid) -> SparseSym {
    let n = grid.len();
    let h = grid.h();
    let rows = match grid.kind() {
        DomainKind::Interval => (0..n)
            .map(|i| {
                let mut row = Vec::with_capacity(3);
                if i > 0 {
                    row.push((i - 1, -1.0 / h));
                }
                row.push((i, 2.0 / h));
                if i + 1 < n {
                    row.push((i + 1, -1.0 / h));
                }
                row
            })
            .collect(),
        // -u'' - (2/r)u' = -(1/r)(r u)''; symmetric in the measure 4πr² dr
        DomainKind::Ball3dRadial => {
            let r = |i: usize| grid.coords()[i][0];
            (0..n)
                .map(|i| {
                    let mut row = Vec::with_capacity(3);
                    if i > 0 {
                        row.push((i - 1, -4.0 * PI * (r(i - 1) * r(i)) / h));
                    }
                    row.push((i, 8.0 * PI * r(i) * r(i) / h));
                    if i + 1 < n {
                        row.push((i + 1, -4.0 * PI * (r(i) * r(i + 1)) / h));
                    }
                    row
                })
                .collect()
        }
        // Five-point stencil; a link that leaves the disk ends on the circle at
        // distance θh and contributes 1/θ to the diagonal.
        DomainKind::Disk2d => {
            let rad = grid.radius();
            (0..n)
                .map(|idx| {
                    let [i, j] = grid.lattice()[idx];
                    let [x, y] = grid.coords()[idx];
                    let (i, j) = (i as isize, j as isize);
                    let mut diag = 0.0;
                    let mut row = Vec::with_capacity(5);
                    let dirs: [(isize, isize, f64); 4] = [
                        (-1, 0, (rad * rad - y * y).sqrt() + x),
                        (0, -1, (rad * rad - x * x).sqrt() + y),
                        (0, 1, (rad * rad - x * x).sqrt() - y),
                        (1, 0, (rad * rad - y * y).sqrt() - x),
                    ];
                    for (di, dj, reach) in dirs {
                        match grid.disk_index(i + di, j + dj) {
                            Some(k) => {
                                row.push((k, -1.0));
                                diag += 1.0;
                            }
                            None => {
                                let theta = (reach / grid.h()).clamp(1e-3, 1.0);
                                diag += 1.0 / theta;
                            }
                        }
                    }
                    row.push((idx, diag));
                    row.sort_by_key(|e| e.0);
                    row
                })
                .collect()
        }
    };
    SparseSym::from_rows(rows)
}

fn nonlocal_part(grid: &Grid, s: f64) -> Result<Nonlocal> {
    let h = grid.h();
    let n = grid.n();
    let (spec, stencil) = match grid.kind() {
        DomainKind::Interval => (FractionalKernelSpec::new(1, s)?, Stencil::Line(line_stencil(s, h, n)?)),
        DomainKind::Ball3dRadial => (
            FractionalKernelSpec::new(3, s)?,
            Stencil::Radial(line_stencil(s, h, 2 * n)?),
        ),
        DomainKind::Disk2d => {
            let stencil = lattice_stencil(s, h, n)?;
            let mut columns = Vec::new();
            let lat = grid.lattice();
            let mut idx = 0;
            while idx < lat.len() {
                let p = lat[idx][0];
                let start = idx;
                while idx < lat.len() && lat[idx][0] == p {
                    idx += 1;
                }
                columns.push((start, lat[start][1], idx - start));
            }
            (FractionalKernelSpec::new(2, s)?, Stencil::Lattice { stencil, columns })
        }
    };
    Ok(Nonlocal { spec, stencil })
}

impl Nonlocal {
    fn form_entry(&self, grid: &Grid, i: usize, j: usize) -> f64 {
        match &self.stencil {
            Stencil::Line(t) => grid.h() * t[i.abs_diff(j)],
            Stencil::Radial(t) => {
                let (ri, rj) = (grid.coords()[i][0], grid.coords()[j][0]);
                4.0 * PI * grid.h() * (ri * rj) * (t[i.abs_diff(j)] - t[i + j + 2])
            }
            Stencil::Lattice { stencil, .. } => {
                let h2 = grid.h() * grid.h();
                if i == j {
                    return h2 * stencil.diag;
                }
                let [pi, qi] = grid.lattice()[i];
                let [pj, qj] = grid.lattice()[j];
                -h2 * stencil.coupling(pi.abs_diff(pj), qi.abs_diff(qj))
            }
        }
    }

    fn form_row(&self, grid: &Grid, i: usize, x: &[f64]) -> f64 {
        match &self.stencil {
            Stencil::Line(t) => {
                let mut acc = 0.0;
                for (j, xj) in x.iter().enumerate() {
                    acc += t[i.abs_diff(j)] * xj;
                }
                grid.h() * acc
            }
            Stencil::Radial(t) => {
                let coords = grid.coords();
                let mut acc = 0.0;
                for (j, xj) in x.iter().enumerate() {
                    acc += (t[i.abs_diff(j)] - t[i + j + 2]) * coords[j][0] * xj;
                }
                4.0 * PI * grid.h() * coords[i][0] * acc
            }
            Stencil::Lattice { stencil, columns } => {
                let [pi, qi] = grid.lattice()[i];
                let stride = stencil.cover + 1;
                let mut acc = 0.0;
                for &(start, q0, len) in columns {
                    let p = columns_p(grid, start);
                    let trow = &stencil.table[pi.abs_diff(p) * stride..(pi.abs_diff(p) + 1) * stride];
                    let xs = &x[start..start + len];
                    for (k, xv) in xs.iter().enumerate() {
                        acc += trow[qi.abs_diff(q0 + k)] * xv;
                    }
                }
                // the loop above included the self term with table[0] = 0
                let mut near = 0.0;
                let (pi_, qi_) = (pi as isize, qi as isize);
                for (di, dj) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                    if let Some(k) = grid.disk_index(pi_ + di, qi_ + dj) {
                        near += x[k];
                    }
                }
                grid.h() * grid.h() * (stencil.diag * x[i] - acc - stencil.neighbor * near)
            }
        }
    }

    fn band(&self, grid: &Grid) -> (Vec<f64>, Vec<f64>) {
        let n = grid.len();
        let diag = (0..n).map(|i| self.form_entry(grid, i, i)).collect();
        let off = match self.stencil {
            Stencil::Lattice { .. } => vec![0.0; n.saturating_sub(1)],
            _ => (0..n.saturating_sub(1))
                .map(|i| self.form_entry(grid, i, i + 1))
                .collect(),
        };
        (diag, off)
    }
}

fn columns_p(grid: &Grid, start: usize) -> usize {
    grid.lattice()[start][0]
}

impl DiscreteOperator {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    /// Fractional order, if the operator has a nonlocal part.
    pub fn order(&self) -> Option<f64> {
        self.nonlocal.as_ref().map(|n| n.spec.s)
    }

    pub fn kernel_spec(&self) -> Option<FractionalKernelSpec> {
        self.nonlocal.as_ref().map(|n| n.spec)
    }

    /// Coefficient multiplying the nonlocal part (0 for the Laplacian).
    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    /// The nonlocal part alone, with unit coefficient.
    pub fn fractional_part(&self) -> Option<DiscreteOperator> {
        let nl = self.nonlocal.clone()?;
        Some(DiscreteOperator {
            grid: self.grid.clone(),
            kind: OperatorKind::Fractional { s: nl.spec.s },
            local: None,
            nonlocal: Some(nl),
            coupling: 1.0,
        })
    }

    /// The local part alone.
    pub fn laplacian_part(&self) -> Option<DiscreteOperator> {
        let local = self.local.clone()?;
        Some(DiscreteOperator {
            grid: self.grid.clone(),
            kind: OperatorKind::Laplacian,
            local: Some(local),
            nonlocal: None,
            coupling: 0.0,
        })
    }

    /// Entry `(i, j)` of the symmetric form matrix.
    pub fn form_entry(&self, i: usize, j: usize) -> f64 {
        let mut v = 0.0;
        if let Some(l) = &self.local {
            v += l.entry(i, j);
        }
        if let Some(nl) = &self.nonlocal {
            v += self.coupling * nl.form_entry(&self.grid, i, j);
        }
        v
    }

    /// Entry `(i, j)` of the pointwise matrix `W⁻¹ S`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.form_entry(i, j) / self.grid.weights()[i]
    }

    pub fn to_dense_form(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| self.form_entry(i, j)).collect())
            .collect()
    }

    /// Pointwise action `(L u)_i`.
    pub fn apply_values(&self, u: &[f64]) -> Vec<f64> {
        let mut y = LinearOperator::apply(self, u);
        for (yi, w) in y.iter_mut().zip(self.grid.weights()) {
            *yi /= w;
        }
        y
    }

    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction> {
        u.ensure_same_grid(&self.grid)?;
        GridFunction::new(self.grid.clone(), self.apply_values(u.values()))
    }

    /// `uᵀ S v`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        crate::numerics::dot(u, &LinearOperator::apply(self, v))
    }

    /// Preconditioner from the tridiagonal band (1D, radial) or diagonal (disk).
    pub fn preconditioner(&self) -> Preconditioner {
        let n = self.dim();
        let mut diag = vec![0.0; n];
        let mut off = vec![0.0; n.saturating_sub(1)];
        if let Some(l) = &self.local {
            for i in 0..n {
                diag[i] += l.entry(i, i);
                if i + 1 < n && self.grid.kind() != DomainKind::Disk2d {
                    off[i] += l.entry(i, i + 1);
                }
            }
        }
        if let Some(nl) = &self.nonlocal {
            let (d, o) = nl.band(&self.grid);
            for i in 0..n {
                diag[i] += self.coupling * d[i];
            }
            for i in 0..off.len() {
                off[i] += self.coupling * o[i];
            }
        }
        if self.grid.kind() == DomainKind::Disk2d {
            Preconditioner::Jacobi(diag)
        } else {
            Preconditioner::Tridiagonal { diag, off }
        }
    }

    /// Largest pointwise diagonal entry; sets the round-off scale of `L u`.
    pub fn max_pointwise_diagonal(&self) -> f64 {
        (0..self.dim()).map(|i| self.entry(i, i)).fold(0.0, f64::max)
    }

    /// Pointwise 1D stencil `(offset, weight)` of the nonlocal part (interval only).
    pub fn stencil_weights(&self) -> Option<Vec<(usize, f64)>> {
        match &self.nonlocal.as_ref()?.stencil {
            Stencil::Line(t) => Some(t.iter().copied().enumerate().collect()),
            _ => None,
        }
    }
}

impl LinearOperator for DiscreteOperator {
    fn dim(&self) -> usize {
        self.grid.len()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let grid = &self.grid;
        let a = self.coupling;
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let mut v = 0.0;
            if let Some(l) = &self.local {
                for (c, w) in l.row(i) {
                    v += w * x[c];
                }
            }
            if let Some(nl) = &self.nonlocal {
                v += a * nl.form_row(grid, i, x);
            }
            *yi = v;
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, Domain};

    fn grid(d: Domain, n: usize) -> Arc<Grid> {
        Arc::new(build_grid(d, n).unwrap())
    }

    #[test]
    fn form_is_exactly_symmetric() {
        for g in [
            grid(Domain::interval(1.0).unwrap(), 16),
            grid(Domain::disk(1.0).unwrap(), 12),
            grid(Domain::ball(1.0).unwrap(), 16),
        ] {
            let op = assemble_mixed(&g, 0.7, 0.4).unwrap();
            let m = op.to_dense_form();
            for i in 0..m.len() {
                for j in 0..m.len() {
                    assert_eq!(m[i][j], m[j][i], "{:?} ({i},{j})", g.kind());
                }
            }
        }
    }

    #[test]
    fn fractional_part_is_an_m_matrix() {
        for g in [
            grid(Domain::interval(1.0).unwrap(), 32),
            grid(Domain::disk(1.0).unwrap(), 12),
            grid(Domain::ball(1.0).unwrap(), 32),
        ] {
            let op = assemble_fractional(&g, 0.6).unwrap();
            let m = op.to_dense_form();
            for i in 0..m.len() {
                assert!(m[i][i] > 0.0);
                let offsum: f64 = (0..m.len()).filter(|&j| j != i).map(|j| m[i][j]).sum();
                assert!(m[i][i] + offsum > 0.0, "row {i} not diagonally dominant");
                for j in 0..m.len() {
                    if i != j {
                        assert!(m[i][j] <= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn mixed_with_zero_coupling_is_laplacian() {
        let g = grid(Domain::interval(1.0).unwrap(), 64);
        let lap = assemble_laplacian(&g);
        let mixed = assemble_mixed(&g, 0.0, 0.5).unwrap();
        assert_eq!(mixed.kind(), OperatorKind::Laplacian);
        let u: Vec<f64> = g.coords().iter().map(|c| (1.0 - c[0] * c[0]).powi(2)).collect();
        assert_eq!(lap.apply_values(&u), mixed.apply_values(&u));
        assert!(assemble_mixed(&g, -1.0, 0.5).is_err());
        assert!(assemble_fractional(&g, 0.99).is_err());
    }

    #[test]
    fn mixed_is_sum_of_parts() {
        let g = grid(Domain::interval(1.0).unwrap(), 128);
        let u: Vec<f64> = g.coords().iter().map(|c| 0.5 * (1.0 - c[0] * c[0])).collect();
        let lap = assemble_laplacian(&g).apply_values(&u);
        let frac = assemble_fractional(&g, 0.5).unwrap().apply_values(&u);
        let mixed = assemble_mixed(&g, 1.0, 0.5).unwrap().apply_values(&u);
        for i in 0..u.len() {
            let scale = lap[i].abs() + frac[i].abs();
            assert!((mixed[i] - lap[i] - frac[i]).abs() <= 1e-13 * scale);
        }
    }

    #[test]
    fn disk_lattice_apply_matches_entries() {
        let g = grid(Domain::disk(1.0).unwrap(), 14);
        let op = assemble_mixed(&g, 1.3, 0.35).unwrap();
        let x: Vec<f64> = (0..g.len()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let y = LinearOperator::apply(&op, &x);
        let dense = op.to_dense_form();
        for i in 0..g.len() {
            let want: f64 = dense[i].iter().zip(&x).map(|(a, b)| a * b).sum();
            assert!((y[i] - want).abs() < 1e-10 * want.abs().max(1.0));
        }
    }
}
