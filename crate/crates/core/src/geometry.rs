//! Model domains (balls about the origin), uniform grids with implicit
//! zero extension, and boundary quadrature.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Interval,
    Disk2d,
    Ball3dRadial,
}

impl DomainKind {
    pub fn dimension(self) -> usize {
        match self {
            DomainKind::Interval => 1,
            DomainKind::Disk2d => 2,
            DomainKind::Ball3dRadial => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DomainKind::Interval => "interval",
            DomainKind::Disk2d => "disk2d",
            DomainKind::Ball3dRadial => "ball3d_radial",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "interval" => Ok(DomainKind::Interval),
            "disk2d" => Ok(DomainKind::Disk2d),
            "ball3d_radial" => Ok(DomainKind::Ball3dRadial),
            other => Err(Error::Unsupported(format!(
                "unsupported domain kind '{other}' (expected interval, disk2d or ball3d_radial)"
            ))),
        }
    }

    fn max_n(self) -> usize {
        match self {
            DomainKind::Interval => 65_536,
            DomainKind::Disk2d => 512,
            DomainKind::Ball3dRadial => 16_384,
        }
    }
}

/// A ball of radius `radius` centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub kind: DomainKind,
    pub radius: f64,
}

impl Domain {
    pub fn new(kind: DomainKind, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Radius(radius));
        }
        Ok(Self { kind, radius })
    }

    pub fn interval(radius: f64) -> Result<Self> {
        Self::new(DomainKind::Interval, radius)
    }

    pub fn disk(radius: f64) -> Result<Self> {
        Self::new(DomainKind::Disk2d, radius)
    }

    pub fn ball(radius: f64) -> Result<Self> {
        Self::new(DomainKind::Ball3dRadial, radius)
    }

    pub fn dimension(&self) -> usize {
        self.kind.dimension()
    }

    /// Surface measure of the boundary sphere.
    pub fn boundary_measure(&self) -> f64 {
        let r = self.radius;
        match self.kind {
            DomainKind::Interval => 2.0,
            DomainKind::Disk2d => 2.0 * PI * r,
            DomainKind::Ball3dRadial => 4.0 * PI * r * r,
        }
    }
}

/// Uniform grid over a model domain. Only nodes strictly inside the domain
/// carry unknowns; every function on the grid vanishes outside.
///
/// Node layout:
/// * interval: `x_k = -R + k h`, `k = 1..N-1`, `h = 2R/N`;
/// * disk: the `(N+1)×(N+1)` lattice on `[-R, R]²` with `h = 2R/N`, keeping
///   nodes with `|x| < R`, ordered lexicographically by `(i, j)`;
/// * radial ball: `r_k = k h`, `k = 1..N-1`, `h = R/N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    domain: Domain,
    n: usize,
    h: f64,
    coords: Vec<[f64; 2]>,
    lattice: Vec<[usize; 2]>,
    dist: Vec<f64>,
    weights: Vec<f64>,
    #[serde(skip)]
    lookup: Vec<u32>,
}

const NO_NODE: u32 = u32::MAX;

pub fn build_grid(domain: Domain, n: usize) -> Result<Grid> {
    Grid::new(domain, n)
}

impl Grid {
    pub fn new(domain: Domain, n: usize) -> Result<Self> {
        let max = domain.kind.max_n();
        if !(8..=max).contains(&n) {
            return Err(Error::GridSize {
                kind: domain.kind.name(),
                n,
                min: 8,
                max,
            });
        }
        let r = domain.radius;
        let nf = n as f64;
        let mut coords = Vec::new();
        let mut lattice = Vec::new();
        let mut dist = Vec::new();
        let mut weights = Vec::new();
        let mut lookup = Vec::new();
        let h;
        match domain.kind {
            DomainKind::Interval => {
                h = 2.0 * r / nf;
                for k in 1..n {
                    let x = r * (2.0 * k as f64 - nf) / nf;
                    coords.push([x, 0.0]);
                    lattice.push([k, 0]);
                    dist.push(r - x.abs());
                    weights.push(h);
                }
            }
            DomainKind::Disk2d => {
                h = 2.0 * r / nf;
                lookup = vec![NO_NODE; (n + 1) * (n + 1)];
                let n2 = (n * n) as i64;
                for i in 0..=n {
                    let ii = 2 * i as i64 - n as i64;
                    for j in 0..=n {
                        let jj = 2 * j as i64 - n as i64;
                        // exact integer test of |x| < R on the lattice
                        if ii * ii + jj * jj < n2 {
                            let x = r * ii as f64 / nf;
                            let y = r * jj as f64 / nf;
                            lookup[i * (n + 1) + j] = coords.len() as u32;
                            coords.push([x, y]);
                            lattice.push([i, j]);
                            dist.push(r - x.hypot(y));
                            weights.push(h * h);
                        }
                    }
                }
            }
            DomainKind::Ball3dRadial => {
                h = r / nf;
                for k in 1..n {
                    let rk = r * k as f64 / nf;
                    coords.push([rk, 0.0]);
                    lattice.push([k, 0]);
                    dist.push(r - rk);
                    weights.push(4.0 * PI * rk * rk * h);
                }
            }
        }
        Ok(Self {
            domain,
            n,
            h,
            coords,
            lattice,
            dist,
            weights,
            lookup,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn kind(&self) -> DomainKind {
        self.domain.kind
    }

    pub fn radius(&self) -> f64 {
        self.domain.radius
    }

    pub fn dimension(&self) -> usize {
        self.domain.dimension()
    }

    /// Nodes per axis parameter `N`.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Number of interior nodes (unknowns).
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Node coordinates; the second entry is 0 in 1D and for the radial ball
    /// (where the first entry is the radius).
    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn lattice(&self) -> &[[usize; 2]] {
        &self.lattice
    }

    pub fn dist(&self) -> &[f64] {
        &self.dist
    }

    /// Quadrature weights: `∫_Ω g ≈ Σ w_i g(x_i)`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Quadrature weights that reach the boundary: each node carries the
    /// measure of its cell inside Ω, and the parts of Ω not covered by
    /// interior cells go to the nearest interior node. Second order for
    /// integrands that are smooth up to ∂Ω but do not vanish there.
    pub fn fitted_weights(&self) -> Vec<f64> {
        let h = self.h;
        let r = self.domain.radius;
        let mut w = self.weights.clone();
        match self.domain.kind {
            DomainKind::Interval => {
                let last = w.len() - 1;
                w[0] += 0.5 * h;
                w[last] += 0.5 * h;
            }
            DomainKind::Ball3dRadial => {
                let shell = |a: f64, b: f64| 4.0 * PI * (b.powi(3) - a.powi(3)) / 3.0;
                for (wk, c) in w.iter_mut().zip(&self.coords) {
                    *wk = shell(c[0] - 0.5 * h, c[0] + 0.5 * h);
                }
                let last = w.len() - 1;
                w[0] += shell(0.0, 0.5 * h);
                w[last] += shell(r - 0.5 * h, r);
            }
            DomainKind::Disk2d => {
                let n = self.n as isize;
                for i in 0..=n {
                    for j in 0..=n {
                        let cx = -r + i as f64 * h;
                        let cy = -r + j as f64 * h;
                        let area = cell_disk_area(cx, cy, h, r);
                        match self.disk_index(i, j) {
                            Some(k) => w[k] += area - h * h,
                            None if area > 0.0 => {
                                let mut best: Option<(f64, usize)> = None;
                                for di in -1..=1 {
                                    for dj in -1..=1 {
                                        if let Some(k) = self.disk_index(i + di, j + dj) {
                                            let d = (di * di + dj * dj) as f64;
                                            if best.map_or(true, |b| d < b.0) {
                                                best = Some((d, k));
                                            }
                                        }
                                    }
                                }
                                if let Some((_, k)) = best {
                                    w[k] += area;
                                }
                            }
                            None => {}
                        }
                    }
                }
            }
        }
        w
    }

    /// Euclidean norm of node `i`.
    pub fn norm(&self, i: usize) -> f64 {
        let [x, y] = self.coords[i];
        x.hypot(y)
    }

    /// Interior index of lattice node `(i, j)` on the disk lattice.
    pub fn disk_index(&self, i: isize, j: isize) -> Option<usize> {
        let n = self.n as isize;
        if self.domain.kind != DomainKind::Disk2d || i < 0 || j < 0 || i > n || j > n {
            return None;
        }
        let v = self.lookup[i as usize * (self.n + 1) + j as usize];
        (v != NO_NODE).then_some(v as usize)
    }

    /// Same grid parameters (domain and N).
    pub fn same_as(&self, other: &Grid) -> bool {
        self.domain == other.domain && self.n == other.n
    }

    /// Value of the zero-extended grid function at lattice offset `k` along
    /// the line (interval/radial); `k = 0` and `k = N` are boundary nodes.
    pub fn line_value(&self, values: &[f64], k: usize) -> f64 {
        match self.domain.kind {
            DomainKind::Interval | DomainKind::Ball3dRadial if k >= 1 && k < self.n => values[k - 1],
            _ => 0.0,
        }
    }

    /// Bilinear interpolation of a zero-extended disk grid function.
    pub fn disk_interpolate(&self, values: &[f64], x: f64, y: f64) -> f64 {
        let r = self.domain.radius;
        let fx = (x + r) / self.h;
        let fy = (y + r) / self.h;
        let i0 = fx.floor() as isize;
        let j0 = fy.floor() as isize;
        let tx = fx - i0 as f64;
        let ty = fy - j0 as f64;
        let v = |i: isize, j: isize| self.disk_index(i, j).map_or(0.0, |k| values[k]);
        (1.0 - tx) * (1.0 - ty) * v(i0, j0)
            + tx * (1.0 - ty) * v(i0 + 1, j0)
            + (1.0 - tx) * ty * v(i0, j0 + 1)
            + tx * ty * v(i0 + 1, j0 + 1)
    }
}

/// Area of the square cell of side `h` centred at `(cx, cy)` inside the disk of radius `r`.
fn cell_disk_area(cx: f64, cy: f64, h: f64, r: f64) -> f64 {
    let half = 0.5 * h;
    let far = (cx.abs() + half).hypot(cy.abs() + half);
    if far <= r {
        return h * h;
    }
    let nx = (cx.abs() - half).max(0.0);
    let ny = (cy.abs() - half).max(0.0);
    if nx.hypot(ny) >= r {
        return 0.0;
    }
    const SLICES: usize = 256;
    let dx = h / SLICES as f64;
    let mut area = 0.0;
    for k in 0..SLICES {
        let x = cx - half + (k as f64 + 0.5) * dx;
        if x.abs() >= r {
            continue;
        }
        let top = (r * r - x * x).sqrt();
        let lo = (cy - half).max(-top);
        let hi = (cy + half).min(top);
        if hi > lo {
            area += (hi - lo) * dx;
        }
    }
    area
}

/// Boundary nodes with surface weights, outward normals and `x·ν`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryQuadrature {
    pub nodes: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub normals: Vec<[f64; 2]>,
    pub xdotnu: Vec<f64>,
}

impl BoundaryQuadrature {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn min_xdotnu(&self) -> f64 {
        self.xdotnu.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Boundary quadrature on `|x| = R`. `m` is used only for the disk
/// (equispaced trapezoid rule); the interval always has its two endpoints
/// and the radial ball a single node carrying the sphere area.
pub fn boundary_quadrature(grid: &Grid, m: usize) -> Result<BoundaryQuadrature> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!(
            "boundary quadrature needs M >= 2, got {m}"
        )));
    }
    let r = grid.radius();
    let mut bq = BoundaryQuadrature {
        nodes: Vec::new(),
        weights: Vec::new(),
        normals: Vec::new(),
        xdotnu: Vec::new(),
    };
    let mut push = |p: [f64; 2], w: f64, nu: [f64; 2]| {
        bq.nodes.push(p);
        bq.weights.push(w);
        bq.normals.push(nu);
        bq.xdotnu.push(p[0] * nu[0] + p[1] * nu[1]);
    };
    match grid.kind() {
        DomainKind::Interval => {
            push([-r, 0.0], 1.0, [-1.0, 0.0]);
            push([r, 0.0], 1.0, [1.0, 0.0]);
        }
        DomainKind::Disk2d => {
            let w = 2.0 * PI * r / m as f64;
            for k in 0..m {
                let t = 2.0 * PI * k as f64 / m as f64;
                let (sn, cs) = t.sin_cos();
                push([r * cs, r * sn], w, [cs, sn]);
            }
        }
        DomainKind::Ball3dRadial => {
            push([r, 0.0], 4.0 * PI * r * r, [1.0, 0.0]);
        }
    }
    Ok(bq)
}

/// Strict star-shape about the origin: `min x·ν > 0` over the boundary nodes.
pub fn verify_star_shape(_grid: &Grid, bq: &BoundaryQuadrature) -> bool {
    !bq.is_empty() && bq.min_xdotnu() > 0.0
}
