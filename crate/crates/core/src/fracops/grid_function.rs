use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::Grid;
use crate::numerics::{max_abs, wdot};

/// Values at interior nodes; the function is zero everywhere outside Ω.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid with {} interior nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values }
    }

    /// Samples `f` at every interior node (`f` receives the node
    /// coordinates; radial grids pass `[r, 0]`).
    pub fn from_fn<F: Fn([f64; 2]) -> f64>(grid: Arc<Grid>, f: F) -> Self {
        let values = grid.coords().iter().map(|&x| f(x)).collect();
        Self { grid, values }
    }

    /// `μ (1 - |x|²/R²)`, the deterministic positive start profile.
    pub fn bump(grid: Arc<Grid>, amplitude: f64) -> Self {
        let r2 = grid.radius() * grid.radius();
        Self::from_fn(grid, |[x, y]| amplitude * (1.0 - (x * x + y * y) / r2))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.values)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Discrete `∫_Ω u²`.
    pub fn l2_norm_sq(&self) -> f64 {
        wdot(self.grid.weights(), &self.values, &self.values)
    }

    pub fn ensure_same_grid(&self, grid: &Grid) -> Result<()> {
        if self.grid.same_as(grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "function on {} N={} used with {} N={}",
                self.grid.kind().name(),
                self.grid.n(),
                grid.kind().name(),
                grid.n()
            )))
        }
    }
}
