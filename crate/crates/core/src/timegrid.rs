//! Piecewise-constant representation of `L²([0,T], ℝᵐ)`.
//!
//! A [`GridFunction`] holds one value per uniform time cell and component.
//! Because the represented functions are step functions, the `L²` inner
//! product is the finite sum `Σ_k dt·⟨h_k, g_k⟩` with no quadrature error.

use serde::Serialize;

use crate::error::{Error, Result};

/// Uniform partition of `[0, horizon]` into `cells` intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    horizon: f64,
    cells: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, cells: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if cells == 0 {
            return Err(Error::invalid("grid needs at least one cell"));
        }
        Ok(TimeGrid { horizon, cells, dt: horizon / cells as f64 })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Midpoint of cell `k`, where closed-form data is sampled.
    pub fn midpoint(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.dt
    }

    /// Grid with every cell split into `factor` equal subcells.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::invalid("refinement factor must be at least 1"));
        }
        TimeGrid::new(self.horizon, self.cells * factor)
    }
}

/// Values of a step function on a [`TimeGrid`], indexed `(cell, component)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridFunction {
    grid: TimeGrid,
    components: usize,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: TimeGrid, components: usize, values: Vec<f64>) -> Result<Self> {
        if components == 0 {
            return Err(Error::invalid("grid function needs at least one component"));
        }
        if values.len() != grid.cells() * components {
            return Err(Error::shape(format!(
                "expected {} values ({} cells x {} components), got {}",
                grid.cells() * components,
                grid.cells(),
                components,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite value at flat index {pos}")));
        }
        Ok(GridFunction { grid, components, values })
    }

    pub fn zeros(grid: TimeGrid, components: usize) -> Self {
        assert!(components > 0, "grid function needs at least one component");
        GridFunction { grid, components, values: vec![0.0; grid.cells() * components] }
    }

    /// The same vector `value` in every cell.
    pub fn constant(grid: TimeGrid, value: &[f64]) -> Result<Self> {
        let values = (0..grid.cells()).flat_map(|_| value.iter().copied()).collect();
        GridFunction::new(grid, value.len(), values)
    }

    /// Samples `f(t, j)` at the midpoint of every cell.
    pub fn from_fn(
        grid: TimeGrid,
        components: usize,
        mut f: impl FnMut(f64, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.cells() * components);
        for k in 0..grid.cells() {
            let t = grid.midpoint(k);
            for j in 0..components {
                values.push(f(t, j));
            }
        }
        GridFunction::new(grid, components, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn cells(&self) -> usize {
        self.grid.cells()
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

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.values[k * self.components + j]
    }

    pub fn set(&mut self, k: usize, j: usize, v: f64) {
        self.values[k * self.components + j] = v;
    }

    pub fn cell(&self, k: usize) -> &[f64] {
        &self.values[k * self.components..(k + 1) * self.components]
    }

    pub fn cell_mut(&mut self, k: usize) -> &mut [f64] {
        let m = self.components;
        &mut self.values[k * m..(k + 1) * m]
    }

    /// Column of component `j` across all cells.
    pub fn component(&self, j: usize) -> Vec<f64> {
        (0..self.cells()).map(|k| self.get(k, j)).collect()
    }

    pub fn same_shape(&self, other: &GridFunction) -> bool {
        self.grid == other.grid && self.components == other.components
    }

    pub fn check_shape(&self, other: &GridFunction) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "grid functions differ: {} cells x {} components on horizon {} vs {} cells x {} components on horizon {}",
                self.cells(),
                self.components,
                self.grid.horizon(),
                other.cells(),
                other.components,
                other.grid.horizon()
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `⟨⟨h, g⟩⟩ = Σ_k dt·⟨h_k, g_k⟩`.
    pub fn inner_product(&self, other: &GridFunction) -> Result<f64> {
        self.check_shape(other)?;
        Ok(self.dot(other))
    }

    /// Inner product without the shape check. Panics on length mismatch.
    pub fn dot(&self, other: &GridFunction) -> f64 {
        assert_eq!(self.values.len(), other.values.len(), "grid function length mismatch");
        let raw: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        raw * self.grid.dt()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `‖self − other‖`; panics on shape mismatch.
    pub fn distance(&self, other: &GridFunction) -> f64 {
        assert_eq!(self.values.len(), other.values.len(), "grid function length mismatch");
        let raw: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b) * (a - b)).sum();
        (raw * self.grid.dt()).sqrt()
    }

    /// `∫₀ᵀ h_j(t) dt`.
    pub fn integrate_component(&self, j: usize) -> Result<f64> {
        if j >= self.components {
            return Err(Error::invalid(format!(
                "component {j} out of range for {} components",
                self.components
            )));
        }
        Ok(self.integral(j))
    }

    pub(crate) fn integral(&self, j: usize) -> f64 {
        let s: f64 = (0..self.cells()).map(|k| self.get(k, j)).sum();
        s * self.grid.dt()
    }

    /// `self ← self + a·x`. Panics on shape mismatch.
    pub fn axpy(&mut self, a: f64, x: &GridFunction) {
        assert_eq!(self.values.len(), x.values.len(), "grid function length mismatch");
        for (s, v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
    }

    /// `self + a·x` as a new function.
    pub fn plus_scaled(&self, a: f64, x: &GridFunction) -> GridFunction {
        let mut out = self.clone();
        out.axpy(a, x);
        out
    }

    pub fn scaled(&self, a: f64) -> GridFunction {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= a);
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            grid: self.grid,
            components: self.components,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Concatenates per-block functions into one with `Σ mᵢ` components;
    /// block `i` occupies a contiguous component range in every cell.
    pub fn stack(parts: &[GridFunction]) -> Result<GridFunction> {
        let first = parts.first().ok_or_else(|| Error::invalid("nothing to stack"))?;
        let grid = first.grid;
        if let Some(bad) = parts.iter().find(|p| p.grid != grid) {
            return Err(Error::shape(format!(
                "cannot stack functions on different grids ({} vs {} cells)",
                grid.cells(),
                bad.cells()
            )));
        }
        let components: usize = parts.iter().map(|p| p.components).sum();
        let mut values = Vec::with_capacity(grid.cells() * components);
        for k in 0..grid.cells() {
            for p in parts {
                values.extend_from_slice(p.cell(k));
            }
        }
        Ok(GridFunction { grid, components, values })
    }

    /// Inverse of [`GridFunction::stack`] for equal block widths.
    pub fn unstack(&self, block: usize) -> Result<Vec<GridFunction>> {
        if block == 0 || !self.components.is_multiple_of(block) {
            return Err(Error::shape(format!(
                "{} components do not split into blocks of {block}",
                self.components
            )));
        }
        let n = self.components / block;
        let mut out: Vec<GridFunction> = (0..n).map(|_| GridFunction::zeros(self.grid, block)).collect();
        for k in 0..self.cells() {
            let cell = self.cell(k);
            for (i, part) in out.iter_mut().enumerate() {
                part.cell_mut(k).copy_from_slice(&cell[i * block..(i + 1) * block]);
            }
        }
        Ok(out)
    }

    /// The same step function on a grid with each cell split `factor` ways.
    pub fn refined(&self, factor: usize) -> Result<GridFunction> {
        let grid = self.grid.refined(factor)?;
        let mut values = Vec::with_capacity(self.values.len() * factor);
        for k in 0..self.cells() {
            for _ in 0..factor {
                values.extend_from_slice(self.cell(k));
            }
        }
        Ok(GridFunction { grid, components: self.components, values })
    }
}
