//! Uniform cell-centered meshes on an interval and the scalar fields that
//! live on them.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Uniform cell-centered mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    n_cells: usize,
    x_min: f64,
    x_max: f64,
}

impl Grid1D {
    pub fn new(n_cells: usize, x_min: f64, x_max: f64) -> Result<Self> {
        if n_cells == 0 {
            return Err(Error::invalid("n_cells", "must be at least 1"));
        }
        if !(x_min.is_finite() && x_max.is_finite() && x_max > x_min) {
            return Err(Error::invalid("grid bounds", "need finite x_min < x_max"));
        }
        Ok(Grid1D { n_cells, x_min, x_max })
    }

    /// Mesh on the reference interval [-0.5, 0.5].
    pub fn unit(n_cells: usize) -> Result<Self> {
        Self::new(n_cells, -0.5, 0.5)
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    /// Cell width.
    pub fn h(&self) -> f64 {
        self.length() / self.n_cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.h()
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_cells).map(move |i| self.center(i))
    }

    /// Left edge of cell `i`; `face(n_cells)` is the right boundary.
    pub fn face(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.h()
    }

    /// Index of the cell containing `x`, clamped to the mesh.
    pub fn locate(&self, x: f64) -> usize {
        let s = ((x - self.x_min) / self.h()).floor();
        if s <= 0.0 {
            0
        } else {
            (s as usize).min(self.n_cells - 1)
        }
    }
}

/// A real-valued function of position, e.g. an obstacle density or an
/// initial profile.
pub trait Profile {
    fn value(&self, x: f64) -> f64;
}

impl<F: Fn(f64) -> f64> Profile for F {
    fn value(&self, x: f64) -> f64 {
        self(x)
    }
}

impl Profile for Field {
    /// Piecewise-constant reading of the cell values.
    fn value(&self, x: f64) -> f64 {
        self.values[self.grid.locate(x)]
    }
}

// Three-point Gauss-Legendre on [-1, 1]; exact for quintics.
const GAUSS_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GAUSS_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

/// Integral of `f` over `[a, b]` with composite three-point Gauss-Legendre
/// on `panels` equal panels.
pub fn integrate(f: &impl Profile, a: f64, b: f64, panels: usize) -> f64 {
    let panels = panels.max(1);
    let w = (b - a) / panels as f64;
    let mut sum = 0.0;
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * w;
        for (node, weight) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS.iter()) {
            sum += weight * f.value(mid + 0.5 * w * node);
        }
    }
    0.5 * w * sum
}

/// Cell values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid1D,
    values: Vec<f64>,
}

impl Field {
    pub fn from_values(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::invalid(
                "field",
                alloc::format!("{} values for {} cells", values.len(), grid.n_cells()),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid("field", alloc::format!("non-finite value in cell {i}")));
        }
        Ok(Field { grid, values })
    }

    pub fn constant(grid: Grid1D, value: f64) -> Self {
        Field {
            grid,
            values: vec![value; grid.n_cells()],
        }
    }

    /// Exact-to-quintics cell averages of `f`.
    pub fn cell_averages(grid: Grid1D, f: &impl Profile) -> Result<Self> {
        let values = (0..grid.n_cells())
            .map(|i| integrate(f, grid.face(i), grid.face(i + 1), 1) / grid.h())
            .collect();
        Self::from_values(grid, values)
    }

    /// Point samples of `f` at the cell centers.
    pub fn sample(grid: Grid1D, f: &impl Profile) -> Result<Self> {
        Self::from_values(grid, grid.centers().map(|x| f.value(x)).collect())
    }

    pub fn grid(&self) -> &Grid1D {
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

    /// Midpoint-rule integral.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.h()
    }

    pub fn mean(&self) -> f64 {
        self.mass() / self.grid.length()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Rescaled copy with unit mass.
    pub fn normalized(&self) -> Result<Self> {
        let m = self.mass();
        if !(m > 0.0) {
            return Err(Error::invalid("field", "cannot normalize non-positive mass"));
        }
        Ok(self.map(|v| v / m))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::invalid("field", "fields live on different grids"));
        }
        Ok(())
    }

    /// Cell-width weighted L2 distance.
    pub fn l2_distance(&self, other: &Field) -> Result<f64> {
        self.check_same_grid(other)?;
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok((s * self.grid.h()).sqrt())
    }

    pub fn linf_distance(&self, other: &Field) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Overlap-weighted averages onto a coarser (or any) mesh over the same
    /// interval. Exact for the piecewise-constant reading of the field.
    pub fn rebin(&self, target: Grid1D) -> Result<Field> {
        if (target.x_min() - self.grid.x_min()).abs() > 1e-12 || (target.x_max() - self.grid.x_max()).abs() > 1e-12 {
            return Err(Error::invalid("rebin", "target covers a different interval"));
        }
        let h = self.grid.h();
        let mut out = Vec::with_capacity(target.n_cells());
        for j in 0..target.n_cells() {
            let (lo, hi) = (target.face(j), target.face(j + 1));
            let first = self.grid.locate(lo);
            let last = self.grid.locate(hi - 1e-14 * h);
            let mut acc = 0.0;
            for i in first..=last {
                let overlap = hi.min(self.grid.face(i + 1)) - lo.max(self.grid.face(i));
                if overlap > 0.0 {
                    acc += overlap * self.values[i];
                }
            }
            out.push(acc / target.h());
        }
        Field::from_values(target, out)
    }
}
