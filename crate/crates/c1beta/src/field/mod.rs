//! Sampled fields on a uniform grid over a disk.
//!
//! A [`Field`] stores one value per node of its [`Grid`]. Only masked nodes
//! (those inside the grid's disk) carry meaningful data; every operation that
//! produces a field writes zeros elsewhere.

mod diff;
mod grid;
pub mod io;
mod norms;
mod value;

use std::fmt;

use nalgebra::{Matrix3x2, Vector2, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;

pub use diff::{frame, frame_from_jacobian, hessian_sup, jacobian, pullback, pullback_of_jacobian, Frame};
pub use grid::Grid;
pub use norms::{holder_norm, holder_seminorm, interpolation_proxy, DEFAULT_SEED};
pub use value::{Sym2, Value};

use crate::error::{Error, Result};

/// One value of type `T` per grid node.
#[derive(Clone, PartialEq)]
pub struct Field<T> {
    grid: Grid,
    values: Vec<T>,
}

pub type ScalarField = Field<f64>;
pub type VectorField2 = Field<Vector2<f64>>;
pub type MapField = Field<Vector3<f64>>;
pub type JacobianField = Field<Matrix3x2<f64>>;
pub type MetricField = Field<Sym2>;
pub type ComplexField = Field<Complex64>;

impl<T: Value> fmt::Debug for Field<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("grid", &self.grid)
            .field("sup", &self.sup_norm())
            .finish()
    }
}

impl<T: Value> Field<T> {
    pub fn new(grid: Grid, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Field { grid, values })
    }

    /// Samples `f(x, y)` at every node, masked or not.
    pub fn from_fn<F>(grid: Grid, f: F) -> Self
    where
        F: Fn(f64, f64) -> T + Sync,
    {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let (x, y) = grid.point(k);
                f(x, y)
            })
            .collect();
        Field { grid, values }
    }

    /// Samples `f(x, y)` at masked nodes, zero elsewhere.
    pub fn from_fn_masked<F>(grid: Grid, f: F) -> Self
    where
        F: Fn(f64, f64) -> T + Sync,
    {
        Self::from_fn(grid, |x, y| if grid.contains(x, y) { f(x, y) } else { T::zero() })
    }

    pub fn constant(grid: Grid, value: T) -> Self {
        Self::from_fn_masked(grid, |_, _| value)
    }

    pub fn zeros(grid: Grid) -> Self {
        Field {
            grid,
            values: vec![T::zero(); grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn get(&self, idx: usize) -> T {
        self.values[idx]
    }

    pub fn at(&self, i: usize, j: usize) -> T {
        self.values[self.grid.index(i, j)]
    }

    /// Value at the node nearest to `(x, y)`.
    pub fn sample_nearest(&self, x: f64, y: f64) -> Option<T> {
        self.grid.nearest(x, y).map(|k| self.values[k])
    }

    /// Bilinear interpolation from the four surrounding nodes.
    pub fn interpolate(&self, x: f64, y: f64) -> Option<T> {
        let g = &self.grid;
        let h = g.spacing();
        let fx = (x + g.half_width()) / h;
        let fy = (y + g.half_width()) / h;
        let last = (g.n() - 1) as f64;
        if !(0.0..=last).contains(&fx) || !(0.0..=last).contains(&fy) {
            return None;
        }
        let i = (fx.floor() as usize).min(g.n() - 2);
        let j = (fy.floor() as usize).min(g.n() - 2);
        let tx = fx - i as f64;
        let ty = fy - j as f64;
        let v = |a, b| self.at(a, b);
        Some(
            v(i, j) * ((1.0 - tx) * (1.0 - ty))
                + v(i + 1, j) * (tx * (1.0 - ty))
                + v(i, j + 1) * ((1.0 - tx) * ty)
                + v(i + 1, j + 1) * (tx * ty),
        )
    }

    /// Pointwise map over masked nodes.
    pub fn map<U: Value, F>(&self, f: F) -> Field<U>
    where
        F: Fn(T) -> U + Sync,
    {
        let grid = self.grid;
        let values = self
            .values
            .par_iter()
            .enumerate()
            .map(|(k, &v)| if grid.is_masked(k) { f(v) } else { U::zero() })
            .collect();
        Field { grid, values }
    }

    /// Pointwise map with node coordinates.
    pub fn map_xy<U: Value, F>(&self, f: F) -> Field<U>
    where
        F: Fn(f64, f64, T) -> U + Sync,
    {
        let grid = self.grid;
        let values = self
            .values
            .par_iter()
            .enumerate()
            .map(|(k, &v)| {
                let (x, y) = grid.point(k);
                if grid.contains(x, y) {
                    f(x, y, v)
                } else {
                    U::zero()
                }
            })
            .collect();
        Field { grid, values }
    }

    /// Pointwise combination of two node-aligned fields; the result lives on
    /// the smaller of the two disks.
    pub fn zip_map<U: Value, V: Value, F>(&self, other: &Field<U>, f: F) -> Result<Field<V>>
    where
        F: Fn(T, U) -> V + Sync,
    {
        let grid = common_grid(&self.grid, &other.grid)?;
        let values = self
            .values
            .par_iter()
            .zip(other.values.par_iter())
            .enumerate()
            .map(|(k, (&a, &b))| if grid.is_masked(k) { f(a, b) } else { V::zero() })
            .collect();
        Ok(Field { grid, values })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    /// Same nodes, mask contracted (or enlarged) to `radius`. Nodes that
    /// leave the mask are zeroed; nodes are never extrapolated into.
    pub fn remask(&self, radius: f64) -> Result<Self> {
        if radius > self.grid.radius() * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "cannot enlarge mask from {} to {radius}",
                self.grid.radius()
            )));
        }
        let grid = self.grid.with_radius(radius)?;
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(k, &v)| if grid.is_masked(k) { v } else { T::zero() })
            .collect();
        Ok(Field { grid, values })
    }

    /// Values at masked nodes in index order.
    pub fn masked_values(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        let grid = self.grid;
        self.values
            .iter()
            .enumerate()
            .filter(move |(k, _)| grid.is_masked(*k))
            .map(|(k, &v)| (k, v))
    }

    /// `sup |f|` over masked nodes.
    pub fn sup_norm(&self) -> f64 {
        let grid = self.grid;
        self.values
            .par_iter()
            .enumerate()
            .filter(|(k, _)| grid.is_masked(*k))
            .map(|(_, v)| v.norm())
            .reduce(|| 0.0, f64::max)
    }

    /// `sup |f|` over masked nodes that also lie in `D_radius`.
    pub fn sup_norm_within(&self, radius: f64) -> f64 {
        let inner = self.grid.with_radius(radius.min(self.grid.radius()));
        match inner {
            Ok(g) => self
                .values
                .iter()
                .enumerate()
                .filter(|(k, _)| g.is_masked(*k))
                .map(|(_, v)| v.norm())
                .fold(0.0, f64::max),
            Err(_) => 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.masked_values().all(|(_, v)| v.is_finite())
    }
}

impl MetricField {
    pub fn identity(grid: Grid) -> Self {
        Self::constant(grid, Sym2::identity())
    }

    /// First masked node where the tensor fails to be positive definite.
    pub fn first_non_spd(&self) -> Option<usize> {
        self.masked_values().find(|(_, m)| !m.is_spd()).map(|(k, _)| k)
    }

    pub fn check_spd(&self) -> Result<()> {
        match self.first_non_spd() {
            None => Ok(()),
            Some(node) => {
                let (x, y) = self.grid.point(node);
                Err(Error::NotSpd { node, x, y })
            }
        }
    }

    /// Smallest eigenvalue over masked nodes.
    pub fn min_eigenvalue(&self) -> f64 {
        self.masked_values()
            .map(|(_, m)| m.min_eig())
            .fold(f64::INFINITY, f64::min)
    }
}

impl ComplexField {
    pub fn re(&self) -> ScalarField {
        self.map(|c| c.re)
    }

    pub fn im(&self) -> ScalarField {
        self.map(|c| c.im)
    }

    pub fn from_parts(re: &ScalarField, im: &ScalarField) -> Result<Self> {
        re.zip_map(im, Complex64::new)
    }
}

pub(crate) fn common_grid(a: &Grid, b: &Grid) -> Result<Grid> {
    if !a.same_nodes(b) {
        return Err(Error::GridMismatch);
    }
    a.with_radius(a.radius().min(b.radius()))
}
