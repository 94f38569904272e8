use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform node layout over the square `[-half_width, half_width]²` with a
/// disk mask of radius `radius` centred at the origin.
///
/// Nodes are stored row-major: node `(i, j)` sits at index `j * n + i` with
/// coordinates `(-half_width + i h, -half_width + j h)`. Shrinking a domain
/// keeps the nodes and only contracts the mask, so fields on nested disks
/// stay node-aligned.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    half_width: f64,
    n: usize,
    radius: f64,
}

/// Relative slack on the mask test so that nodes exactly on the circle count
/// as inside regardless of rounding.
const MASK_SLACK: f64 = 1e-12;

impl Grid {
    /// Grid over the bounding square of `D_radius`.
    pub fn disk(radius: f64, n: usize) -> Result<Self> {
        Self::new(radius, n, radius)
    }

    pub fn new(half_width: f64, n: usize, radius: f64) -> Result<Self> {
        if n < 5 {
            return Err(Error::GridTooSmall { n });
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "half width must be positive, got {half_width}"
            )));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "mask radius must be positive, got {radius}"
            )));
        }
        Ok(Grid { half_width, n, radius })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    /// Coordinate of the `i`-th node along either axis.
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    /// `(i, j)` of a node index.
    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.n, idx / self.n)
    }

    pub fn point(&self, idx: usize) -> (f64, f64) {
        let (i, j) = self.ij(idx);
        (self.coord(i), self.coord(j))
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x * x + y * y <= self.radius * self.radius * (1.0 + MASK_SLACK)
    }

    pub fn is_masked(&self, idx: usize) -> bool {
        let (x, y) = self.point(idx);
        self.contains(x, y)
    }

    pub fn mask(&self) -> Vec<bool> {
        (0..self.len()).map(|k| self.is_masked(k)).collect()
    }

    pub fn masked_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.is_masked(k)).collect()
    }

    pub fn masked_count(&self) -> usize {
        (0..self.len()).filter(|&k| self.is_masked(k)).count()
    }

    /// Same nodes, different mask radius.
    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        Self::new(self.half_width, self.n, radius)
    }

    /// True when both grids have identical node positions.
    pub fn same_nodes(&self, other: &Grid) -> bool {
        self.n == other.n && self.half_width == other.half_width
    }

    /// Node index closest to `(x, y)`, if inside the square.
    pub fn nearest(&self, x: f64, y: f64) -> Option<usize> {
        let h = self.spacing();
        let fi = ((x + self.half_width) / h).round();
        let fj = ((y + self.half_width) / h).round();
        if fi < 0.0 || fj < 0.0 || fi >= self.n as f64 || fj >= self.n as f64 {
            return None;
        }
        Some(self.index(fi as usize, fj as usize))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_and_coordinates() {
        let g = Grid::disk(1.0, 5).unwrap();
        assert_eq!(g.spacing(), 0.5);
        assert_eq!(g.coord(0), -1.0);
        assert_eq!(g.coord(4), 1.0);
        assert_eq!(g.point(g.index(2, 2)), (0.0, 0.0));
    }

    #[test]
    fn mask_is_the_closed_disk() {
        let g = Grid::disk(1.0, 5).unwrap();
        // 5x5 nodes at spacing 0.5: all but the 4 corners and the 8 nodes
        // next to them ((±1, ±0.5), (±0.5, ±1)) lie in the closed unit disk.
        assert_eq!(g.masked_count(), 13);
        assert!(g.is_masked(g.index(4, 2)));
        assert!(!g.is_masked(g.index(4, 4)));
    }

    #[test]
    fn rejects_tiny_grids() {
        assert!(matches!(Grid::disk(1.0, 4), Err(Error::GridTooSmall { n: 4 })));
    }

    #[test]
    fn nearest_node() {
        let g = Grid::disk(1.0, 21).unwrap();
        let k = g.nearest(0.31, -0.49).unwrap();
        let (x, y) = g.point(k);
        assert!((x - 0.3).abs() < 1e-12 && (y + 0.5).abs() < 1e-12);
        assert!(g.nearest(1.2, 0.0).is_none());
    }
}
