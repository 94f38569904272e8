use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::field::MapField;
use crate::stage_corrugate::interior_pullback;

/// Result of [`injectivity_check`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Injectivity {
    /// `min |u(z) − u(y)|/|z − y|` over sampled pairs with `|z − y| ≥ rho_sep`.
    pub far: f64,
    /// Smallest singular value of `Du` on the centred-stencil interior.
    pub local: f64,
    /// Lattice stride of the far-pair sample.
    pub stride: usize,
    pub sampled_nodes: usize,
}

impl Injectivity {
    pub fn margin(&self) -> f64 {
        self.far.min(self.local)
    }

    pub fn pass(&self) -> bool {
        self.margin() > 0.0
    }
}

/// Far pairs are scanned exhaustively over the masked nodes of a
/// sublattice with at most `max_samples` nodes; the lattice always contains
/// the centre node so symmetric folds are caught exactly.
pub fn injectivity_check(u: &MapField, rho_sep: f64, max_samples: usize) -> Result<Injectivity> {
    let grid = *u.grid();
    let n = grid.n();
    let masked = grid.masked_count();
    let mut stride = 1;
    while masked / (stride * stride) > max_samples.max(1) {
        stride += 1;
    }
    let c = (n - 1) / 2;
    let nodes: Vec<(f64, f64, nalgebra::Vector3<f64>)> = grid
        .masked_indices()
        .into_iter()
        .filter(|&idx| {
            let (i, j) = grid.ij(idx);
            i.abs_diff(c) % stride == 0 && j.abs_diff(c) % stride == 0
        })
        .map(|idx| {
            let (x, y) = grid.point(idx);
            (x, y, u.get(idx))
        })
        .collect();
    let sep2 = rho_sep * rho_sep;
    let far = (0..nodes.len())
        .into_par_iter()
        .map(|a| {
            let (xa, ya, ua) = nodes[a];
            nodes[a + 1..]
                .iter()
                .filter_map(|&(xb, yb, ub)| {
                    let d2 = (xa - xb).powi(2) + (ya - yb).powi(2);
                    (d2 >= sep2).then(|| ((ua - ub).norm_squared() / d2).sqrt())
                })
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min);
    let local = interior_pullback(u)?.min_eigenvalue().max(0.0).sqrt();
    Ok(Injectivity {
        far,
        local,
        stride,
        sampled_nodes: nodes.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;
    use nalgebra::Vector3;

    #[test]
    fn identity_embedding_has_unit_margin() {
        let g = Grid::disk(1.0, 41).unwrap();
        let u = MapField::from_fn_masked(g, |x, y| Vector3::new(x, y, 0.0));
        let inj = injectivity_check(&u, 0.1, 400).unwrap();
        assert!((inj.far - 1.0).abs() < 1e-12);
        assert!((inj.local - 1.0).abs() < 1e-12);
        assert!(inj.pass());
    }

    #[test]
    fn folded_map_fails() {
        let g = Grid::disk(1.0, 41).unwrap();
        let u = MapField::from_fn_masked(g, |x, y| Vector3::new(x * x, y, 0.0));
        let inj = injectivity_check(&u, 0.1, 400).unwrap();
        assert!(inj.far < 1e-12, "{}", inj.far);
        assert!(!inj.pass());
    }

    #[test]
    fn margin_scales_with_map() {
        let g = Grid::disk(1.0, 41).unwrap();
        let u = MapField::from_fn_masked(g, |x, y| Vector3::new(0.5 * x, 2.0 * y, x * y));
        let inj = injectivity_check(&u, 0.1, 10_000).unwrap();
        assert!(inj.local > 0.0 && inj.local <= 0.5 + 1e-9);
        assert_eq!(inj.stride, 1);
    }
}
