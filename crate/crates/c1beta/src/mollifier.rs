//! Convolution with the standard bump `φ_ℓ`, shrinking the domain by `ℓ`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{Field, Grid, ScalarField, Value};

/// Discrete bump `exp(−1/(1−|y/ℓ|²))` on the grid stencil, normalized so the
/// weights (cell area included) sum to one.
#[derive(Clone, Debug)]
pub struct MollifierKernel {
    ell: f64,
    /// `(di, dj, weight × cell area)`.
    taps: Vec<(isize, isize, f64)>,
}

impl MollifierKernel {
    pub fn new(ell: f64, spacing: f64) -> Result<Self> {
        if !(ell >= 2.0 * spacing) {
            return Err(Error::KernelUnderResolved { ell, spacing });
        }
        let reach = (ell / spacing).floor() as isize;
        let mut taps = Vec::new();
        for dj in -reach..=reach {
            for di in -reach..=reach {
                let r2 = ((di * di + dj * dj) as f64) * spacing * spacing / (ell * ell);
                if r2 < 1.0 {
                    taps.push((di, dj, (-1.0 / (1.0 - r2)).exp()));
                }
            }
        }
        let total: f64 = taps.iter().map(|t| t.2).sum();
        for t in &mut taps {
            t.2 /= total;
        }
        Ok(MollifierKernel { ell, taps })
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    pub fn taps(&self) -> &[(isize, isize, f64)] {
        &self.taps
    }

    pub fn mass(&self) -> f64 {
        self.taps.iter().map(|t| t.2).sum()
    }

    /// `Σ w(y) |y|²` in grid units of `spacing`; multiply by `spacing²`.
    fn raw_second_moment(&self) -> f64 {
        self.taps.iter().map(|&(i, j, w)| w * (i * i + j * j) as f64).sum()
    }

    /// `m₂ = ∫|y|²φ(y)dy` of the unit-scale profile as seen by this stencil,
    /// so that `|x|² * φ_ℓ = |x|² + m₂ℓ²`.
    pub fn m2(&self, spacing: f64) -> f64 {
        self.raw_second_moment() * spacing * spacing / (self.ell * self.ell)
    }
}

/// `f * φ_ℓ` on `D_{r−ℓ}`.
pub fn mollify<T: Value>(f: &Field<T>, ell: f64) -> Result<Field<T>> {
    let g = f.grid();
    let kernel = MollifierKernel::new(ell, g.spacing())?;
    mollify_with(f, &kernel)
}

pub fn mollify_with<T: Value>(f: &Field<T>, kernel: &MollifierKernel) -> Result<Field<T>> {
    let g = f.grid();
    let radius = g.radius() - kernel.ell();
    if !(radius > 0.0) {
        return Err(Error::DomainVanishes {
            radius: g.radius(),
            ell: kernel.ell(),
        });
    }
    let out = g.with_radius(radius)?;
    let n = g.n() as isize;
    let vals = f.values();
    let values = (0..out.len())
        .into_par_iter()
        .map(|k| {
            if !out.is_masked(k) {
                return T::zero();
            }
            let (i, j) = out.ij(k);
            let (i, j) = (i as isize, j as isize);
            let mut acc = T::zero();
            for &(di, dj, w) in kernel.taps() {
                // Every tap of a node in D_{r−ℓ} lands inside D_r.
                let idx = ((j + dj) * n + (i + di)) as usize;
                acc = acc + vals[idx] * w;
            }
            acc
        })
        .collect();
    Field::new(out, values)
}

/// `(fg) * φ_ℓ − (f * φ_ℓ)(g * φ_ℓ)`.
pub fn commutator_defect(f: &ScalarField, g: &ScalarField, ell: f64) -> Result<ScalarField> {
    let prod = f.zip_map(g, |a, b| a * b)?;
    let kernel = MollifierKernel::new(ell, prod.grid().spacing())?;
    let fg = mollify_with(&prod, &kernel)?;
    let fm = mollify_with(&f.remask(prod.grid().radius())?, &kernel)?;
    let gm = mollify_with(&g.remask(prod.grid().radius())?, &kernel)?;
    let prod_m = fm.zip_map(&gm, |a, b| a * b)?;
    fg.sub(&prod_m)
}

/// Domain of `f * φ_ℓ` without computing it.
pub fn shrunk_grid(g: &Grid, ell: f64) -> Result<Grid> {
    if !(g.radius() - ell > 0.0) {
        return Err(Error::DomainVanishes {
            radius: g.radius(),
            ell,
        });
    }
    g.with_radius(g.radius() - ell)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid() -> Grid {
        Grid::disk(1.0, 101).unwrap()
    }

    #[test]
    fn unit_mass() {
        let k = MollifierKernel::new(0.1, 0.02).unwrap();
        assert_abs_diff_eq!(k.mass(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn under_resolved_and_vanishing() {
        let f = ScalarField::zeros(grid());
        assert!(matches!(mollify(&f, 0.01), Err(Error::KernelUnderResolved { .. })));
        assert!(matches!(mollify(&f, 1.0), Err(Error::DomainVanishes { .. })));
    }

    #[test]
    fn shrinks_domain() {
        let f = ScalarField::constant(grid(), 2.5);
        let m = mollify(&f, 0.1).unwrap();
        assert_abs_diff_eq!(m.grid().radius(), 0.9, epsilon = 1e-15);
        for (_, v) in m.masked_values() {
            assert_abs_diff_eq!(v, 2.5, epsilon = 1e-13);
        }
    }

    #[test]
    fn linear_functions_are_fixed() {
        let f = ScalarField::from_fn(grid(), |x, y| 1.0 + 2.0 * x - 3.0 * y);
        let m = mollify(&f, 0.1).unwrap();
        for (k, v) in m.masked_values() {
            assert_abs_diff_eq!(v, f.get(k), epsilon = 1e-12);
        }
    }

    #[test]
    fn quadratic_gains_second_moment() {
        // Oracle: m₂ by independent 2-D quadrature of the continuum profile.
        let g = grid();
        let ell = 0.2;
        let f = ScalarField::from_fn(g, |x, y| x * x + y * y);
        let m = mollify(&f, ell).unwrap();
        let kernel = MollifierKernel::new(ell, g.spacing()).unwrap();
        let m2 = kernel.m2(g.spacing());
        for (k, v) in m.masked_values() {
            assert_abs_diff_eq!(v, f.get(k) + m2 * ell * ell, epsilon = 1e-12);
        }
        let continuum_m2 = {
            let steps = 4000;
            let (mut num, mut den) = (0.0, 0.0);
            for s in 0..steps {
                let r = (s as f64 + 0.5) / steps as f64;
                let w = (-1.0 / (1.0 - r * r)).exp() * r;
                num += w * r * r;
                den += w;
            }
            num / den
        };
        assert!((m2 - continuum_m2).abs() < 1e-3, "{m2} vs {continuum_m2}");
    }

    #[test]
    fn commutator_of_coordinate_is_half_second_moment() {
        let g = grid();
        let ell = 0.1;
        let f = ScalarField::from_fn(g, |x, _| x);
        let d = commutator_defect(&f, &f, ell).unwrap();
        let m2 = MollifierKernel::new(ell, g.spacing()).unwrap().m2(g.spacing());
        for (_, v) in d.masked_values() {
            assert_abs_diff_eq!(v, 0.5 * m2 * ell * ell, epsilon = 1e-12);
        }
    }

    #[test]
    fn commutator_with_constant_vanishes() {
        let g = grid();
        let f = ScalarField::from_fn(g, |x, y| (3.0 * x).sin() + y * y);
        let c = ScalarField::constant(g, 1.7);
        assert!(commutator_defect(&f, &c, 0.1).unwrap().sup_norm() < 1e-13);
    }
}
