//! Finite differences: centred second order in the interior, one-sided
//! second order where the mask cuts the centred stencil.

use nalgebra::{Matrix3x2, Vector2, Vector3};
use rayon::prelude::*;

use super::{Field, Grid, JacobianField, MapField, MetricField, ScalarField, Sym2, Value, VectorField2};
use crate::error::{Error, Result};

/// Smallest admissible ratio of singular values of a Jacobian.
const DEGENERACY_RATIO: f64 = 1e-8;

fn stencil<T: Value>(vals: &[T], mask: &[bool], g: &Grid, idx: usize, step: isize, pos: usize) -> Option<T> {
    let n = g.n() as isize;
    let h = g.spacing();
    let p = pos as isize;
    let ok = |k: isize| {
        let q = p + k;
        q >= 0 && q < n && mask[(idx as isize + k * step) as usize]
    };
    let at = |k: isize| vals[(idx as isize + k * step) as usize];
    let f0 = vals[idx];
    if ok(1) && ok(-1) {
        Some((at(1) - at(-1)) * (0.5 / h))
    } else if ok(1) && ok(2) {
        Some((at(1) * 4.0 - f0 * 3.0 - at(2)) * (0.5 / h))
    } else if ok(-1) && ok(-2) {
        Some((f0 * 3.0 - at(-1) * 4.0 + at(-2)) * (0.5 / h))
    } else if ok(1) {
        Some((at(1) - f0) * (1.0 / h))
    } else if ok(-1) {
        Some((f0 - at(-1)) * (1.0 / h))
    } else {
        None
    }
}

/// Fallback for nodes with no neighbour along the differentiation axis (the
/// extreme points of the disk): extrapolate linearly from the two nodes
/// next to it on the inward side of the other axis.
#[allow(clippy::too_many_arguments)]
fn shifted<T: Value>(
    vals: &[T],
    mask: &[bool],
    g: &Grid,
    idx: usize,
    step: isize,
    pos: usize,
    cross_step: isize,
    cross_pos: usize,
) -> Option<T> {
    let inward: isize = if g.coord(cross_pos) > 0.0 { -1 } else { 1 };
    let n = g.n() as isize;
    let at = |m: isize| -> Option<T> {
        let q = cross_pos as isize + m * inward;
        if q < 0 || q >= n {
            return None;
        }
        let k = (idx as isize + m * inward * cross_step) as usize;
        if !mask[k] {
            return None;
        }
        stencil(vals, mask, g, k, step, pos)
    };
    Some(at(1)? * 2.0 - at(2)?)
}

impl<T: Value> Field<T> {
    /// `(∂₁f, ∂₂f)` at every masked node.
    pub fn partials(&self) -> Result<(Field<T>, Field<T>)> {
        let g = *self.grid();
        let mask = g.mask();
        let n = g.n();
        let vals = self.values();
        let pairs: Vec<Option<(T, T)>> = (0..g.len())
            .into_par_iter()
            .map(|k| {
                if !mask[k] {
                    return Some((T::zero(), T::zero()));
                }
                let (i, j) = g.ij(k);
                let dx =
                    stencil(vals, &mask, &g, k, 1, i).or_else(|| shifted(vals, &mask, &g, k, 1, i, n as isize, j))?;
                let dy = stencil(vals, &mask, &g, k, n as isize, j)
                    .or_else(|| shifted(vals, &mask, &g, k, n as isize, j, 1, i))?;
                Some((dx, dy))
            })
            .collect();
        let mut dx = Vec::with_capacity(g.len());
        let mut dy = Vec::with_capacity(g.len());
        for (k, p) in pairs.into_iter().enumerate() {
            match p {
                Some((a, b)) => {
                    dx.push(a);
                    dy.push(b);
                }
                None => {
                    let (x, y) = g.point(k);
                    return Err(Error::DegenerateJacobian { node: k, x, y });
                }
            }
        }
        Ok((Field::new(g, dx)?, Field::new(g, dy)?))
    }

    /// `sup |Df|` over masked nodes.
    pub fn derivative_sup(&self) -> Result<f64> {
        let (a, b) = self.partials()?;
        let g = *self.grid();
        Ok((0..g.len())
            .filter(|&k| g.is_masked(k))
            .map(|k| (a.get(k).norm().powi(2) + b.get(k).norm().powi(2)).sqrt())
            .fold(0.0, f64::max))
    }
}

impl ScalarField {
    pub fn gradient(&self) -> Result<VectorField2> {
        let (a, b) = self.partials()?;
        a.zip_map(&b, Vector2::new)
    }
}

pub fn jacobian(u: &MapField) -> Result<JacobianField> {
    let (a, b) = u.partials()?;
    a.zip_map(&b, |d1, d2| Matrix3x2::from_columns(&[d1, d2]))
}

pub fn pullback_of_jacobian(jac: &JacobianField) -> MetricField {
    jac.map(|j| {
        let d1 = j.column(0);
        let d2 = j.column(1);
        Sym2::new(d1.dot(&d1), d1.dot(&d2), d2.dot(&d2))
    })
}

/// `Du^T Du`.
pub fn pullback(u: &MapField) -> Result<MetricField> {
    Ok(pullback_of_jacobian(&jacobian(u)?))
}

/// `sup |D²u|` (Frobenius over all second partials and components).
pub fn hessian_sup<T: Value>(u: &Field<T>) -> Result<f64> {
    let (a, b) = u.partials()?;
    let (aa, ab) = a.partials()?;
    let (ba, bb) = b.partials()?;
    let g = *u.grid();
    Ok((0..g.len())
        .filter(|&k| g.is_masked(k))
        .map(|k| {
            (aa.get(k).norm().powi(2) + ab.get(k).norm().powi(2) + ba.get(k).norm().powi(2) + bb.get(k).norm().powi(2))
                .sqrt()
        })
        .fold(0.0, f64::max))
}

/// The corrugation frame attached to a map and a covector direction.
#[derive(Clone, Debug)]
pub struct Frame {
    /// `τ = Dw (DwᵀDw)⁻¹ dir`.
    pub tau: MapField,
    /// Unit normal `∂₁w × ∂₂w / |∂₁w × ∂₂w|`.
    pub nu: MapField,
    /// `t = τ / |τ|²`.
    pub t: MapField,
    /// `n = ν / |τ|`.
    pub nmrl: MapField,
}

pub fn frame(w: &MapField, dir: &VectorField2) -> Result<Frame> {
    frame_from_jacobian(&jacobian(w)?, dir)
}

pub fn frame_from_jacobian(jac: &JacobianField, dir: &VectorField2) -> Result<Frame> {
    let g = super::common_grid(jac.grid(), dir.grid())?;
    let per_node: Vec<Option<[Vector3<f64>; 4]>> = (0..g.len())
        .into_par_iter()
        .map(|k| {
            if !g.is_masked(k) {
                return Some([Vector3::zeros(); 4]);
            }
            let j = jac.get(k);
            let d = dir.get(k);
            let gram = j.transpose() * j;
            let m = Sym2::from_matrix(&gram);
            let (lo, hi) = (m.min_eig(), m.max_eig());
            if !(hi > 0.0) || lo < DEGENERACY_RATIO * DEGENERACY_RATIO * hi {
                return None;
            }
            let coeff = gram.try_inverse()? * d;
            let tau = j * coeff;
            let cross = j.column(0).cross(&j.column(1));
            let nu = cross / cross.norm();
            let tn = tau.norm();
            if !(tn > 0.0) {
                return None;
            }
            Some([tau, nu, tau / (tn * tn), nu / tn])
        })
        .collect();
    let mut parts: [Vec<Vector3<f64>>; 4] = Default::default();
    for (k, p) in per_node.into_iter().enumerate() {
        match p {
            Some(v) => {
                for (dst, val) in parts.iter_mut().zip(v) {
                    dst.push(val);
                }
            }
            None => {
                let (x, y) = g.point(k);
                return Err(Error::DegenerateJacobian { node: k, x, y });
            }
        }
    }
    let [tau, nu, t, nmrl] = parts;
    Ok(Frame {
        tau: Field::new(g, tau)?,
        nu: Field::new(g, nu)?,
        t: Field::new(g, t)?,
        nmrl: Field::new(g, nmrl)?,
    })
}
