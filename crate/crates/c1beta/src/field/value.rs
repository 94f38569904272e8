use std::fmt::Debug;
use std::ops::{Add, Mul, Sub};

use nalgebra::{Matrix2, Matrix3x2, Vector2, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Per-node payload of a [`Field`](super::Field).
pub trait Value:
    Copy + Send + Sync + Debug + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + 'static
{
    /// Number of reals in the flat representation.
    const COMPONENTS: usize;

    fn zero() -> Self;

    /// Euclidean (Frobenius) magnitude.
    fn norm(&self) -> f64;

    fn push_components(&self, out: &mut Vec<f64>);

    /// Inverse of [`push_components`](Value::push_components); `c` has
    /// exactly `COMPONENTS` entries.
    fn from_components(c: &[f64]) -> Self;

    fn is_finite(&self) -> bool {
        let mut v = Vec::with_capacity(Self::COMPONENTS);
        self.push_components(&mut v);
        v.iter().all(|x| x.is_finite())
    }
}

impl Value for f64 {
    const COMPONENTS: usize = 1;
    fn zero() -> Self {
        0.0
    }
    fn norm(&self) -> f64 {
        self.abs()
    }
    fn push_components(&self, out: &mut Vec<f64>) {
        out.push(*self);
    }
    fn from_components(c: &[f64]) -> Self {
        c[0]
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

impl Value for Complex64 {
    const COMPONENTS: usize = 2;
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn norm(&self) -> f64 {
        Complex64::norm(*self)
    }
    fn push_components(&self, out: &mut Vec<f64>) {
        out.extend([self.re, self.im]);
    }
    fn from_components(c: &[f64]) -> Self {
        Complex64::new(c[0], c[1])
    }
}

impl Value for Vector2<f64> {
    const COMPONENTS: usize = 2;
    fn zero() -> Self {
        Vector2::zeros()
    }
    fn norm(&self) -> f64 {
        nalgebra::Matrix::norm(self)
    }
    fn push_components(&self, out: &mut Vec<f64>) {
        out.extend(self.iter());
    }
    fn from_components(c: &[f64]) -> Self {
        Vector2::new(c[0], c[1])
    }
}

impl Value for Vector3<f64> {
    const COMPONENTS: usize = 3;
    fn zero() -> Self {
        Vector3::zeros()
    }
    fn norm(&self) -> f64 {
        nalgebra::Matrix::norm(self)
    }
    fn push_components(&self, out: &mut Vec<f64>) {
        out.extend(self.iter());
    }
    fn from_components(c: &[f64]) -> Self {
        Vector3::new(c[0], c[1], c[2])
    }
}

impl Value for Matrix3x2<f64> {
    const COMPONENTS: usize = 6;
    fn zero() -> Self {
        Matrix3x2::zeros()
    }
    fn norm(&self) -> f64 {
        nalgebra::Matrix::norm(self)
    }
    /// Column-major: `∂₁u` then `∂₂u`.
    fn push_components(&self, out: &mut Vec<f64>) {
        out.extend(self.iter());
    }
    fn from_components(c: &[f64]) -> Self {
        Matrix3x2::from_column_slice(c)
    }
}

/// Symmetric 2×2 tensor `ξ dx² + 2ζ dx dy + ω dy²`.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Sym2 {
    pub xi: f64,
    pub zeta: f64,
    pub omega: f64,
}

impl Sym2 {
    pub const fn new(xi: f64, zeta: f64, omega: f64) -> Self {
        Sym2 { xi, zeta, omega }
    }

    pub const fn identity() -> Self {
        Sym2::new(1.0, 0.0, 1.0)
    }

    /// `v ⊗ v`.
    pub fn outer(v: Vector2<f64>) -> Self {
        Sym2::new(v.x * v.x, v.x * v.y, v.y * v.y)
    }

    pub fn from_matrix(m: &Matrix2<f64>) -> Self {
        Sym2::new(m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)])
    }

    pub fn to_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.xi, self.zeta, self.zeta, self.omega)
    }

    pub fn det(&self) -> f64 {
        self.xi * self.omega - self.zeta * self.zeta
    }

    pub fn trace(&self) -> f64 {
        self.xi + self.omega
    }

    fn eig_radius(&self) -> f64 {
        (0.25 * (self.xi - self.omega).powi(2) + self.zeta * self.zeta).sqrt()
    }

    pub fn min_eig(&self) -> f64 {
        0.5 * self.trace() - self.eig_radius()
    }

    pub fn max_eig(&self) -> f64 {
        0.5 * self.trace() + self.eig_radius()
    }

    pub fn is_spd(&self) -> bool {
        self.xi > 0.0 && self.det() > 0.0
    }

    /// Quadratic form `vᵀ M v`.
    pub fn quad(&self, v: Vector2<f64>) -> f64 {
        self.xi * v.x * v.x + 2.0 * self.zeta * v.x * v.y + self.omega * v.y * v.y
    }
}

impl Add for Sym2 {
    type Output = Sym2;
    fn add(self, o: Sym2) -> Sym2 {
        Sym2::new(self.xi + o.xi, self.zeta + o.zeta, self.omega + o.omega)
    }
}

impl Sub for Sym2 {
    type Output = Sym2;
    fn sub(self, o: Sym2) -> Sym2 {
        Sym2::new(self.xi - o.xi, self.zeta - o.zeta, self.omega - o.omega)
    }
}

impl Mul<f64> for Sym2 {
    type Output = Sym2;
    fn mul(self, s: f64) -> Sym2 {
        Sym2::new(self.xi * s, self.zeta * s, self.omega * s)
    }
}

impl Value for Sym2 {
    const COMPONENTS: usize = 3;
    fn zero() -> Self {
        Sym2::default()
    }
    fn norm(&self) -> f64 {
        (self.xi * self.xi + 2.0 * self.zeta * self.zeta + self.omega * self.omega).sqrt()
    }
    fn push_components(&self, out: &mut Vec<f64>) {
        out.extend([self.xi, self.zeta, self.omega]);
    }
    fn from_components(c: &[f64]) -> Self {
        Sym2::new(c[0], c[1], c[2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_of_diagonal() {
        let m = Sym2::new(4.0, 0.0, 1.0);
        assert_eq!(m.min_eig(), 1.0);
        assert_eq!(m.max_eig(), 4.0);
        assert_eq!(m.det(), 4.0);
    }

    #[test]
    fn spd_detection() {
        assert!(Sym2::identity().is_spd());
        assert!(!Sym2::new(1.0, 1.0, 1.0).is_spd());
        assert!(!Sym2::new(-1.0, 0.0, -1.0).is_spd());
    }

    #[test]
    fn outer_product_is_rank_one() {
        let m = Sym2::outer(Vector2::new(3.0, -2.0));
        assert_eq!(m.det(), 0.0);
        assert_eq!(m.quad(Vector2::new(2.0, 3.0)), 0.0);
    }

    #[test]
    fn component_round_trip() {
        let j = Matrix3x2::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0);
        let mut c = Vec::new();
        j.push_components(&mut c);
        assert_eq!(Matrix3x2::from_components(&c), j);
        let s = Sym2::new(1.0, 2.0, 3.0);
        c.clear();
        s.push_components(&mut c);
        assert_eq!(Sym2::from_components(&c), s);
    }
}
