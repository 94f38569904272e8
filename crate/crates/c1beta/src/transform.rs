//! Cauchy and Beurling transforms on a disk.
//!
//! ```text
//! C[f](z₀) = −(1/π) ∫_D f(z) / (z − z₀) dA
//! S[f](z₀) = −(1/π) p.v.∫_D f(z) / (z − z₀)² dA
//! ```
//!
//! Quadrature: one cell per node, weighted by the exact area of the cell
//! inside the disk. The kernel is integrated exactly over the cell holding
//! `z₀` and its eight neighbours and sampled at cell centres elsewhere. For
//! the Beurling kernel the centre cell contributes nothing: its principal
//! value over a centred square vanishes by symmetry.
//!
//! The weights depend only on the node offset, so a transform of a whole
//! field is a discrete convolution. [`TransformPlan`] evaluates it with a
//! zero-padded FFT; [`cauchy`] and [`beurling`] sum directly and serve as
//! the reference.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{ComplexField, Grid};

type C64 = Complex64;

/// `∫ dA / w` over the unit square centred at `p + iq`, for `|p|, |q| ≤ 1`.
fn near_inverse(p: i32, q: i32) -> C64 {
    near(p, q, 1)
}

/// `∫ dA / w²` over the unit square centred at `p + iq` (principal value
/// for the centre square), for `|p|, |q| ≤ 1`.
fn near_inverse_sq(p: i32, q: i32) -> C64 {
    near(p, q, 2)
}

fn corner_sum(cx: f64, cy: f64, anti: impl Fn(C64) -> C64) -> C64 {
    let a = |x: f64, y: f64| anti(C64::new(x, y));
    let (x0, x1, y0, y1) = (cx - 0.5, cx + 0.5, cy - 0.5, cy + 0.5);
    a(x1, y1) - a(x1, y0) - a(x0, y1) + a(x0, y0)
}

/// Right-half-plane squares by antiderivative corner sums; the rest by the
/// symmetries `w → −w`, `w → w̄`, `w → iw`.
fn near(p: i32, q: i32, power: u8) -> C64 {
    let i = C64::new(0.0, 1.0);
    // Antiderivatives A with ∂x∂y A = w^{−power}: −i(w ln w − w) and i ln w.
    let direct = |cx: f64, cy: f64| match power {
        1 => corner_sum(cx, cy, |w| -i * (w * w.ln() - w)),
        _ => corner_sum(cx, cy, |w| i * w.ln()),
    };
    let odd = power == 1;
    match (p, q) {
        (0, 0) => C64::new(0.0, 0.0),
        (1, 0) | (1, 1) => direct(1.0, q as f64),
        (1, -1) => near(1, 1, power).conj(),
        (-1, _) => {
            let v = near(1, -q, power);
            if odd {
                -v
            } else {
                v
            }
        }
        (0, 1) => {
            // square(0,1) = i·square(1,0): w^{−1} → −i w^{−1}, w^{−2} → −w^{−2}
            let v = near(1, 0, power);
            if odd {
                -i * v
            } else {
                -v
            }
        }
        (0, -1) => near(0, 1, power).conj(),
        _ => unreachable!("near-field offset ({p}, {q})"),
    }
}

/// Weight of source offset `(p, q)` (in cells) for the Cauchy transform.
fn cauchy_weight(p: i32, q: i32, h: f64) -> C64 {
    if p.abs() <= 1 && q.abs() <= 1 {
        near_inverse(p, q) * (-h / PI)
    } else {
        C64::new(p as f64, q as f64).inv() * (-h / PI)
    }
}

/// Weight of source offset `(p, q)` for the Beurling transform.
fn beurling_weight(p: i32, q: i32) -> C64 {
    if p.abs() <= 1 && q.abs() <= 1 {
        near_inverse_sq(p, q) * (-1.0 / PI)
    } else {
        let d = C64::new(p as f64, q as f64);
        (d * d).inv() * (-1.0 / PI)
    }
}

/// `∫ √(r² − x²) dx`.
fn semicircle_primitive(x: f64, r: f64) -> f64 {
    let x = x.clamp(-r, r);
    0.5 * (x * (r * r - x * x).max(0.0).sqrt() + r * r * (x / r).asin())
}

/// Exact area of `[x0, x1] × [y0, y1] ∩ D_r`.
pub fn rect_disk_area(x0: f64, x1: f64, y0: f64, y1: f64, r: f64) -> f64 {
    let (a, b) = (x0.max(-r), x1.min(r));
    if a >= b {
        return 0.0;
    }
    let mut cuts = vec![a, b];
    for y in [y0, y1] {
        if y.abs() < r {
            let x = (r * r - y * y).sqrt();
            for c in [-x, x] {
                if c > a && c < b {
                    cuts.push(c);
                }
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    let mut area = 0.0;
    for w in cuts.windows(2) {
        let (l, u) = (w[0], w[1]);
        if u <= l {
            continue;
        }
        // On each piece the upper and lower clip are each either a constant
        // or ±√(r² − x²); decide which at the midpoint.
        let m = 0.5 * (l + u);
        let s = (r * r - m * m).max(0.0).sqrt();
        if s.min(y1) <= (-s).max(y0) {
            continue;
        }
        let arc = semicircle_primitive(u, r) - semicircle_primitive(l, r);
        let upper = if s < y1 { arc } else { y1 * (u - l) };
        let lower = if -s > y0 { -arc } else { y0 * (u - l) };
        area += upper - lower;
    }
    area
}

/// Fraction of each node's cell that lies inside the grid's disk.
pub fn coverage(grid: &Grid) -> Vec<f64> {
    let h = grid.spacing();
    let r = grid.radius();
    (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let (x, y) = grid.point(k);
            let near = ((x.abs() - 0.5 * h).max(0.0).powi(2) + (y.abs() - 0.5 * h).max(0.0).powi(2)).sqrt();
            let far = ((x.abs() + 0.5 * h).powi(2) + (y.abs() + 0.5 * h).powi(2)).sqrt();
            if far <= r {
                1.0
            } else if near >= r {
                0.0
            } else {
                rect_disk_area(x - 0.5 * h, x + 0.5 * h, y - 0.5 * h, y + 0.5 * h, r) / (h * h)
            }
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Kernel {
    Cauchy,
    Beurling,
}

fn weight(kind: Kernel, p: i32, q: i32, h: f64) -> C64 {
    match kind {
        Kernel::Cauchy => cauchy_weight(p, q, h),
        Kernel::Beurling => beurling_weight(p, q),
    }
}

fn direct(kind: Kernel, f: &ComplexField, at: &[usize]) -> Result<Vec<C64>> {
    let g = f.grid();
    let h = g.spacing();
    let cov = coverage(g);
    let sources: Vec<(i32, i32, C64)> = (0..g.len())
        .filter(|&k| cov[k] > 0.0)
        .map(|k| {
            let (i, j) = g.ij(k);
            (i as i32, j as i32, f.get(k) * cov[k])
        })
        .collect();
    for &k in at {
        if k >= g.len() || !g.is_masked(k) {
            return Err(Error::NodeOutsideDomain { node: k });
        }
    }
    Ok(at
        .par_iter()
        .map(|&k| {
            let (i0, j0) = g.ij(k);
            let (i0, j0) = (i0 as i32, j0 as i32);
            sources
                .iter()
                .map(|&(i, j, v)| v * weight(kind, i - i0, j - j0, h))
                .sum()
        })
        .collect())
}

/// `C[f]` at the given masked nodes of `f`'s grid, by direct summation.
pub fn cauchy(f: &ComplexField, at: &[usize]) -> Result<Vec<C64>> {
    direct(Kernel::Cauchy, f, at)
}

/// `S[f]` at the given masked nodes of `f`'s grid, by direct summation.
pub fn beurling(f: &ComplexField, at: &[usize]) -> Result<Vec<C64>> {
    direct(Kernel::Beurling, f, at)
}

/// `(∂_z f, ∂_z̄ f)` by finite differences.
pub fn wirtinger(f: &ComplexField) -> Result<(ComplexField, ComplexField)> {
    let (fx, fy) = f.partials()?;
    let i = C64::new(0.0, 1.0);
    let dz = fx.zip_map(&fy, |a, b| (a - i * b) * 0.5)?;
    let dzb = fx.zip_map(&fy, |a, b| (a + i * b) * 0.5)?;
    Ok((dz, dzb))
}

/// Smallest `2^a 3^b ≥ n`.
fn fft_size(n: usize) -> usize {
    let mut best = usize::MAX;
    let mut p2 = 1usize;
    while p2 < 2 * n {
        let mut m = p2;
        while m < n {
            m *= 3;
        }
        best = best.min(m);
        p2 *= 2;
    }
    best
}

fn transpose(src: &[C64], dst: &mut [C64], m: usize) {
    const B: usize = 32;
    for bi in (0..m).step_by(B) {
        for bj in (0..m).step_by(B) {
            for i in bi..(bi + B).min(m) {
                for j in bj..(bj + B).min(m) {
                    dst[j * m + i] = src[i * m + j];
                }
            }
        }
    }
}

/// Cached FFT machinery for transforms of whole fields on one grid.
pub struct TransformPlan {
    grid: Grid,
    coverage: Vec<f64>,
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    cauchy_hat: Vec<C64>,
    beurling_hat: Vec<C64>,
}

impl std::fmt::Debug for TransformPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransformPlan")
            .field("grid", &self.grid)
            .field("fft_size", &self.m)
            .finish()
    }
}

impl TransformPlan {
    pub fn new(grid: Grid) -> Self {
        let n = grid.n();
        let m = fft_size(2 * n - 1);
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let mut plan = TransformPlan {
            grid,
            coverage: coverage(&grid),
            m,
            forward,
            inverse,
            cauchy_hat: Vec::new(),
            beurling_hat: Vec::new(),
        };
        plan.cauchy_hat = plan.kernel_spectrum(Kernel::Cauchy);
        plan.beurling_hat = plan.kernel_spectrum(Kernel::Beurling);
        plan
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn fft_size(&self) -> usize {
        self.m
    }

    /// Spectrum of `K̃[d] = W[−d]`, wrapped onto the `m × m` torus.
    fn kernel_spectrum(&self, kind: Kernel) -> Vec<C64> {
        let n = self.grid.n() as i32;
        let m = self.m;
        let h = self.grid.spacing();
        let mut buf = vec![C64::new(0.0, 0.0); m * m];
        for dj in -(n - 1)..n {
            for di in -(n - 1)..n {
                let row = dj.rem_euclid(m as i32) as usize;
                let col = di.rem_euclid(m as i32) as usize;
                buf[row * m + col] = weight(kind, -di, -dj, h);
            }
        }
        self.fft2(&mut buf, false);
        buf
    }

    /// 2-D FFT. The forward transform leaves the spectrum transposed; the
    /// inverse expects that layout and restores the original orientation.
    fn fft2(&self, buf: &mut Vec<C64>, inverse: bool) {
        let m = self.m;
        let fft = if inverse { &self.inverse } else { &self.forward };
        let mut tmp = vec![C64::new(0.0, 0.0); m * m];
        buf.par_chunks_mut(m).for_each(|row| fft.process(row));
        transpose(buf, &mut tmp, m);
        tmp.par_chunks_mut(m).for_each(|row| fft.process(row));
        std::mem::swap(buf, &mut tmp);
    }

    fn apply(&self, f: &ComplexField, spectrum: &[C64]) -> Result<ComplexField> {
        if !f.grid().same_nodes(&self.grid) {
            return Err(Error::GridMismatch);
        }
        let n = self.grid.n();
        let m = self.m;
        let mut buf = vec![C64::new(0.0, 0.0); m * m];
        for j in 0..n {
            for i in 0..n {
                let k = j * n + i;
                buf[j * m + i] = f.get(k) * self.coverage[k];
            }
        }
        self.fft2(&mut buf, false);
        buf.par_iter_mut().zip(spectrum.par_iter()).for_each(|(a, b)| *a *= *b);
        self.fft2(&mut buf, true);
        let scale = 1.0 / (m * m) as f64;
        let out = self.grid;
        ComplexField::new(
            out,
            (0..out.len())
                .map(|k| {
                    if out.is_masked(k) {
                        let (i, j) = out.ij(k);
                        buf[j * m + i] * scale
                    } else {
                        C64::new(0.0, 0.0)
                    }
                })
                .collect(),
        )
    }

    /// `C[f]` at every masked node.
    pub fn cauchy(&self, f: &ComplexField) -> Result<ComplexField> {
        self.apply(f, &self.cauchy_hat)
    }

    /// `S[f]` at every masked node.
    pub fn beurling(&self, f: &ComplexField) -> Result<ComplexField> {
        self.apply(f, &self.beurling_hat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Midpoint sum over a fine subdivision of the unit square at `(p, q)`.
    fn brute(p: i32, q: i32, power: i32, sub: usize) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        let d = 1.0 / sub as f64;
        for a in 0..sub {
            for b in 0..sub {
                let w = C64::new(
                    p as f64 - 0.5 + (a as f64 + 0.5) * d,
                    q as f64 - 0.5 + (b as f64 + 0.5) * d,
                );
                acc += w.powi(-power) * d * d;
            }
        }
        acc
    }

    #[test]
    fn near_integrals_match_subdivision() {
        for p in -1..=1 {
            for q in -1..=1 {
                if (p, q) == (0, 0) {
                    continue;
                }
                let (e1, e2) = (near_inverse(p, q), near_inverse_sq(p, q));
                let (b1, b2) = (brute(p, q, 1, 800), brute(p, q, 2, 800));
                assert!((e1 - b1).norm() < 1e-5, "1/w at ({p},{q}): {e1} vs {b1}");
                assert!((e2 - b2).norm() < 1e-5, "1/w² at ({p},{q}): {e2} vs {b2}");
            }
        }
    }

    #[test]
    fn centre_cell_vanishes_by_symmetry() {
        // Even subdivision keeps the origin off every sample point.
        assert!(brute(0, 0, 1, 400).norm() < 1e-12);
        assert!(brute(0, 0, 2, 400).norm() < 1e-9);
    }

    #[test]
    fn coverage_sums_to_disk_area() {
        let g = Grid::new(1.2, 61, 1.0).unwrap();
        let h = g.spacing();
        let total: f64 = coverage(&g).iter().sum::<f64>() * h * h;
        assert_abs_diff_eq!(total, PI, epsilon = 1e-12);
    }

    #[test]
    fn rect_area_cases() {
        assert_abs_diff_eq!(rect_disk_area(-2.0, 2.0, -2.0, 2.0, 1.0), PI, epsilon = 1e-14);
        assert_abs_diff_eq!(rect_disk_area(0.0, 2.0, 0.0, 2.0, 1.0), PI / 4.0, epsilon = 1e-14);
        assert_abs_diff_eq!(rect_disk_area(-0.1, 0.1, -0.1, 0.1, 1.0), 0.04, epsilon = 1e-15);
        assert_eq!(rect_disk_area(1.0, 2.0, 1.0, 2.0, 1.0), 0.0);
    }

    #[test]
    fn fft_sizes() {
        assert_eq!(fft_size(511), 512);
        assert_eq!(fft_size(1023), 1024);
        assert_eq!(fft_size(1025), 1152);
    }

    #[test]
    fn fft_matches_direct_sum() {
        let g = Grid::disk(1.0, 41).unwrap();
        let f = ComplexField::from_fn(g, |x, y| C64::new((2.0 * x).sin() + y, x * y - 0.3));
        let plan = TransformPlan::new(g);
        let nodes = g.masked_indices();
        let fc = plan.cauchy(&f).unwrap();
        let fs = plan.beurling(&f).unwrap();
        let dc = cauchy(&f, &nodes).unwrap();
        let ds = beurling(&f, &nodes).unwrap();
        for (idx, &k) in nodes.iter().enumerate() {
            assert!((fc.get(k) - dc[idx]).norm() < 1e-10);
            assert!((fs.get(k) - ds[idx]).norm() < 1e-10);
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let g = Grid::disk(1.0, 21).unwrap();
        let plan = TransformPlan::new(g);
        let z = ComplexField::zeros(g);
        assert_eq!(plan.cauchy(&z).unwrap().sup_norm(), 0.0);
        assert_eq!(plan.beurling(&z).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn outside_nodes_rejected() {
        let g = Grid::disk(1.0, 21).unwrap();
        let f = ComplexField::constant(g, C64::new(1.0, 0.0));
        assert!(matches!(cauchy(&f, &[0]), Err(Error::NodeOutsideDomain { node: 0 })));
    }

    #[test]
    fn wirtinger_examples() {
        let g = Grid::disk(1.0, 21).unwrap();
        let z = ComplexField::from_fn(g, C64::new);
        let zb = ComplexField::from_fn(g, |x, y| C64::new(x, -y));
        let r2 = ComplexField::from_fn(g, |x, y| C64::new(x * x + y * y, 0.0));
        let (a, b) = wirtinger(&z).unwrap();
        let (c, d) = wirtinger(&zb).unwrap();
        let (e, f) = wirtinger(&r2).unwrap();
        for k in g.masked_indices() {
            let (x, y) = g.point(k);
            assert!((a.get(k) - 1.0).norm() < 1e-12 && b.get(k).norm() < 1e-12);
            assert!(c.get(k).norm() < 1e-12 && (d.get(k) - 1.0).norm() < 1e-12);
            assert!((e.get(k) - C64::new(x, -y)).norm() < 1e-12);
            assert!((f.get(k) - C64::new(x, y)).norm() < 1e-12);
        }
    }
}
