//! Isothermal coordinates: `h = ρ²(∇Φ₁⊗∇Φ₁ + ∇Φ₂⊗∇Φ₂)` through the
//! Beltrami equation `Φ_z̄ = μ Φ_z`.
//!
//! The Beltrami coefficient of `ξ dx² + 2ζ dx dy + ω dy²` is
//! `μ = (ξ − ω + 2iζ) / (ξ + ω + 2√Δ)` with `Δ = ξω − ζ²`. The equation
//! `Φ_z̄ − μΦ_z = h` is solved by the fixed point `f = h + μ S[f]`,
//! `Φ = C[f]`, on a disk where `μ` and `h` are compactly supported.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{ComplexField, Grid, MetricField, ScalarField, Sym2, Value, VectorField2};
use crate::transform::{wirtinger, TransformPlan};

type C64 = Complex64;

/// Consecutive non-contracting iterations tolerated before giving up.
const NON_CONTRACTION_STREAK: usize = 3;

/// `μ` of an SPD metric; fails on the first non-SPD masked node.
pub fn metric_to_beltrami(g: &MetricField) -> Result<ComplexField> {
    g.check_spd()?;
    Ok(g.map(beltrami_coefficient))
}

fn beltrami_coefficient(m: Sym2) -> C64 {
    let root = m.det().sqrt();
    C64::new(m.xi - m.omega, 2.0 * m.zeta) / (m.xi + m.omega + 2.0 * root)
}

/// `C^∞` step: 1 for `t ≤ 0`, 0 for `t ≥ 1`.
pub fn smooth_step_down(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        let a = (-1.0 / (1.0 - t)).exp();
        let b = (-1.0 / t).exp();
        a / (a + b)
    }
}

/// `η(|z|)`: 1 on `D_inner`, 0 outside `D_outer`.
pub fn cutoff(grid: Grid, inner: f64, outer: f64) -> ScalarField {
    ScalarField::from_fn_masked(grid, |x, y| {
        smooth_step_down(((x * x + y * y).sqrt() - inner) / (outer - inner))
    })
}

/// `Φ_z̄ − μ̃ Φ_z = h` with `μ̃ = cutoff · mu`.
#[derive(Clone, Debug)]
pub struct BeltramiProblem {
    pub mu: ComplexField,
    pub h: ComplexField,
    pub cutoff: ScalarField,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveOptions {
    /// Stop once `‖f_{k+1} − f_k‖₀ ≤ tol · ‖h‖₀`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-12,
            max_iter: 200,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BeltramiSolution {
    pub phi: ComplexField,
    pub f: ComplexField,
    pub iterations: usize,
    /// `‖f_{k+1} − f_k‖₀` per iteration.
    pub increments: Vec<f64>,
    /// Consecutive increment ratios.
    pub ratios: Vec<f64>,
    /// `‖μ̃‖₀`.
    pub beltrami_sup: f64,
    /// `‖Φ_z̄ − μ̃Φ_z − h‖₀` by finite differences.
    pub residual: f64,
}

fn fixed_point(
    mu: &ComplexField,
    h: &ComplexField,
    plan: &TransformPlan,
    opts: &SolveOptions,
) -> Result<(ComplexField, usize, Vec<f64>, Vec<f64>)> {
    let scale = h.sup_norm();
    let mut f = h.clone();
    let mut increments = Vec::new();
    let mut ratios = Vec::new();
    if scale == 0.0 {
        return Ok((f, 0, increments, ratios));
    }
    let mut streak = 0;
    for k in 0..opts.max_iter {
        let s = plan.beurling(&f)?;
        let next = mu.zip_map(&s, |m, sv| m * sv)?.add(h)?;
        let inc = next.sub(&f)?.sup_norm();
        f = next;
        if let Some(&prev) = increments.last() {
            let ratio: f64 = if prev > 0.0 { inc / prev } else { 0.0 };
            ratios.push(ratio);
            streak = if ratio >= 1.0 { streak + 1 } else { 0 };
            if streak >= NON_CONTRACTION_STREAK {
                return Err(Error::NonContraction {
                    iteration: k + 1,
                    ratio,
                });
            }
        }
        increments.push(inc);
        if inc <= opts.tol * scale {
            return Ok((f, k + 1, increments, ratios));
        }
    }
    Err(Error::MaxIterations {
        iterations: opts.max_iter,
        residual: increments.last().copied().unwrap_or(f64::NAN),
    })
}

fn beltrami_residual(phi: &ComplexField, mu: &ComplexField, h: &ComplexField) -> Result<f64> {
    let (dz, dzb) = wirtinger(phi)?;
    let lhs = dzb.sub(&mu.zip_map(&dz, |m, d| m * d)?)?;
    Ok(lhs.sub(h)?.sup_norm())
}

fn effective_mu(p: &BeltramiProblem) -> Result<ComplexField> {
    let mu = p.mu.zip_map(&p.cutoff, |m, c| m * c)?;
    let sup = mu.sup_norm();
    if !(sup < 1.0) {
        return Err(Error::NotElliptic { sup });
    }
    Ok(mu)
}

/// Fixed point `f = h + μ̃ S[f]` from `f₀ = h`, then `Φ = C[f]`.
pub fn solve_beltrami_inhom(
    p: &BeltramiProblem,
    plan: &TransformPlan,
    opts: &SolveOptions,
) -> Result<BeltramiSolution> {
    let mu = effective_mu(p)?;
    let (f, iterations, increments, ratios) = fixed_point(&mu, &p.h, plan, opts)?;
    let phi = plan.cauchy(&f)?;
    let residual = beltrami_residual(&phi, &mu, &p.h)?;
    Ok(BeltramiSolution {
        phi,
        f,
        iterations,
        increments,
        ratios,
        beltrami_sup: mu.sup_norm(),
        residual,
    })
}

/// `Φ(z) = z + φ(z)` with `φ_z̄ − μφ_z = μ`, so that `Φ_z̄ = μΦ_z`. The
/// coefficient must already vanish near the edge of the plan's disk.
pub fn solve_beltrami(mu: &ComplexField, plan: &TransformPlan, opts: &SolveOptions) -> Result<BeltramiSolution> {
    let problem = BeltramiProblem {
        mu: mu.clone(),
        h: mu.clone(),
        cutoff: ScalarField::constant(*mu.grid(), 1.0),
    };
    let m = effective_mu(&problem)?;
    let (f, iterations, increments, ratios) = fixed_point(&m, &m, plan, opts)?;
    let phi = plan.cauchy(&f)?.map_xy(|x, y, v| v + C64::new(x, y));
    let zero = ComplexField::zeros(*mu.grid());
    let residual = beltrami_residual(&phi, &m, &zero)?;
    Ok(BeltramiSolution {
        phi,
        f,
        iterations,
        increments,
        ratios,
        beltrami_sup: m.sup_norm(),
        residual,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorizeOptions {
    pub solve: SolveOptions,
    /// Reject inputs with `‖h − e‖₀` above this.
    pub sigma1: Option<f64>,
}

impl Default for FactorizeOptions {
    fn default() -> Self {
        FactorizeOptions {
            solve: SolveOptions::default(),
            sigma1: Some(0.25),
        }
    }
}

/// `h ≈ ρ²(∇Φ₁⊗∇Φ₁ + ∇Φ₂⊗∇Φ₂)` on the grid of `h`, normalized so that
/// `max ρ = 1`.
#[derive(Clone, Debug)]
pub struct ConformalFactorization {
    pub phi1: ScalarField,
    pub phi2: ScalarField,
    pub grad_phi1: VectorField2,
    pub grad_phi2: VectorField2,
    pub rho: ScalarField,
    pub residual: MetricField,
    pub residual_sup: f64,
    pub iterations: usize,
    pub beltrami_sup: f64,
    pub fixed_point_ratios: Vec<f64>,
    /// Beltrami residual `‖Φ_z̄ − μ̃Φ_z‖₀` on the extension grid.
    pub beltrami_residual: f64,
    /// `max ρ` before normalization; `Φ` was multiplied by it.
    pub normalization: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub jacobian_min: f64,
    /// `‖DΦ − Id‖₀` (Frobenius).
    pub dphi_minus_id: f64,
    pub h_minus_e: f64,
}

impl ConformalFactorization {
    pub fn phi(&self, which: usize) -> &ScalarField {
        if which == 1 {
            &self.phi1
        } else {
            &self.phi2
        }
    }

    pub fn grad(&self, which: usize) -> &VectorField2 {
        if which == 1 {
            &self.grad_phi1
        } else {
            &self.grad_phi2
        }
    }

    /// `ρ² ∇Φ_i ⊗ ∇Φ_i`.
    pub fn primitive(&self, which: usize) -> MetricField {
        let grad = self.grad(which);
        self.rho
            .zip_map(grad, |r, g| Sym2::outer(g) * (r * r))
            .expect("same grid")
    }

    /// `ρ²(∇Φ₁⊗∇Φ₁ + ∇Φ₂⊗∇Φ₂)`.
    pub fn assembled(&self) -> MetricField {
        self.primitive(1).add(&self.primitive(2)).expect("same grid")
    }
}

/// Node values of `f` on its mask plus `layers` rings of ghost nodes
/// outside it, each ghost by quadratic extrapolation along the grid axes
/// toward already known nodes.
fn ghost_fill(f: &ComplexField, layers: usize) -> (Vec<C64>, Vec<bool>) {
    let g = f.grid();
    let n = g.n() as isize;
    let mut vals = f.values().to_vec();
    let mut known: Vec<bool> = (0..g.len()).map(|k| g.is_masked(k)).collect();
    for _ in 0..layers {
        let mut updates = Vec::new();
        for k in 0..g.len() {
            if known[k] {
                continue;
            }
            let (i, j) = g.ij(k);
            let (i, j) = (i as isize, j as isize);
            let mut acc = C64::new(0.0, 0.0);
            let mut count = 0.0;
            for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let at = |step: isize| {
                    let (a, b) = (i + step * di, j + step * dj);
                    if a < 0 || b < 0 || a >= n || b >= n {
                        None
                    } else {
                        let idx = (b * n + a) as usize;
                        known[idx].then(|| vals[idx])
                    }
                };
                if let (Some(v1), Some(v2), Some(v3)) = (at(1), at(2), at(3)) {
                    acc += v1 * 3.0 - v2 * 3.0 + v3;
                    count += 1.0;
                }
            }
            if count > 0.0 {
                updates.push((k, acc / count));
            }
        }
        for (k, v) in updates {
            vals[k] = v;
            known[k] = true;
        }
    }
    (vals, known)
}

/// Bilinear interpolation over known nodes; unknown corners are dropped
/// and the remaining weights renormalized.
fn interpolate_known(g: &Grid, vals: &[C64], known: &[bool], x: f64, y: f64) -> C64 {
    let s = g.spacing();
    let fx = ((x + g.half_width()) / s).clamp(0.0, (g.n() - 1) as f64);
    let fy = ((y + g.half_width()) / s).clamp(0.0, (g.n() - 1) as f64);
    let i = (fx.floor() as usize).min(g.n() - 2);
    let j = (fy.floor() as usize).min(g.n() - 2);
    let (tx, ty) = (fx - i as f64, fy - j as f64);
    let mut acc = C64::new(0.0, 0.0);
    let mut wsum = 0.0;
    for (di, dj, w) in [
        (0, 0, (1.0 - tx) * (1.0 - ty)),
        (1, 0, tx * (1.0 - ty)),
        (0, 1, (1.0 - tx) * ty),
        (1, 1, tx * ty),
    ] {
        let k = g.index(i + di, j + dj);
        if w > 0.0 && known[k] {
            acc += vals[k] * w;
            wsum += w;
        }
    }
    if wsum > 0.0 {
        acc / wsum
    } else {
        C64::new(0.0, 0.0)
    }
}

/// Node-aligned grid with the same spacing whose square covers `D_reach`
/// plus a few cells, and the node offset of the original grid inside it.
fn extension_grid(g: &Grid, reach: f64, radius: f64) -> Result<(Grid, usize)> {
    let s = g.spacing();
    let need = reach + 3.0 * s - g.half_width();
    let m = if need > 0.0 { (need / s).ceil() as usize } else { 0 };
    let aux = Grid::new(g.half_width() + m as f64 * s, g.n() + 2 * m, radius)?;
    Ok((aux, m))
}

/// Conformal factorization of an SPD metric close to the identity.
///
/// The Beltrami coefficient of `h` is continued past `|z| = r` by the
/// `C¹` reflection `4μ(r − t/2) − 3μ(r − t)` at radius `r + t`, blended
/// to zero by `|z| = 5r/4`. A hard cap keeps it elliptic; placing the cap
/// halfway between `sup_{D_r}|μ|` and 1 keeps it from creasing `μ` near
/// the boundary, which would cost an order of accuracy in `DΦ`. The
/// Beltrami equation is then solved on an enlarged node-aligned grid,
/// and `ρ² = √Δ / JΦ` with finite-difference derivatives of `Φ`.
pub fn factorize(h: &MetricField, opts: &FactorizeOptions) -> Result<ConformalFactorization> {
    h.check_spd()?;
    let h_minus_e = h.map(|m| m - Sym2::identity()).sup_norm();
    if let Some(bound) = opts.sigma1 {
        if h_minus_e > bound {
            return Err(Error::SmallnessViolated {
                measured: h_minus_e,
                bound,
            });
        }
    }
    let g = *h.grid();
    let r = g.radius();
    let s = g.spacing();
    let (aux, m) = extension_grid(&g, 1.5 * r, 1.5 * r + 2.0 * s)?;
    let blend_out = 1.25 * r;

    let mu_in = metric_to_beltrami(h)?;
    let mu_cap = 0.5 * (1.0 + mu_in.sup_norm());
    let (vals, known) = ghost_fill(&mu_in, 2);
    let mu = ComplexField::from_fn_masked(aux, |x, y| {
        let rad = (x * x + y * y).sqrt();
        if rad >= blend_out {
            return C64::new(0.0, 0.0);
        }
        if rad <= r {
            if let Some(k) = g.nearest(x, y) {
                if g.is_masked(k) {
                    return mu_in.get(k);
                }
            }
        }
        let t = rad - r;
        let (ux, uy) = (x / rad, y / rad);
        let near = interpolate_known(&g, &vals, &known, ux * (r - 0.5 * t), uy * (r - 0.5 * t));
        let far = interpolate_known(&g, &vals, &known, ux * (r - t), uy * (r - t));
        let mut v = (near * 4.0 - far * 3.0) * smooth_step_down(t / (blend_out - r));
        if v.norm() > mu_cap {
            v *= mu_cap / v.norm();
        }
        v
    });
    let eta = cutoff(aux, r, 1.5 * r);
    let mu = mu.zip_map(&eta, |m, c| m * c)?;

    let plan = TransformPlan::new(aux);
    let sol = solve_beltrami(&mu, &plan, &opts.solve)?;
    let (dx, dy) = sol.phi.partials()?;

    // Back onto the nodes of h.
    let to_aux = |k: usize| {
        let (i, j) = g.ij(k);
        aux.index(i + m, j + m)
    };
    let mut phi1 = vec![0.0; g.len()];
    let mut phi2 = vec![0.0; g.len()];
    let mut d = vec![Matrix2::zeros(); g.len()];
    for k in g.masked_indices() {
        let a = to_aux(k);
        let p = sol.phi.get(a);
        phi1[k] = p.re;
        phi2[k] = p.im;
        let (px, py) = (dx.get(a), dy.get(a));
        d[k] = Matrix2::new(px.re, py.re, px.im, py.im);
    }

    let mut jacobian_min = f64::INFINITY;
    let mut rho_raw = vec![0.0; g.len()];
    for k in g.masked_indices() {
        let jac = d[k].determinant();
        if !(jac > 0.0) {
            return Err(Error::OrientationLoss { node: k, det: jac });
        }
        jacobian_min = jacobian_min.min(jac);
        rho_raw[k] = (h.get(k).det().sqrt() / jac).sqrt();
    }
    let norm = g.masked_indices().into_iter().map(|k| rho_raw[k]).fold(0.0, f64::max);

    let rho = ScalarField::new(g, rho_raw.iter().map(|v| v / norm).collect())?;
    let phi1 = ScalarField::new(g, phi1.iter().map(|v| v * norm).collect())?;
    let phi2 = ScalarField::new(g, phi2.iter().map(|v| v * norm).collect())?;
    let grad_phi1 = VectorField2::new(g, d.iter().map(|m| Vector2::new(m[(0, 0)], m[(0, 1)]) * norm).collect())?;
    let grad_phi2 = VectorField2::new(g, d.iter().map(|m| Vector2::new(m[(1, 0)], m[(1, 1)]) * norm).collect())?;

    let mut out = ConformalFactorization {
        phi1,
        phi2,
        grad_phi1,
        grad_phi2,
        rho,
        residual: MetricField::zeros(g),
        residual_sup: 0.0,
        iterations: sol.iterations,
        beltrami_sup: sol.beltrami_sup,
        fixed_point_ratios: sol.ratios,
        beltrami_residual: sol.residual,
        normalization: norm,
        rho_min: 0.0,
        rho_max: 0.0,
        jacobian_min: jacobian_min * norm * norm,
        dphi_minus_id: 0.0,
        h_minus_e,
    };
    out.residual = h.sub(&out.assembled())?;
    out.residual_sup = out.residual.sup_norm();
    let rho_vals: Vec<f64> = out.rho.masked_values().map(|(_, v)| v).collect();
    out.rho_min = rho_vals.iter().copied().fold(f64::INFINITY, f64::min);
    out.rho_max = rho_vals.iter().copied().fold(0.0, f64::max);
    out.dphi_minus_id = g
        .masked_indices()
        .into_iter()
        .map(|k| (d[k] * norm - Matrix2::identity()).norm())
        .fold(0.0, f64::max);
    Ok(out)
}

/// `e + size·P/‖P‖₀` for a seeded sum of six low-frequency symmetric
/// Fourier modes `P`; SPD whenever `size < 1`.
pub fn random_metric(grid: Grid, size: f64, seed: u64) -> MetricField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<([f64; 2], f64, [f64; 3])> = (0..6)
        .map(|_| {
            let k = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let c = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            (k, rng.random_range(0.0..std::f64::consts::TAU), c)
        })
        .collect();
    let p = MetricField::from_fn(grid, |x, y| {
        modes.iter().fold(Sym2::zero(), |acc, (k, phase, c)| {
            let w = (k[0] * x + k[1] * y + phase).cos();
            acc + Sym2::new(c[0], c[1], c[2]) * w
        })
    });
    let scale = size / p.sup_norm().max(f64::MIN_POSITIVE);
    p.map(|m| Sym2::identity() + m * scale)
}
