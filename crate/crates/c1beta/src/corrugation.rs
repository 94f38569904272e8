//! The corrugation profile `Γ = (Γ^t, Γ^n)`.
//!
//! With `A = √(1+s²)` and `f = f(s)` fixed by `J₀(f) = 1/A`,
//!
//! ```text
//! ∂_ξΓ^t + i ∂_ξΓ^n = A e^{i f sin ξ} − 1,
//! ```
//!
//! so `(1 + ∂_ξΓ^t)² + (∂_ξΓ^n)² = 1 + s²` holds pointwise and the mean of
//! the right-hand side over a period vanishes, which makes `Γ` 2π-periodic.

use std::f64::consts::{PI, SQRT_2, TAU};
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use serde::Serialize;

use crate::error::{Error, Result};

/// First positive zero of `J₀`.
pub const J0_FIRST_ZERO: f64 = 2.404_825_557_695_773;

/// `f` at the amplitude cap is `0.9` of the way to the `s` where `f = 2`.
const F_AT_CAP_REFERENCE: f64 = 2.0;
const CAP_FRACTION: f64 = 0.9;

const DEFAULT_ORDER: usize = 16;
const MAX_PANEL: f64 = PI / 2.0;

fn series(x: f64, first: f64, denom: impl Fn(u32) -> f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = first;
    let mut sum = first;
    for k in 1..60 {
        term *= q / denom(k);
        sum += term;
        if term.abs() <= 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// `J₀(x)` by its power series; accurate to rounding for `|x| ≤ 3`.
pub fn bessel_j0(x: f64) -> f64 {
    series(x, 1.0, |k| (k * k) as f64)
}

/// `J₁(x)` by its power series; accurate to rounding for `|x| ≤ 3`.
pub fn bessel_j1(x: f64) -> f64 {
    series(x, 0.5 * x, |k| (k * (k + 1)) as f64)
}

/// `1 − J₀(x)` without cancellation at small `x`.
fn one_minus_j0(x: f64) -> f64 {
    let q = -0.25 * x * x;
    // Series of J₀ from k = 1 on, negated.
    -series(x, q, |k| ((k + 1) * (k + 1)) as f64)
}

/// Solves `1 − J₀(f) = deficit` on `[0, j₀,₁)` by Newton's method, falling
/// back to bisection whenever a step leaves the bracket. Working with the
/// deficit keeps full relative precision for small amplitudes.
fn invert_j0_deficit(deficit: f64) -> f64 {
    if deficit <= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, J0_FIRST_ZERO);
    let mut x = (4.0 * deficit).sqrt().min(0.5 * (lo + hi));
    for _ in 0..200 {
        let r = one_minus_j0(x) - deficit;
        if r < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = bessel_j1(x);
        let mut next = if d != 0.0 { x - r / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 2.0 * f64::EPSILON * x || hi - lo <= 4.0 * f64::EPSILON * hi {
            return next;
        }
        x = next;
    }
    x
}

/// The profile family, parameterized by the amplitude `s ∈ [0, s_max]`.
#[derive(Clone, Debug)]
pub struct CorrugationProfile {
    s_max: f64,
    /// Gauss–Legendre nodes and weights on `[-1, 1]`.
    rule: Vec<(f64, f64)>,
}

impl Default for CorrugationProfile {
    fn default() -> Self {
        Self::with_order(DEFAULT_ORDER)
    }
}

impl CorrugationProfile {
    pub fn new() -> Self {
        Self::default()
    }

    /// Quadrature with `order` points per panel of length at most `π/2`.
    pub fn with_order(order: usize) -> Self {
        let order = NonZeroUsize::new(order.max(1)).expect("nonzero");
        let rule = GaussLegendre::new(order).as_node_weight_pairs().to_vec();
        let j0 = bessel_j0(F_AT_CAP_REFERENCE);
        let s_ref = (1.0 / (j0 * j0) - 1.0).sqrt();
        CorrugationProfile {
            s_max: CAP_FRACTION * s_ref,
            rule,
        }
    }

    /// Overrides the amplitude cap; it must keep `f(s_max) < j₀,₁`.
    pub fn with_s_max(mut self, s_max: f64) -> Result<Self> {
        if !(s_max > 0.0 && s_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("s_max must be positive, got {s_max}")));
        }
        self.s_max = s_max;
        Ok(self)
    }

    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    pub fn order(&self) -> usize {
        self.rule.len()
    }

    fn check(&self, s: f64) -> Result<()> {
        if !(0.0..=self.s_max).contains(&s) {
            return Err(Error::AmplitudeOutOfRange { s, s_max: self.s_max });
        }
        Ok(())
    }

    /// `f(s)` with `J₀(f(s))·√(1+s²) = 1`.
    pub fn amplitude_f(&self, s: f64) -> Result<f64> {
        self.check(s)?;
        let a = (1.0 + s * s).sqrt();
        // 1 − 1/A written without cancellation.
        Ok(invert_j0_deficit(s * s / (a * (1.0 + a))))
    }

    /// Everything that depends on `s` alone.
    pub fn at(&self, s: f64) -> Result<ProfileAt<'_>> {
        let f = self.amplitude_f(s)?;
        let a = (1.0 + s * s).sqrt();
        let df = if s < 1e-6 {
            // f = √2 s (1 − 5s²/16 + …); the quotient below loses digits here.
            SQRT_2 * (1.0 - 0.9375 * s * s)
        } else {
            s / (a * a * a) / bessel_j1(f)
        };
        Ok(ProfileAt {
            profile: self,
            s,
            a,
            da: s / a,
            f,
            df,
        })
    }

    pub fn gamma(&self, s: f64, xi: f64) -> Result<(f64, f64)> {
        Ok(self.at(s)?.gamma(xi))
    }

    pub fn dgamma_dxi(&self, s: f64, xi: f64) -> Result<(f64, f64)> {
        Ok(self.at(s)?.dgamma_dxi(xi))
    }

    pub fn dgamma_ds(&self, s: f64, xi: f64) -> Result<(f64, f64)> {
        Ok(self.at(s)?.dgamma_ds(xi))
    }

    /// Composite Gauss–Legendre integral of `g` over `[a, b]`.
    fn integrate<F: Fn(f64) -> (f64, f64)>(&self, a: f64, b: f64, g: F) -> (f64, f64) {
        let len = b - a;
        if len == 0.0 {
            return (0.0, 0.0);
        }
        let panels = (len.abs() / MAX_PANEL).ceil().max(1.0) as usize;
        let step = len / panels as f64;
        let (mut re, mut im) = (0.0f64, 0.0f64);
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * step;
            for &(x, w) in &self.rule {
                let (gr, gi) = g(mid + 0.5 * step * x);
                re += w * gr;
                im += w * gi;
            }
        }
        (0.5 * step * re, 0.5 * step * im)
    }

    /// Measured `C(k)` in `‖∂^k_ξΓ^n‖ ≤ C s`, `‖∂^k_ξΓ^t‖ ≤ C s²`,
    /// `‖∂_s∂^k_ξΓ^t‖ ≤ C s` for `k ≤ 3`, with sup over `xi_samples`
    /// equispaced phases.
    pub fn profile_bounds_check(&self, s_grid: &[f64], xi_samples: usize) -> Result<BoundsReport> {
        let mut s_sorted: Vec<f64> = s_grid.to_vec();
        s_sorted.sort_by(f64::total_cmp);
        let mut rows = Vec::with_capacity(s_sorted.len());
        for &s in &s_sorted {
            if !(s > 0.0) {
                return Err(Error::InvalidArgument("s grid must be positive".into()));
            }
            let p = self.at(s)?;
            let mut row = BoundsRow {
                s,
                gamma_n: [0.0; 4],
                gamma_t: [0.0; 4],
                ds_gamma_t: [0.0; 4],
            };
            for m in 0..xi_samples.max(1) {
                let xi = TAU * m as f64 / xi_samples.max(1) as f64;
                for k in 0..4 {
                    let (t, n) = p.dxi_k(k, xi);
                    let (dt, _) = p.ds_dxi_k(k, xi);
                    row.gamma_n[k] = row.gamma_n[k].max(n.abs() / s);
                    row.gamma_t[k] = row.gamma_t[k].max(t.abs() / (s * s));
                    row.ds_gamma_t[k] = row.ds_gamma_t[k].max(dt.abs() / s);
                }
            }
            rows.push(row);
        }
        Ok(BoundsReport { rows })
    }
}

/// The profile at a fixed amplitude `s`.
#[derive(Clone, Copy, Debug)]
pub struct ProfileAt<'a> {
    profile: &'a CorrugationProfile,
    pub s: f64,
    /// `√(1+s²)`.
    pub a: f64,
    /// `dA/ds`.
    pub da: f64,
    pub f: f64,
    /// `df/ds`.
    pub df: f64,
}

impl ProfileAt<'_> {
    fn integrand(&self, tau: f64) -> (f64, f64) {
        let (su, cu) = (self.f * tau.sin()).sin_cos();
        (self.a * cu - 1.0, self.a * su)
    }

    /// `Γ(s, ξ)`. The phase is reduced to `[−π, π]` first; `Γ^t` is odd and
    /// `Γ^n` even in `ξ`, so only `[0, π]` is ever integrated.
    pub fn gamma(&self, xi: f64) -> (f64, f64) {
        let r = xi - TAU * (xi / TAU).round();
        let (t, n) = self.profile.integrate(0.0, r.abs(), |tau| self.integrand(tau));
        (if r < 0.0 { -t } else { t }, n)
    }

    /// `∫₀^ξ ∂_ξΓ` by quadrature with no phase reduction.
    pub fn primitive(&self, xi: f64) -> (f64, f64) {
        self.profile.integrate(0.0, xi, |tau| self.integrand(tau))
    }

    pub fn dgamma_dxi(&self, xi: f64) -> (f64, f64) {
        self.integrand(xi)
    }

    /// `∂^k_ξ Γ` for `k ≤ 3` (closed form for `k ≥ 1`).
    pub fn dxi_k(&self, k: usize, xi: f64) -> (f64, f64) {
        let (sx, cx) = xi.sin_cos();
        let u1 = self.f * cx;
        let u2 = -self.f * sx;
        let (su, cu) = (self.f * sx).sin_cos();
        let (gr, gi) = (self.a * cu, self.a * su);
        match k {
            0 => self.gamma(xi),
            1 => (gr - 1.0, gi),
            2 => (-u1 * gi, u1 * gr),
            3 => (-u1 * u1 * gr - u2 * gi, u2 * gr - u1 * u1 * gi),
            _ => panic!("derivative order {k} not supported"),
        }
    }

    pub fn dgamma_ds(&self, xi: f64) -> (f64, f64) {
        self.ds_dxi_k(0, xi)
    }

    /// `∂_s∂^k_ξ Γ` for `k ≤ 3`.
    pub fn ds_dxi_k(&self, k: usize, xi: f64) -> (f64, f64) {
        let cmul = |(a, b): (f64, f64), (c, d): (f64, f64)| (a * c - b * d, a * d + b * c);
        let add = |(a, b): (f64, f64), (c, d): (f64, f64)| (a + c, b + d);
        // ∂_s G = L G with L = A'/A + i f' sin ξ and G = A e^{i f sin ξ}.
        let l_of = |x: f64| (self.da / self.a, self.df * x.sin());
        let g_of = |x: f64| {
            let (su, cu) = (self.f * x.sin()).sin_cos();
            (self.a * cu, self.a * su)
        };
        match k {
            0 => {
                let r = xi - TAU * (xi / TAU).round();
                let (t, n) = self.profile.integrate(0.0, r.abs(), |tau| cmul(l_of(tau), g_of(tau)));
                (if r < 0.0 { -t } else { t }, n)
            }
            _ => {
                let (sx, cx) = xi.sin_cos();
                let g = g_of(xi);
                let dsg = cmul(l_of(xi), g);
                let u1 = self.f * cx;
                let u2 = -self.f * sx;
                let du1 = self.df * cx;
                let du2 = -self.df * sx;
                match k {
                    1 => dsg,
                    // ∂_s(i u' G)
                    2 => add(cmul((0.0, du1), g), cmul((0.0, u1), dsg)),
                    // ∂_s((i u'' − u'²) G)
                    3 => add(cmul((-2.0 * u1 * du1, du2), g), cmul((-u1 * u1, u2), dsg)),
                    _ => panic!("derivative order {k} not supported"),
                }
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundsRow {
    pub s: f64,
    /// `sup_ξ |∂^k_ξΓ^n| / s`.
    pub gamma_n: [f64; 4],
    /// `sup_ξ |∂^k_ξΓ^t| / s²`.
    pub gamma_t: [f64; 4],
    /// `sup_ξ |∂_s∂^k_ξΓ^t| / s`.
    pub ds_gamma_t: [f64; 4],
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundsReport {
    /// Ascending in `s`.
    pub rows: Vec<BoundsRow>,
}

impl BoundsReport {
    /// Measured constants: max ratio over the grid per family and order.
    pub fn constants(&self) -> BoundsRow {
        let mut c = BoundsRow {
            s: f64::NAN,
            gamma_n: [0.0; 4],
            gamma_t: [0.0; 4],
            ds_gamma_t: [0.0; 4],
        };
        for r in &self.rows {
            for k in 0..4 {
                c.gamma_n[k] = c.gamma_n[k].max(r.gamma_n[k]);
                c.gamma_t[k] = c.gamma_t[k].max(r.gamma_t[k]);
                c.ds_gamma_t[k] = c.ds_gamma_t[k].max(r.ds_gamma_t[k]);
            }
        }
        c
    }

    /// No blow-up as `s → 0`: every ratio is finite, and at the smallest `s`
    /// it exceeds its value at the second smallest by at most 25%.
    pub fn bounded(&self) -> bool {
        let finite = self.rows.iter().all(|r| {
            r.gamma_n
                .iter()
                .chain(&r.gamma_t)
                .chain(&r.ds_gamma_t)
                .all(|v| v.is_finite())
        });
        if self.rows.len() < 2 || !finite {
            return finite;
        }
        let (a, b) = (&self.rows[0], &self.rows[1]);
        (0..4).all(|k| {
            a.gamma_n[k] <= 1.25 * b.gamma_n[k] + 1e-12
                && a.gamma_t[k] <= 1.25 * b.gamma_t[k] + 1e-12
                && a.ds_gamma_t[k] <= 1.25 * b.ds_gamma_t[k] + 1e-12
        })
    }
}
