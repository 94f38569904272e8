//! One iteration step: mollify, form the normalized defect `h_q`, factorize
//! it conformally and add two corrugations, at frequencies `μ` and
//! `λ_{q+1}`, along `∇Φ₁` and `∇Φ₂`.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{factorize, ConformalFactorization, FactorizeOptions};
use crate::corrugation::CorrugationProfile;
use crate::error::{Error, Result};
use crate::field::{
    frame, hessian_sup, interpolation_proxy, pullback, Field, MapField, MetricField, ScalarField, Sym2, VectorField2,
};
use crate::mollifier::mollify;
use crate::schedule::{Link, Schedule};

/// Default resolution guard: radians of corrugation phase per grid cell.
pub const DEFAULT_GUARD: f64 = std::f64::consts::FRAC_PI_4;

/// Cells dropped from the edge of every corrugated map. Frames there come
/// from one-sided stencils of an oscillating map and are off by a fixed
/// fraction of the oscillation, so the values are not worth keeping.
pub const COLLAR_CELLS: f64 = 2.0;

/// `u♯e` on the disk of `u` less [`COLLAR_CELLS`], where first and second
/// differences of `u` all use centred stencils.
pub fn interior_pullback(u: &MapField) -> Result<MetricField> {
    let g = u.grid();
    pullback(u)?.remask(g.radius() - COLLAR_CELLS * g.spacing())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Abort on any violated exit bound.
    Strict,
    /// Record measured constants and continue.
    #[default]
    Measure,
}

/// `w + Γᵗ(s, ξ) t / freq + Γⁿ(s, ξ) n / freq` with `s = weight·|τ|`,
/// `ξ = freq·phase` and the frame of `w` along `dir`, on the disk of `w`
/// less [`COLLAR_CELLS`].
pub(crate) fn apply_corrugation(
    w: &MapField,
    dir: &VectorField2,
    weight: &ScalarField,
    phase: &ScalarField,
    freq: f64,
    profile: &CorrugationProfile,
    guard: f64,
) -> Result<MapField> {
    let g = *w.grid();
    let wavenumber = freq * dir.sup_norm();
    if wavenumber * g.spacing() > guard {
        return Err(Error::ResolutionGuard {
            freq: wavenumber,
            spacing: g.spacing(),
            guard,
        });
    }
    let fr = frame(w, dir)?;
    let values: Vec<Result<Vector3<f64>>> = (0..g.len())
        .into_par_iter()
        .map(|k| {
            if !g.is_masked(k) {
                return Ok(Vector3::zeros());
            }
            let s = weight.get(k) * fr.tau.get(k).norm();
            let (gt, gn) = profile.gamma(s, freq * phase.get(k))?;
            Ok(w.get(k) + (fr.t.get(k) * gt + fr.nmrl.get(k) * gn) / freq)
        })
        .collect();
    Field::new(g, values.into_iter().collect::<Result<_>>()?)?.remask(g.radius() - COLLAR_CELLS * g.spacing())
}

/// A corrugated map and the metric error it leaves behind.
#[derive(Clone, Debug)]
pub struct Corrugation {
    pub map: MapField,
    /// `map♯e − w♯e − δ ρ² ∇Φ_i⊗∇Φ_i`.
    pub error: MetricField,
}

/// Adds the corrugation along `∇Φ_which` with amplitude
/// `amplitude_scale·|τ|·ρ` and phase `freq·Φ_which`.
pub fn corrugation_step(
    w: &MapField,
    factor: &ConformalFactorization,
    which: usize,
    amplitude_scale: f64,
    freq: f64,
    profile: &CorrugationProfile,
    guard: f64,
) -> Result<Corrugation> {
    if which != 1 && which != 2 {
        return Err(Error::InvalidArgument(format!(
            "corrugation index must be 1 or 2, got {which}"
        )));
    }
    if !w.grid().same_nodes(factor.rho.grid()) {
        return Err(Error::GridMismatch);
    }
    let grid = *factor.rho.grid();
    let w = w.remask(grid.radius().min(w.grid().radius()))?;
    let weight = factor.rho.scale(amplitude_scale);
    let map = if amplitude_scale == 0.0 {
        w.clone()
    } else {
        apply_corrugation(&w, factor.grad(which), &weight, factor.phi(which), freq, profile, guard)?
    };
    let gained = factor.primitive(which).scale(amplitude_scale * amplitude_scale);
    let error = interior_pullback(&map)?.sub(&interior_pullback(&w)?)?.sub(&gained)?;
    Ok(Corrugation { map, error })
}

/// Knobs of a stage that are not part of the schedule itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageSettings {
    /// Amplitude unit: the defect targets are `kappa·δ_q`.
    pub kappa: f64,
    pub guard: f64,
    pub mode: Mode,
    /// `C̄` in `‖D²u_q‖₀ ≤ C̄ δ_q^{1/2} λ_q`.
    pub c_bar: f64,
    /// `C₀` in `‖D(u_{q+1} − u_q)‖₀ ≤ C₀ δ_{q+1}^{1/2}`.
    pub c_zero: f64,
    pub factorize: FactorizeOptions,
}

impl Default for StageSettings {
    fn default() -> Self {
        StageSettings {
            kappa: 1.0,
            guard: DEFAULT_GUARD,
            mode: Mode::Measure,
            c_bar: 10.0,
            c_zero: 10.0,
            factorize: FactorizeOptions {
                sigma1: None,
                ..Default::default()
            },
        }
    }
}

/// `u_q` on `D_{1+2^{−q−1}}` with its entry diagnostics.
#[derive(Clone, Debug)]
pub struct StageState {
    pub q: usize,
    pub u: MapField,
    /// `‖g_q − u♯e‖₀`.
    pub defect_sup: f64,
    /// Interpolation proxy of `‖g_q − u♯e‖_α`.
    pub defect_alpha: f64,
    pub hessian_sup: f64,
}

/// Measured defect of `u` against `g − target·e` on the grid of `u`.
pub fn defect(g: &MetricField, u: &MapField, target: f64) -> Result<MetricField> {
    let g = g.remask(u.grid().radius())?;
    if !g.grid().same_nodes(u.grid()) {
        return Err(Error::GridMismatch);
    }
    let gt = g.map(|m| m - Sym2::identity() * target);
    gt.sub(&interior_pullback(u)?)
}

impl StageState {
    /// Measures `u` against `g_q = g − kappa·δ_{q+1}·e`.
    pub fn measure(q: usize, u: MapField, g: &MetricField, schedule: &Schedule, kappa: f64) -> Result<Self> {
        let d = defect(g, &u, kappa * schedule.delta(q + 1))?;
        let sup = d.sup_norm();
        let dsup = d.derivative_sup()?;
        Ok(StageState {
            q,
            defect_sup: sup,
            defect_alpha: interpolation_proxy(sup, dsup, schedule.alpha),
            hessian_sup: hessian_sup(&u)?,
            u,
        })
    }
}

/// One measured inequality of the stage contract.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

impl BoundCheck {
    pub fn new(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        BoundCheck {
            name: name.into(),
            measured,
            bound,
            pass: measured <= bound,
        }
    }
}

/// `h_q` and its smallness diagnostics.
#[derive(Clone, Debug)]
pub struct NormalizedDefect {
    pub h: MetricField,
    /// `u_q * φ_ℓ` on the output disk.
    pub w: MapField,
    /// `g * φ_ℓ` on the output disk.
    pub g_mollified: MetricField,
    pub minus_e_sup: f64,
    pub minus_e_alpha: f64,
    /// `‖h_q − e‖_α ≤ 3σ₀`.
    pub small: bool,
}

/// `h_q = (g*φ_ℓ − (u_q*φ_ℓ)♯e)/δ_{q+1} − (δ_{q+2}/δ_{q+1}) e` on
/// `D_{1+2^{−q−2}}`, with `δ` in units of `kappa`. The collar trims of
/// earlier stages can leave `u_q` on a slightly smaller disk than
/// `D_{1+2^{−q−1}}`; the output disk then shrinks to `D_{r_q−ℓ}` as long as
/// the two corrugations still leave `D₁` covered.
pub fn form_hq(g: &MetricField, u_q: &MapField, schedule: &Schedule, q: usize, kappa: f64) -> Result<NormalizedDefect> {
    let p = schedule.derive(q);
    let ell = p.ell();
    if ell > 0.5f64.powi(q as i32 + 2) {
        return Err(Error::InvalidArgument(format!(
            "mollification length {ell} exceeds the domain margin at stage {q}"
        )));
    }
    let radius = (1.0 + 0.5f64.powi(q as i32 + 2)).min(u_q.grid().radius() - ell);
    if radius - 2.0 * COLLAR_CELLS * u_q.grid().spacing() < 1.0 {
        return Err(Error::DomainVanishes {
            radius: u_q.grid().radius(),
            ell,
        });
    }
    let w = mollify(u_q, ell)?.remask(radius)?;
    let g_mollified = mollify(&g.remask(u_q.grid().radius())?, ell)?.remask(radius)?;
    let d1 = kappa * p.delta_q1();
    let ratio = p.delta_q2() / p.delta_q1();
    let h = g_mollified
        .sub(&pullback(&w)?)?
        .map(|m| m * (1.0 / d1) - Sym2::identity() * ratio);
    let dev = h.map(|m| m - Sym2::identity());
    let minus_e_sup = dev.sup_norm();
    let minus_e_alpha = interpolation_proxy(minus_e_sup, dev.derivative_sup()?, schedule.alpha);
    Ok(NormalizedDefect {
        small: minus_e_alpha <= 3.0 * schedule.sigma0,
        h,
        w,
        g_mollified,
        minus_e_sup,
        minus_e_alpha,
    })
}

/// Compact record of a factorization for reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizationSummary {
    pub iterations: usize,
    pub residual_sup: f64,
    pub beltrami_sup: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub normalization: f64,
    pub jacobian_min: f64,
    pub dphi_minus_id: f64,
}

impl From<&ConformalFactorization> for FactorizationSummary {
    fn from(f: &ConformalFactorization) -> Self {
        FactorizationSummary {
            iterations: f.iterations,
            residual_sup: f.residual_sup,
            beltrami_sup: f.beltrami_sup,
            rho_min: f.rho_min,
            rho_max: f.rho_max,
            normalization: f.normalization,
            jacobian_min: f.jacobian_min,
            dphi_minus_id: f.dphi_minus_id,
        }
    }
}

/// Everything measured during one stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub q: usize,
    pub radius: f64,
    pub ell: f64,
    pub mu: f64,
    pub lambda: f64,
    /// `kappa·δ_{q+1}` and `kappa·δ_{q+2}`.
    pub delta_q1: f64,
    pub delta_q2: f64,
    pub chain: Vec<Link>,
    pub hq_minus_e_sup: f64,
    pub hq_minus_e_alpha: f64,
    pub factorization: FactorizationSummary,
    pub e1_sup: f64,
    pub de1_sup: f64,
    pub e2_sup: f64,
    pub de2_sup: f64,
    /// `‖g_{q+1} − u_{q+1}♯e‖₀`.
    pub defect_sup: f64,
    pub defect_dsup: f64,
    pub defect_alpha: f64,
    /// `‖g − u_{q+1}♯e‖₀`.
    pub defect_vs_g_sup: f64,
    /// Smallest eigenvalue of `g − u_{q+1}♯e`.
    pub shortness_min_eig: f64,
    /// `sup|E₁ + E₂ + w♯e + δ ρ²Σ∇Φ_i⊗∇Φ_i − u♯e| / sup|u♯e|`.
    pub bookkeeping_rel: f64,
    /// `sup|g_{q+1} − u♯e + E + (g*φ_ℓ − g) + δ·residual|`.
    pub identity_defect: f64,
    pub displacement_sup: f64,
    pub d_displacement_sup: f64,
    pub hessian_sup: f64,
    pub bounds: Vec<BoundCheck>,
}

impl StageReport {
    pub fn all_bounds_pass(&self) -> bool {
        self.bounds.iter().all(|b| b.pass)
    }
}

#[derive(Clone, Debug)]
pub struct StageOutput {
    pub u_next: MapField,
    pub report: StageReport,
}

/// Runs stage `q` on `state.u` and measures every exit quantity.
pub fn run_stage(
    state: &StageState,
    g: &MetricField,
    schedule: &Schedule,
    profile: &CorrugationProfile,
    settings: &StageSettings,
) -> Result<StageOutput> {
    let q = state.q;
    let p = schedule.derive(q);
    if settings.mode == Mode::Strict {
        if let Some(link) = p.first_violation() {
            return Err(Error::ChainViolated(link.name.to_string()));
        }
    }
    let kappa = settings.kappa;
    let (d1, d2) = (kappa * p.delta_q1(), kappa * p.delta_q2());
    let (mu, lambda) = (p.mu(), p.lambda_q1());

    let nd = form_hq(g, &state.u, schedule, q, kappa)?;
    if settings.mode == Mode::Strict && !nd.small {
        return Err(Error::SmallnessViolated {
            measured: nd.minus_e_alpha,
            bound: 3.0 * schedule.sigma0,
        });
    }
    let fac = factorize(&nd.h, &settings.factorize)?;
    let amp = d1.sqrt();
    let first = corrugation_step(&nd.w, &fac, 1, amp, mu, profile, settings.guard)?;
    let second = corrugation_step(&first.map, &fac, 2, amp, lambda, profile, settings.guard)?;
    let u = second.map;
    let grid = *u.grid();

    let pull_u = interior_pullback(&u)?;
    let pull_w = interior_pullback(&nd.w)?;
    let assembled = fac.assembled().scale(d1);
    let lhs = first.error.add(&second.error)?.add(&pull_w)?.add(&assembled)?;
    let bookkeeping_rel = lhs.sub(&pull_u)?.sup_norm() / pull_u.sup_norm();

    let g_here = g.remask(grid.radius())?;
    let g_next = g_here.map(|m| m - Sym2::identity() * d2);
    let defect_next = g_next.sub(&pull_u)?;
    let identity_defect = defect_next
        .add(&first.error)?
        .add(&second.error)?
        .add(&nd.g_mollified.sub(&g_here)?)?
        .add(&fac.residual.scale(d1))?
        .sup_norm();

    let defect_sup = defect_next.sup_norm();
    let defect_dsup = defect_next.derivative_sup()?;
    let short = g_here.sub(&pull_u)?;
    let shortness_min_eig = short.min_eigenvalue();
    let u_prev = state.u.remask(grid.radius())?;
    let step = u.sub(&u_prev)?;
    let hess = hessian_sup(&u)?;

    let alpha = schedule.alpha;
    let sigma0 = schedule.sigma0;
    let bounds = vec![
        BoundCheck::new(
            "|g_q+1 - u#e|_0 <= sigma0/3 delta_q+2 lambda^-alpha",
            defect_sup,
            sigma0 / 3.0 * d2 * lambda.powf(-alpha),
        ),
        BoundCheck::new(
            "|D(g_q+1 - u#e)|_0 <= sigma0/3 delta_q+2 lambda^(1-alpha)",
            defect_dsup,
            sigma0 / 3.0 * d2 * lambda.powf(1.0 - alpha),
        ),
        BoundCheck::new("|u_q+1 - u_q|_0 <= delta_q+1^1/2", step.sup_norm(), amp),
        BoundCheck::new(
            "|D(u_q+1 - u_q)|_0 <= C0 delta_q+1^1/2",
            step.derivative_sup()?,
            settings.c_zero * amp,
        ),
        BoundCheck::new(
            "|D^2 u_q+1|_0 <= Cbar delta_q+1^1/2 lambda_q+1",
            hess,
            settings.c_bar * amp * lambda,
        ),
        BoundCheck::new("g - u_q+1#e positive definite", -shortness_min_eig, 0.0),
    ];
    let report = StageReport {
        q,
        radius: grid.radius(),
        ell: p.ell(),
        mu,
        lambda,
        delta_q1: d1,
        delta_q2: d2,
        chain: p.chain.clone(),
        hq_minus_e_sup: nd.minus_e_sup,
        hq_minus_e_alpha: nd.minus_e_alpha,
        factorization: FactorizationSummary::from(&fac),
        e1_sup: first.error.sup_norm(),
        de1_sup: first.error.derivative_sup()?,
        e2_sup: second.error.sup_norm(),
        de2_sup: second.error.derivative_sup()?,
        defect_sup,
        defect_dsup,
        defect_alpha: interpolation_proxy(defect_sup, defect_dsup, alpha),
        defect_vs_g_sup: short.sup_norm(),
        shortness_min_eig,
        bookkeeping_rel,
        identity_defect,
        displacement_sup: step.sup_norm(),
        d_displacement_sup: step.derivative_sup()?,
        hessian_sup: hess,
        bounds,
    };
    if settings.mode == Mode::Strict {
        if let Some(b) = report.bounds.iter().find(|b| !b.pass) {
            return Err(Error::BoundViolated {
                what: b.name.clone(),
                measured: b.measured,
                bound: b.bound,
            });
        }
    }
    Ok(StageOutput { u_next: u, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;

    fn flat(g: Grid, scale: f64) -> MapField {
        MapField::from_fn(g, |x, y| Vector3::new(scale * x, scale * y, 0.0))
    }

    fn identity_factor(g: Grid) -> ConformalFactorization {
        factorize(&MetricField::identity(g), &FactorizeOptions::default()).unwrap()
    }

    #[test]
    fn zero_amplitude_is_identity() {
        let g = Grid::disk(1.0, 41).unwrap();
        let w = flat(g, 0.9);
        let c = corrugation_step(
            &w,
            &identity_factor(g),
            1,
            0.0,
            10.0,
            &CorrugationProfile::new(),
            DEFAULT_GUARD,
        )
        .unwrap();
        assert_eq!(c.map.sub(&w).unwrap().sup_norm(), 0.0);
        assert_eq!(c.error.sup_norm(), 0.0);
    }

    #[test]
    fn guard_rejects_unresolved_frequency() {
        let g = Grid::disk(1.0, 41).unwrap();
        let w = flat(g, 1.0);
        let r = corrugation_step(
            &w,
            &identity_factor(g),
            1,
            0.1,
            100.0,
            &CorrugationProfile::new(),
            DEFAULT_GUARD,
        );
        assert!(matches!(r, Err(Error::ResolutionGuard { .. })));
    }

    #[test]
    fn constant_amplitude_on_flat_map_gains_exact_primitive() {
        // Continuum error is zero; what remains is stencil error of the
        // oscillation, second order in the phase per cell.
        let mut prev = f64::NAN;
        for n in [101, 201] {
            let g = Grid::disk(1.0, n).unwrap();
            let w = flat(g, 0.9);
            let c = corrugation_step(
                &w,
                &identity_factor(g),
                1,
                0.3,
                8.0,
                &CorrugationProfile::new(),
                DEFAULT_GUARD,
            )
            .unwrap();
            let inner = c.error.sup_norm_within(0.9);
            if prev.is_finite() {
                assert!(inner < prev / 3.5, "{inner} vs {prev}");
            }
            prev = inner;
        }
        assert!(prev < 2e-3);
    }

    #[test]
    fn bookkeeping_of_a_single_corrugation_is_definitional() {
        let g = Grid::disk(1.0, 61).unwrap();
        let w = MapField::from_fn(g, |x, y| Vector3::new(0.9 * x, 0.9 * y, 0.1 * x * y));
        let f = identity_factor(g);
        let c = corrugation_step(&w, &f, 2, 0.2, 6.0, &CorrugationProfile::new(), DEFAULT_GUARD).unwrap();
        let rebuilt = pullback(&w)
            .unwrap()
            .add(&f.primitive(2).scale(0.04))
            .unwrap()
            .add(&c.error)
            .unwrap();
        let rel = rebuilt.sub(&pullback(&c.map).unwrap()).unwrap().sup_norm();
        assert!(rel < 1e-14);
    }

    #[test]
    fn direction_matches_gradient() {
        // Along x, the gain is rank one in the x-direction.
        let g = Grid::disk(1.0, 161).unwrap();
        let w = flat(g, 0.9);
        let c = corrugation_step(
            &w,
            &identity_factor(g),
            1,
            0.3,
            6.0,
            &CorrugationProfile::new(),
            DEFAULT_GUARD,
        )
        .unwrap();
        let gained = pullback(&c.map).unwrap().sub(&pullback(&w).unwrap()).unwrap();
        let k = g.nearest(0.1, 0.2).unwrap();
        let m = gained.get(k);
        assert!((m.xi - 0.09).abs() < 2e-3, "{m:?}");
        assert!(m.omega.abs() < 1e-10 && m.zeta.abs() < 1e-10);
    }

    #[test]
    fn defect_against_shifted_metric() {
        let g = Grid::disk(1.0, 21).unwrap();
        let d = defect(&MetricField::identity(g), &flat(g, 0.9), 0.1).unwrap();
        for (_, m) in d.masked_values() {
            assert!((m.xi - 0.09).abs() < 1e-12 && m.zeta.abs() < 1e-12);
        }
    }
}
