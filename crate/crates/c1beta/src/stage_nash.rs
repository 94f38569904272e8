//! Getting started: Nash–Kuiper twists turn a strictly short map into one
//! whose defect is a small multiple of the identity, and two corrugations
//! along a conformal factorization of that defect give the map `u₀`.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::conformal::{factorize, FactorizeOptions};
use crate::corrugation::CorrugationProfile;
use crate::error::{Error, Result};
use crate::field::{hessian_sup, interpolation_proxy, MapField, MetricField, ScalarField, Sym2, VectorField2};
use crate::schedule::Schedule;
use crate::stage_corrugate::{
    apply_corrugation, corrugation_step, defect, interior_pullback, FactorizationSummary, Mode, DEFAULT_GUARD,
};

/// `(1,0)`, `(0,1)`, `(1,1)/√2`, `(1,−1)/√2`.
pub fn primitive_directions() -> [Vector2<f64>; 4] {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    [
        Vector2::new(1.0, 0.0),
        Vector2::new(0.0, 1.0),
        Vector2::new(r, r),
        Vector2::new(r, -r),
    ]
}

/// `Σ φ_i² e_i⊗e_i` over the four fixed directions.
#[derive(Clone, Debug)]
pub struct PrimitiveDecomposition {
    pub directions: [Vector2<f64>; 4],
    /// The squared coefficients `φ_i²`.
    pub amplitudes: Vec<ScalarField>,
}

impl PrimitiveDecomposition {
    pub fn reassemble(&self) -> MetricField {
        let mut acc = MetricField::zeros(*self.amplitudes[0].grid());
        for (dir, amp) in self.directions.iter().zip(&self.amplitudes) {
            let rank_one = Sym2::outer(*dir);
            acc = acc.add(&amp.map(|a| rank_one * a)).expect("same grid");
        }
        acc
    }
}

/// Per node `[[A,B],[B,C]]`: `φ₃² = max(2B,0)`, `φ₄² = max(−2B,0)`,
/// `φ₁² = A − |B|`, `φ₂² = C − |B|`. Fails at the worst node outside the
/// cone `A, C ≥ |B|`.
pub fn decompose_primitive(defect: &MetricField) -> Result<PrimitiveDecomposition> {
    let g = *defect.grid();
    let mut worst: Option<(usize, f64)> = None;
    for (k, m) in defect.masked_values() {
        let slack = (m.xi - m.zeta.abs()).min(m.omega - m.zeta.abs());
        if slack < 0.0 && worst.is_none_or(|(_, w)| slack < w) {
            worst = Some((k, slack));
        }
    }
    if let Some((node, _)) = worst {
        let m = defect.get(node);
        return Err(Error::OutsideCone {
            node,
            a: m.xi,
            b: m.zeta,
            c: m.omega,
        });
    }
    let amplitudes = vec![
        defect.map(|m| m.xi - m.zeta.abs()),
        defect.map(|m| m.omega - m.zeta.abs()),
        defect.map(|m| (2.0 * m.zeta).max(0.0)),
        defect.map(|m| (-2.0 * m.zeta).max(0.0)),
    ];
    debug_assert!(amplitudes.iter().all(|a| a.grid().same_nodes(&g)));
    Ok(PrimitiveDecomposition {
        directions: primitive_directions(),
        amplitudes,
    })
}

#[derive(Clone, Debug)]
pub struct Twist {
    pub u: MapField,
    /// `u♯e − u_prev♯e − φ² e_i⊗e_i`.
    pub error: MetricField,
}

/// One Nash–Kuiper twist along the constant direction `dir` with squared
/// amplitude `phi_sq` and phase `freq·(dir·x)`.
pub fn nash_twist(
    u_prev: &MapField,
    dir: Vector2<f64>,
    phi_sq: &ScalarField,
    freq: f64,
    profile: &CorrugationProfile,
    guard: f64,
) -> Result<Twist> {
    let g = *u_prev.grid();
    if !g.same_nodes(phi_sq.grid()) {
        return Err(Error::GridMismatch);
    }
    let phi = phi_sq.map(|v| v.max(0.0).sqrt());
    let u = if phi.sup_norm() == 0.0 {
        u_prev.clone()
    } else {
        let dirs = VectorField2::constant(g, dir);
        let phase = ScalarField::from_fn(g, |x, y| dir.x * x + dir.y * y);
        apply_corrugation(u_prev, &dirs, &phi, &phase, freq, profile, guard)?
    };
    let gained = phi_sq.map(|a| Sym2::outer(dir) * a);
    let error = interior_pullback(&u)?.sub(&interior_pullback(u_prev)?)?.sub(&gained)?;
    Ok(Twist { u, error })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwistReport {
    pub direction: [f64; 2],
    pub freq: f64,
    pub error_sup: f64,
    pub error_alpha: f64,
    pub displacement: f64,
    /// `‖g − δ̄e − u♯e‖₀` after this twist.
    pub defect_sup: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShortSettings {
    /// First frequency tried for each twist.
    pub freq0: f64,
    pub guard: f64,
    pub alpha: f64,
    /// In measure mode a twist that cannot meet its budget below the guard
    /// keeps the highest resolvable frequency instead of failing.
    pub mode: Mode,
}

impl Default for ShortSettings {
    fn default() -> Self {
        ShortSettings {
            freq0: 4.0,
            guard: DEFAULT_GUARD,
            alpha: 0.01,
            mode: Mode::Measure,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ShortMap {
    pub u: MapField,
    /// Half the smallest eigenvalue of `g − ū♯e`.
    pub delta_bar: f64,
    pub twists: Vec<TwistReport>,
    /// Interpolation proxy of `‖g − δ̄e − ũ♯e‖_α`.
    pub defect_alpha: f64,
    pub target_met: bool,
}

/// `δ̄ = ½ min λ_min(g − ū♯e)`; fails unless positive.
pub fn strict_shortness(g: &MetricField, u_bar: &MapField) -> Result<f64> {
    let d = defect(g, u_bar, 0.0)?;
    let min_eig = d.min_eigenvalue();
    if !(min_eig > 0.0) {
        return Err(Error::NotStrictlyShort { min_eig });
    }
    Ok(0.5 * min_eig)
}

fn alpha_proxy(m: &MetricField, alpha: f64) -> Result<f64> {
    Ok(interpolation_proxy(m.sup_norm(), m.derivative_sup()?, alpha))
}

/// Twists `u_bar` until `‖g − δ̄e − ũ♯e‖_α ≤ target_defect_alpha` and
/// `‖ũ − ū‖₀ ≤ eps/2`, doubling each twist's frequency until its share of
/// both budgets is met.
pub fn prepare_short(
    g: &MetricField,
    u_bar: &MapField,
    target_defect_alpha: f64,
    eps: f64,
    profile: &CorrugationProfile,
    settings: &ShortSettings,
) -> Result<ShortMap> {
    let delta_bar = strict_shortness(g, u_bar)?;
    let g = g.remask(u_bar.grid().radius())?;
    let target = g.map(|m| m - Sym2::identity() * delta_bar);
    let remaining = target.sub(&interior_pullback(u_bar)?)?;
    let alpha = settings.alpha;
    let initial = alpha_proxy(&remaining, alpha)?;
    if initial <= target_defect_alpha {
        return Ok(ShortMap {
            u: u_bar.clone(),
            delta_bar,
            twists: Vec::new(),
            defect_alpha: initial,
            target_met: true,
        });
    }
    let dec = decompose_primitive(&remaining)?;
    let active: Vec<usize> = (0..4).filter(|&i| dec.amplitudes[i].sup_norm() > 0.0).collect();
    let share = active.len() as f64;
    let spacing = g.grid().spacing();

    let mut u = u_bar.clone();
    let mut freq = settings.freq0;
    let mut twists = Vec::new();
    for &i in &active {
        let dir = dec.directions[i];
        let error_budget = target_defect_alpha / share;
        let move_budget = eps / (2.0 * share);
        // Frequencies double from the previous twist's; the first one meeting
        // both budgets wins. Otherwise measure mode keeps the resolvable
        // candidate with the smallest error among those within the
        // displacement budget, or the one that moves least.
        let mut best: Option<(Twist, f64, f64, f64)> = None;
        let mut f = freq;
        while f * spacing <= settings.guard {
            let tw = nash_twist(&u, dir, &dec.amplitudes[i], f, profile, settings.guard)?;
            let error_alpha = alpha_proxy(&tw.error, alpha)?;
            let displacement = tw.u.sub(&u)?.sup_norm();
            if error_alpha <= error_budget && displacement <= move_budget {
                best = Some((tw, error_alpha, displacement, f));
                break;
            }
            let rank = |e: f64, d: f64| if d <= move_budget { (0, e) } else { (1, d) };
            let better = best.as_ref().is_none_or(|&(_, e, d, _)| {
                rank(error_alpha, displacement).partial_cmp(&rank(e, d)) == Some(std::cmp::Ordering::Less)
            });
            if settings.mode == Mode::Strict {
                best = None;
            } else if better {
                best = Some((tw, error_alpha, displacement, f));
            }
            f *= 2.0;
        }
        let Some((tw, error_alpha, _, chosen)) =
            best.filter(|b| settings.mode == Mode::Measure || (b.1 <= error_budget && b.2 <= move_budget))
        else {
            return Err(Error::ResolutionGuard {
                freq: f,
                spacing,
                guard: settings.guard,
            });
        };
        freq = chosen;
        twists.push(TwistReport {
            direction: [dir.x, dir.y],
            freq,
            error_sup: tw.error.sup_norm(),
            error_alpha,
            displacement: tw.u.sub(&u)?.sup_norm(),
            defect_sup: target.sub(&interior_pullback(&tw.u)?)?.sup_norm(),
        });
        u = tw.u;
    }
    let defect_alpha = alpha_proxy(&target.sub(&interior_pullback(&u)?)?, alpha)?;
    let moved = u.sub(u_bar)?.sup_norm();
    Ok(ShortMap {
        u,
        delta_bar,
        twists,
        defect_alpha,
        target_met: defect_alpha <= target_defect_alpha && moved <= 0.5 * eps,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct U0Settings {
    /// Initial `C₁` in `μ = C₁ δ₁^{−1/(1−2α)}`.
    pub c1: f64,
    /// Initial `C₂` in `λ = C₂ μ^{1/(1−α)} δ₁^{−1/(1−α)}`.
    pub c2: f64,
    pub max_doublings: usize,
    pub guard: f64,
    pub mode: Mode,
    pub factorize: FactorizeOptions,
}

impl Default for U0Settings {
    fn default() -> Self {
        U0Settings {
            c1: 1.0,
            c2: 1.0,
            max_doublings: 12,
            guard: DEFAULT_GUARD,
            mode: Mode::Measure,
            factorize: FactorizeOptions {
                sigma1: None,
                ..Default::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct U0Attempt {
    pub c1: f64,
    pub c2: f64,
    pub mu: f64,
    pub lambda: f64,
    pub e1_alpha: f64,
    pub e2_alpha: f64,
    /// Interpolation proxy of `‖g − δ₁e − u₀♯e‖_α`.
    pub defect_alpha: f64,
}

#[derive(Clone, Debug)]
pub struct U0Output {
    pub u0: MapField,
    pub chosen: U0Attempt,
    pub attempts: Vec<U0Attempt>,
    pub factorization: FactorizationSummary,
    /// `σ₀ δ₁`.
    pub target: f64,
    pub target_met: bool,
    pub defect_sup: f64,
    pub hessian_sup: f64,
}

/// The two-corrugation map `u₀` built on `ũ`, with
/// `h = (g − ũ♯e)/δ̄ − (δ₁/δ̄) e` factorized conformally. `δ₁` is taken in
/// units of `kappa`; the frequency laws use the schedule's own `δ₁`.
pub fn build_u0(
    g: &MetricField,
    u_tilde: &MapField,
    delta_bar: f64,
    schedule: &Schedule,
    kappa: f64,
    profile: &CorrugationProfile,
    settings: &U0Settings,
) -> Result<U0Output> {
    let alpha = schedule.alpha;
    let d1_unit = schedule.delta(1);
    let d1 = kappa * d1_unit;
    let g = g.remask(u_tilde.grid().radius())?;
    let h = g
        .sub(&interior_pullback(u_tilde)?)?
        .map(|m| m * (1.0 / delta_bar) - Sym2::identity() * (d1 / delta_bar));
    let fac = factorize(&h, &settings.factorize)?;
    let amp = delta_bar.sqrt();
    let target = schedule.sigma0 * d1;
    let spacing = g.grid().spacing();
    let wavenumber = fac.grad_phi1.sup_norm().max(fac.grad_phi2.sup_norm());

    let (mut c1, mut c2) = (settings.c1, settings.c2);
    let mut attempts = Vec::new();
    let mut best: Option<(U0Attempt, MapField)> = None;
    for _ in 0..=settings.max_doublings {
        let mu = c1 * d1_unit.powf(-1.0 / (1.0 - 2.0 * alpha));
        let lambda = (c2 * mu.powf(1.0 / (1.0 - alpha)) * d1_unit.powf(-1.0 / (1.0 - alpha))).max(mu);
        if lambda * wavenumber * spacing > settings.guard {
            break;
        }
        let first = corrugation_step(u_tilde, &fac, 1, amp, mu, profile, settings.guard)?;
        let second = corrugation_step(&first.map, &fac, 2, amp, lambda, profile, settings.guard)?;
        let d = defect(&g, &second.map, d1)?;
        let attempt = U0Attempt {
            c1,
            c2,
            mu,
            lambda,
            e1_alpha: alpha_proxy(&first.error, alpha)?,
            e2_alpha: alpha_proxy(&second.error, alpha)?,
            defect_alpha: alpha_proxy(&d, alpha)?,
        };
        attempts.push(attempt.clone());
        let met = attempt.defect_alpha <= target;
        if best.as_ref().is_none_or(|(b, _)| attempt.defect_alpha < b.defect_alpha) {
            best = Some((attempt.clone(), second.map));
        }
        if met {
            break;
        }
        if attempt.e1_alpha > attempt.e2_alpha {
            c1 *= 2.0;
        } else {
            c2 *= 2.0;
        }
    }
    let Some((chosen, u0)) = best else {
        let mu = c1 * d1_unit.powf(-1.0 / (1.0 - 2.0 * alpha));
        return Err(Error::ResolutionGuard {
            freq: mu * wavenumber,
            spacing,
            guard: settings.guard,
        });
    };
    let target_met = chosen.defect_alpha <= target;
    if settings.mode == Mode::Strict && !target_met {
        return Err(Error::BoundViolated {
            what: "|g_0 - u_0#e|_alpha <= sigma0 delta_1".into(),
            measured: chosen.defect_alpha,
            bound: target,
        });
    }
    let defect_sup = defect(&g, &u0, d1)?.sup_norm();
    Ok(U0Output {
        hessian_sup: hessian_sup(&u0)?,
        defect_sup,
        u0,
        chosen,
        attempts,
        factorization: FactorizationSummary::from(&fac),
        target,
        target_met,
    })
}
