//! The amplitude/frequency cascade `δ_q = a^{−b^q}`, `λ_q = a^{c b^{q+1}}`
//! and the stage parameters `ℓ`, `μ` derived from it.
//!
//! Every quantity is carried as its base-`a` logarithm; floats are only
//! materialized on request, so nothing overflows however large `q` gets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack for rounding when comparing log-margins against zero.
const LOG_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub alpha: f64,
    #[serde(default = "default_sigma0")]
    pub sigma0: f64,
    #[serde(default = "default_c_tilde")]
    pub c_tilde: f64,
    #[serde(default = "default_c_hat")]
    pub c_hat: f64,
    #[serde(default = "default_q_max")]
    pub q_max: usize,
}

fn default_sigma0() -> f64 {
    0.05
}
fn default_c_tilde() -> f64 {
    10.0
}
fn default_c_hat() -> f64 {
    2.0
}
fn default_q_max() -> usize {
    2
}

/// A named inequality of the parameter chain with its margin in `log_a`
/// units (nonnegative means satisfied).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub name: String,
    pub margin: f64,
}

impl Link {
    pub fn holds(&self) -> bool {
        self.margin >= -LOG_SLACK
    }
}

/// Stage-`q` parameters, all as `log_a` values.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageParams {
    pub q: usize,
    pub a: f64,
    /// `log_a δ_q, log_a δ_{q+1}, log_a δ_{q+2}`.
    pub log_delta: [f64; 3],
    /// `log_a λ_q, log_a λ_{q+1}`.
    pub log_lambda: [f64; 2],
    pub log_ell: f64,
    pub log_mu: f64,
    pub chain: Vec<Link>,
}

impl StageParams {
    fn pow(&self, e: f64) -> f64 {
        self.a.powf(e)
    }
    pub fn delta_q(&self) -> f64 {
        self.pow(self.log_delta[0])
    }
    pub fn delta_q1(&self) -> f64 {
        self.pow(self.log_delta[1])
    }
    pub fn delta_q2(&self) -> f64 {
        self.pow(self.log_delta[2])
    }
    pub fn lambda_q(&self) -> f64 {
        self.pow(self.log_lambda[0])
    }
    pub fn lambda_q1(&self) -> f64 {
        self.pow(self.log_lambda[1])
    }
    pub fn ell(&self) -> f64 {
        self.pow(self.log_ell)
    }
    pub fn mu(&self) -> f64 {
        self.pow(self.log_mu)
    }

    pub fn chain_holds(&self) -> bool {
        self.chain.iter().all(Link::holds)
    }

    pub fn first_violation(&self) -> Option<&Link> {
        self.chain.iter().find(|l| !l.holds())
    }
}

/// Per-inequality feasibility of `(α, b, c)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Feasibility {
    pub alpha: f64,
    pub b: f64,
    pub c: f64,
    /// `3/2 > b > 2/((2−α)(1−2α))`.
    pub abc_1: bool,
    /// `c > ((4−2α)b+1)(b−1) / (b((2−5α+2α²)b−2))`.
    pub abc_2: bool,
    /// `c > 2/(1−2α) + 1/(2b)`.
    pub abc_3: bool,
    /// `c > (b²−b+1)/(b(2−αb))`.
    pub csupp1: bool,
    /// `(c(1−2α)−2)b² > ((1+2c)/(2−α)−2)b − 1/(2−α)`, the large-`q` form of
    /// the key parameter inequality.
    pub key: bool,
    pub b_lower: f64,
    pub c_lower_abc_2: f64,
    pub c_lower_abc_3: f64,
    pub beta_max: f64,
}

impl Feasibility {
    /// The conditions required for the iteration proper.
    pub fn feasible(&self) -> bool {
        self.abc_1 && self.abc_2 && self.abc_3
    }
}

/// Evaluates every exponent inequality for `(α, b, c)`.
pub fn check_feasibility(alpha: f64, b: f64, c: f64) -> Feasibility {
    let b_lower = 2.0 / ((2.0 - alpha) * (1.0 - 2.0 * alpha));
    let abc_1 = b < 1.5 && b > b_lower;
    let den2 = b * ((2.0 - 5.0 * alpha + 2.0 * alpha * alpha) * b - 2.0);
    let c_lower_abc_2 = ((4.0 - 2.0 * alpha) * b + 1.0) * (b - 1.0) / den2;
    // A nonpositive denominator means b is below the abc_1 threshold; the
    // bound is then void and the condition cannot hold.
    let abc_2 = den2 > 0.0 && c > c_lower_abc_2;
    let c_lower_abc_3 = 2.0 / (1.0 - 2.0 * alpha) + 1.0 / (2.0 * b);
    let abc_3 = c > c_lower_abc_3;
    let den_s = b * (2.0 - alpha * b);
    let csupp1 = den_s > 0.0 && c > (b * b - b + 1.0) / den_s;
    let key =
        (c * (1.0 - 2.0 * alpha) - 2.0) * b * b > ((1.0 + 2.0 * c) / (2.0 - alpha) - 2.0) * b - 1.0 / (2.0 - alpha);
    Feasibility {
        alpha,
        b,
        c,
        abc_1,
        abc_2,
        abc_3,
        csupp1,
        key,
        b_lower,
        c_lower_abc_2,
        c_lower_abc_3,
        beta_max: 1.0 / (2.0 * b * c),
    }
}

/// `c > 2 + 1/(2b)` with `1 < b < 3/2`: the α → 0 limit of the conditions.
pub fn limiting_feasible(b: f64, c: f64) -> bool {
    b > 1.0 && b < 1.5 && c > 2.0 + 1.0 / (2.0 * b)
}

impl Schedule {
    pub fn new(a: f64, b: f64, c: f64, alpha: f64) -> Result<Self> {
        let s = Schedule {
            a,
            b,
            c,
            alpha,
            sigma0: default_sigma0(),
            c_tilde: default_c_tilde(),
            c_hat: default_c_hat(),
            q_max: default_q_max(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.a > 1.0 && self.a.is_finite()) {
            return bad(format!("a must exceed 1, got {}", self.a));
        }
        if !(self.b > 1.0 && self.c > 1.0) {
            return bad(format!("b and c must exceed 1, got b = {}, c = {}", self.b, self.c));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return bad(format!("alpha must lie in (0, 1/2), got {}", self.alpha));
        }
        if !(self.sigma0 > 0.0 && self.sigma0 < 1.0) {
            return bad(format!("sigma0 must lie in (0, 1), got {}", self.sigma0));
        }
        if !(self.c_tilde >= 1.0 && self.c_hat >= 1.0) {
            return bad("c_tilde and c_hat must be at least 1".into());
        }
        Ok(())
    }

    fn log_a(&self, x: f64) -> f64 {
        x.ln() / self.a.ln()
    }

    pub fn log_delta(&self, q: usize) -> f64 {
        -self.b.powi(q as i32)
    }

    pub fn log_lambda(&self, q: usize) -> f64 {
        self.c * self.b.powi(q as i32 + 1)
    }

    pub fn delta(&self, q: usize) -> f64 {
        self.a.powf(self.log_delta(q))
    }

    pub fn lambda(&self, q: usize) -> f64 {
        self.a.powf(self.log_lambda(q))
    }

    pub fn feasibility(&self) -> Feasibility {
        check_feasibility(self.alpha, self.b, self.c)
    }

    /// All stage-`q` parameters plus the chain
    /// `δ_qλ_q² ≥ 1`, `ℓ ≤ 1`, `λ_{q+1} ≥ μ ≥ ℓ⁻¹ ≥ λ_q` and
    /// `δ_q^{1/2}λ_qℓ^{−α/2} ≤ δ_{q+1}^{1/2}ℓ⁻¹`.
    pub fn derive(&self, q: usize) -> StageParams {
        let ld = [self.log_delta(q), self.log_delta(q + 1), self.log_delta(q + 2)];
        let ll = [self.log_lambda(q), self.log_lambda(q + 1)];
        let log_ell = (ld[1] - self.log_a(self.c_tilde) - ld[0] - 2.0 * ll[0]) / (2.0 - self.alpha);
        let log_mu = self.log_a(self.c_hat) + ld[1] + self.alpha * ll[1] - ld[2] - log_ell;
        let chain = vec![
            Link {
                name: "delta_q lambda_q^2 >= 1".into(),
                margin: ld[0] + 2.0 * ll[0],
            },
            Link {
                name: "ell <= 1".into(),
                margin: -log_ell,
            },
            Link {
                name: "delta_q^1/2 lambda_q ell^-alpha/2 <= delta_q+1^1/2 ell^-1".into(),
                margin: (0.5 * ld[1] - log_ell) - (0.5 * ld[0] + ll[0] - 0.5 * self.alpha * log_ell),
            },
            Link {
                name: "lambda_q <= ell^-1".into(),
                margin: -log_ell - ll[0],
            },
            Link {
                name: "ell^-1 <= mu".into(),
                margin: log_mu + log_ell,
            },
            Link {
                name: "mu <= lambda_q+1".into(),
                margin: ll[1] - log_mu,
            },
        ];
        StageParams {
            q,
            a: self.a,
            log_delta: ld,
            log_lambda: ll,
            log_ell,
            log_mu,
            chain,
        }
    }

    /// [`derive`](Self::derive), failing on the first violated link.
    pub fn derive_checked(&self, q: usize) -> Result<StageParams> {
        let p = self.derive(q);
        if let Some(l) = p.first_violation() {
            return Err(Error::ChainViolated(format!(
                "q = {q}: {} (margin {:.4} in log_a units)",
                l.name, l.margin
            )));
        }
        Ok(p)
    }

    /// Margin, in `log_a` units, of
    /// `δ_{q+2}² λ_{q+1}^{1−2α} ≥ C̲ δ_{q+1}² ℓ⁻¹`.
    pub fn key_inequality_margin(&self, q: usize, c_underbar: f64) -> f64 {
        let p = self.derive(q);
        2.0 * p.log_delta[2] + (1.0 - 2.0 * self.alpha) * p.log_lambda[1]
            - self.log_a(c_underbar)
            - 2.0 * p.log_delta[1]
            + p.log_ell
    }

    pub fn check_key_inequality(&self, q: usize, c_underbar: f64) -> (bool, f64) {
        let m = self.key_inequality_margin(q, c_underbar);
        (m >= -LOG_SLACK, m)
    }

    /// Stage `q` is resolvable when `λ_{q+1}·spacing ≤ guard` (radians per
    /// cell).
    pub fn resolution_guard(&self, q: usize, spacing: f64, guard: f64) -> bool {
        self.log_lambda(q + 1) <= self.log_a(guard / spacing)
    }

    /// Largest resolvable stage index, if any.
    pub fn last_runnable_stage(&self, spacing: f64, guard: f64) -> Option<usize> {
        (0..64).take_while(|&q| self.resolution_guard(q, spacing, guard)).last()
    }

    /// Real solution `q*` of `λ_{q*+1}·spacing = guard`; stages `q ≤ q*`
    /// are runnable.
    pub fn fractional_stages(&self, spacing: f64, guard: f64) -> f64 {
        ((guard / spacing).ln() / (self.c * self.a.ln())).ln() / self.b.ln() - 2.0
    }

    /// Largest `λ` the grid resolves.
    pub fn max_resolvable_frequency(spacing: f64, guard: f64) -> f64 {
        guard / spacing
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bench() -> Schedule {
        Schedule::new(2.0, 1.1, 2.5, 0.01).unwrap()
    }

    #[test]
    fn delta_and_lambda_values() {
        let s = Schedule::new(16.0, 2.0, 3.0, 0.01).unwrap();
        assert_relative_eq!(s.delta(0), 0.0625, max_relative = 1e-15);
        assert_relative_eq!(s.delta(1), 0.00390625, max_relative = 1e-15);
        assert_relative_eq!(s.lambda(0), 16f64.powi(6), max_relative = 1e-14);
    }

    #[test]
    fn benchmark_thresholds() {
        let f = check_feasibility(1e-9, 1.1, 2.5);
        assert!(f.feasible());
        assert_relative_eq!(f.c_lower_abc_3, 2.0 + 1.0 / 2.2, max_relative = 1e-8);
        assert_relative_eq!(f.beta_max, 1.0 / 5.5, max_relative = 1e-15);
    }

    #[test]
    fn ell_formula() {
        let s = bench();
        let p = s.derive(0);
        let lhs = p.ell().powf(2.0 - s.alpha);
        let rhs = p.delta_q1() / (s.c_tilde * p.delta_q() * p.lambda_q().powi(2));
        assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        let mu = s.c_hat * p.delta_q1() * p.lambda_q1().powf(s.alpha) / (p.delta_q2() * p.ell());
        assert_relative_eq!(p.mu(), mu, max_relative = 1e-12);
    }

    #[test]
    fn benchmark_chain_breaks_at_mu() {
        // a = 2 is far from the large-a regime: μ overshoots λ_{q+1}.
        let p = bench().derive(0);
        assert!(p.chain.iter().find(|l| l.name == "ell <= 1").unwrap().holds());
        assert!(!p.chain.iter().find(|l| l.name == "mu <= lambda_q+1").unwrap().holds());
        assert!(bench().derive_checked(0).is_err());
    }

    #[test]
    fn large_a_chain_holds() {
        let s = Schedule::new(1e12, 1.1, 2.5, 0.01).unwrap();
        for q in 0..5 {
            assert!(
                s.derive(q).chain_holds(),
                "q = {q}: {:?}",
                s.derive(q).first_violation()
            );
        }
    }

    #[test]
    fn resolution_guard_arithmetic() {
        let spacing = 2.0 / 511.0;
        let guard = std::f64::consts::FRAC_PI_4;
        assert!((Schedule::max_resolvable_frequency(spacing, guard) - 200.6).abs() < 0.1);
        let s = bench();
        assert!(s.resolution_guard(0, spacing, guard));
        let q = s.fractional_stages(spacing, guard);
        let last = s.last_runnable_stage(spacing, guard).unwrap();
        assert_eq!(last, q.floor() as usize);
    }

    #[test]
    fn key_margin_grows_for_feasible_exponents() {
        let s = Schedule::new(4.0, 1.2, 2.6, 0.001).unwrap();
        let m: Vec<f64> = (0..=10).map(|q| s.key_inequality_margin(q, 10.0)).collect();
        assert!(m.windows(2).all(|w| w[1] > w[0]));
        assert!(m.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn key_margin_negative_below_threshold() {
        let s = Schedule::new(4.0, 1.2, 2.2, 0.001).unwrap();
        assert!(s.key_inequality_margin(10, 10.0) < 0.0);
    }
}
