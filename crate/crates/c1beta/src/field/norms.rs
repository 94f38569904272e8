//! Discrete Hölder estimators. All of them are lower bounds of the
//! continuum seminorm because they only look at finitely many pairs.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Field, Value};
use crate::error::{Error, Result};

pub const DEFAULT_SEED: u64 = 0x5eed_c1be;

/// Minimum number of random pairs accepted by [`holder_seminorm`].
pub const MIN_SAMPLE_PAIRS: usize = 1000;

/// `max |f(x) − f(y)| / |x − y|^α` over all nearest-neighbour pairs of masked
/// nodes plus `sample_pairs` random pairs drawn from a seeded stream.
///
/// The random pairs form a prefix-consistent sequence, so the estimate never
/// decreases when `sample_pairs` grows.
pub fn holder_seminorm<T: Value>(f: &Field<T>, alpha: f64, sample_pairs: usize, seed: u64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("Hölder exponent {alpha} not in (0, 1]")));
    }
    if sample_pairs < MIN_SAMPLE_PAIRS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_SAMPLE_PAIRS} sample pairs, got {sample_pairs}"
        )));
    }
    let g = f.grid();
    let nodes = g.masked_indices();
    if nodes.len() < 2 {
        return Ok(0.0);
    }
    let quotient = |a: usize, b: usize| {
        let (xa, ya) = g.point(a);
        let (xb, yb) = g.point(b);
        let d = ((xa - xb).powi(2) + (ya - yb).powi(2)).sqrt();
        (f.get(a) - f.get(b)).norm() / d.powf(alpha)
    };
    let n = g.n();
    let mut best = 0.0f64;
    for &k in &nodes {
        let (i, j) = g.ij(k);
        if i + 1 < n && g.is_masked(k + 1) {
            best = best.max(quotient(k, k + 1));
        }
        if j + 1 < n && g.is_masked(k + n) {
            best = best.max(quotient(k, k + n));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..sample_pairs {
        let a = nodes[rng.random_range(0..nodes.len())];
        let b = nodes[rng.random_range(0..nodes.len())];
        if a != b {
            best = best.max(quotient(a, b));
        }
    }
    Ok(best)
}

/// `‖f‖₀ + [f]_α` with the sampled seminorm.
pub fn holder_norm<T: Value>(f: &Field<T>, alpha: f64, sample_pairs: usize, seed: u64) -> Result<f64> {
    Ok(f.sup_norm() + holder_seminorm(f, alpha, sample_pairs, seed)?)
}

/// Upper proxy `‖f‖₀ + 2‖f‖₀^{1−α}‖Df‖₀^α` for the α-Hölder norm.
pub fn interpolation_proxy(sup: f64, dsup: f64, alpha: f64) -> f64 {
    sup + 2.0 * sup.powf(1.0 - alpha) * dsup.powf(alpha)
}
