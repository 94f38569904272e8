use std::f64::consts::TAU;

use c1beta::conformal::{factorize, random_metric, FactorizeOptions};
use c1beta::corrugation::CorrugationProfile;
use c1beta::field::{holder_seminorm, pullback, ComplexField, Grid, MapField, ScalarField, Sym2};
use c1beta::mollifier::mollify;
use c1beta::pipeline::{injectivity_check, triangulate};
use c1beta::schedule::{check_feasibility, Schedule};
use c1beta::stage_nash::{decompose_primitive, nash_twist};
use c1beta::transform::TransformPlan;
use nalgebra::{Rotation3, Vector2, Vector3};
use num_complex::Complex64;
use proptest::prelude::*;

fn small_grid() -> Grid {
    Grid::disk(1.0, 33).unwrap()
}

fn curved(a: f64, b: f64) -> impl Fn(f64, f64) -> Vector3<f64> {
    move |x, y| Vector3::new(x + a * y * y, y, b * x * y + 0.2 * x * x)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pullback_is_rigid_motion_invariant(
        a in -0.5..0.5f64, b in -0.5..0.5f64,
        axis in prop::array::uniform3(-1.0..1.0f64), angle in 0.0..TAU,
        shift in prop::array::uniform3(-3.0..3.0f64),
    ) {
        prop_assume!(Vector3::from(axis).norm() > 1e-3);
        let g = small_grid();
        let u = MapField::from_fn(g, curved(a, b));
        let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vector3::from(axis)), angle);
        let moved = u.map(|p| rot * p + Vector3::from(shift));
        let diff = pullback(&moved).unwrap().sub(&pullback(&u).unwrap()).unwrap().sup_norm();
        prop_assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn lipschitz_estimate_is_below_derivative_sup(a in -2.0..2.0f64, b in -2.0..2.0f64, seed in any::<u64>()) {
        let g = Grid::disk(1.0, 65).unwrap();
        let f = ScalarField::from_fn(g, |x, y| (a * x).sin() + (b * y).cos() * x);
        let lip = holder_seminorm(&f, 1.0, 2000, seed).unwrap();
        let dsup = f.derivative_sup().unwrap();
        prop_assert!(lip <= dsup * (1.0 + 0.02) + 1e-12, "{lip} > {dsup}");
    }

    #[test]
    fn mollifier_is_linear_and_positive(c1 in -3.0..3.0f64, c2 in -3.0..3.0f64, k in 1.0..6.0f64) {
        let g = Grid::disk(1.0, 65).unwrap();
        let f = ScalarField::from_fn(g, |x, y| (k * x * y).sin().powi(2));
        let h = ScalarField::from_fn(g, |x, y| (k * x).cos() + y);
        let ell = 0.15;
        let combo = f.scale(c1).add(&h.scale(c2)).unwrap();
        let lhs = mollify(&combo, ell).unwrap();
        let rhs = mollify(&f, ell).unwrap().scale(c1).add(&mollify(&h, ell).unwrap().scale(c2)).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().sup_norm() < 1e-12);
        let fm = mollify(&f, ell).unwrap();
        prop_assert!(fm.masked_values().all(|(_, v)| v >= 0.0));
    }

    #[test]
    fn corrugation_identity_and_periodicity(s_frac in 0.0..1.0f64, xi in -20.0..20.0f64) {
        let profile = CorrugationProfile::new();
        let s = s_frac * profile.s_max();
        let p = profile.at(s).unwrap();
        let (dt, dn) = p.dgamma_dxi(xi);
        prop_assert!(((1.0 + dt).powi(2) + dn * dn - (1.0 + s * s)).abs() < 1e-10);
        for k in 0..=3 {
            let (a0, b0) = p.dxi_k(k, xi);
            let (a1, b1) = p.dxi_k(k, xi + TAU);
            prop_assert!((a0 - a1).abs() < 1e-10 && (b0 - b1).abs() < 1e-10, "order {k}");
        }
    }

    #[test]
    fn primitive_reassembly_is_exact(
        xi in 0.0..2.0f64, omega in 0.0..2.0f64, t in -1.0..1.0f64,
    ) {
        let zeta = t * xi.min(omega);
        let g = small_grid();
        let d = c1beta::field::MetricField::from_fn_masked(g, |x, y| {
            Sym2::new(xi, zeta, omega) * (1.0 + 0.1 * x * y)
        });
        let dec = decompose_primitive(&d).unwrap();
        prop_assert!(dec.amplitudes.iter().all(|a| a.masked_values().all(|(_, v)| v >= 0.0)));
        prop_assert!(dec.reassemble().sub(&d).unwrap().sup_norm() <= 1e-14 * (1.0 + xi + omega));
    }

    #[test]
    fn transforms_are_linear(c in prop::array::uniform2(-2.0..2.0f64), k in 1.0..4.0f64) {
        let g = small_grid();
        let plan = TransformPlan::new(g);
        let f = ComplexField::from_fn_masked(g, |x, y| Complex64::new((k * x).sin(), y * y));
        let h = ComplexField::from_fn_masked(g, |x, y| Complex64::new(x * y, (k * y).cos()));
        let w = Complex64::new(c[0], c[1]);
        let combo = f.zip_map(&h, |a, b| a * w + b).unwrap();
        for op in [TransformPlan::cauchy, TransformPlan::beurling] {
            let lhs = op(&plan, &combo).unwrap();
            let rhs = op(&plan, &f).unwrap().zip_map(&op(&plan, &h).unwrap(), |a, b| a * w + b).unwrap();
            let scale = 1.0 + lhs.sup_norm();
            let diff = lhs.sub(&rhs).unwrap().sup_norm();
            prop_assert!(diff < 1e-12 * scale, "{diff} vs {scale}");
        }
    }

    #[test]
    fn twist_keeps_an_immersion(freq_exp in 2u32..5, amp in 0.01..0.2f64) {
        let g = Grid::disk(1.0, 129).unwrap();
        let u = MapField::from_fn(g, |x, y| Vector3::new(0.9 * x, 0.9 * y, 0.0));
        let phi_sq = ScalarField::from_fn(g, |x, _| amp * (1.0 + 0.3 * x));
        let t = nash_twist(&u, Vector2::new(1.0, 0.0), &phi_sq, f64::from(1u32 << freq_exp), &CorrugationProfile::new(), 1.0).unwrap();
        let inj = injectivity_check(&t.u, 0.1, 800).unwrap();
        prop_assert!(inj.local > 0.0 && inj.far > 0.0);
    }

    #[test]
    fn linear_maps_scale_the_margin(c in 0.1..5.0f64) {
        let g = small_grid();
        let u = MapField::from_fn_masked(g, |x, y| Vector3::new(x + 0.3 * y, y, 0.5 * x));
        let base = injectivity_check(&u, 0.1, 10_000).unwrap();
        let scaled = injectivity_check(&u.scale(c), 0.1, 10_000).unwrap();
        prop_assert!((scaled.far - c * base.far).abs() <= 1e-12 * c);
        prop_assert!((scaled.local - c * base.local).abs() <= 1e-9 * c);
    }

    #[test]
    fn mesh_vertex_count_matches_mask(n in 9usize..60, r in 0.3..1.0f64) {
        let g = Grid::new(1.0, n, r).unwrap();
        let u = MapField::from_fn_masked(g, |x, y| Vector3::new(x, y, x * y));
        let m = triangulate(&u);
        prop_assert_eq!(m.vertices.len(), g.masked_count());
        prop_assert!(m.faces.iter().flatten().all(|&i| i >= 1 && i <= m.vertices.len()));
    }

    #[test]
    fn feasibility_is_monotone_in_alpha(b in 1.0..1.5f64, c in 2.0..4.0f64, alpha in 0.0..0.05f64, t in 0.0..1.0f64) {
        if check_feasibility(alpha, b, c).feasible() {
            prop_assert!(check_feasibility(alpha * t, b, c).feasible());
        }
    }

    #[test]
    fn derive_is_pure_and_finite(a in 1.5..1e6f64, b in 1.01..1.49f64, c in 2.0..4.0f64, q in 0usize..=10) {
        let s = Schedule::new(a, b, c, 0.01).unwrap();
        let p1 = s.derive(q);
        let p2 = s.derive(q);
        prop_assert_eq!(&p1, &p2);
        prop_assert!(p1.chain.iter().all(|l| l.margin.is_finite()));
        prop_assert!(s.key_inequality_margin(q, 10.0).is_finite());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn factorization_is_oriented_and_conformal(seed in any::<u64>(), size in 0.01..0.1f64) {
        let g = Grid::disk(1.0, 49).unwrap();
        let h = random_metric(g, size, seed);
        let f = factorize(&h, &FactorizeOptions { sigma1: None, ..Default::default() }).unwrap();
        prop_assert!(f.jacobian_min > 0.0);
        prop_assert!(f.residual_sup < 0.05 * f.h_minus_e);
        prop_assert!(f.fixed_point_ratios.iter().all(|&r| r < 1.0));
    }
}
