use std::collections::BTreeMap;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use slitkit::freeboundary::{pullback_angle, tip_coefficient, FluxSpec};
use slitkit::geometry::u0_of;
use slitkit::neumann::{constant_t, flat_normal_derivative, shifted_laplacian};
use slitkit::poly::multi_indices_up_to;
use slitkit::whitney::{build_mollifier, whitney_extend, YPolynomial};
use slitkit::xrpoly::single_free;
use slitkit::{closest_point_frame, laplacian_of_product, rat, solve_approximating, GammaJet, Poly, Rat, SlitGeometry, XrPoly};

fn small_rat() -> impl Strategy<Value = Rat> {
    (-9i64..=9, 1i64..=5).prop_map(|(a, b)| rat(a, b))
}

/// Seven-point Laplacian in `ℝⁿ⁺¹` of `(U₀/2r)·T` in the flat geometry.
fn fd_laplacian(t: &XrPoly<f64>, x: &[f64], h: f64) -> f64 {
    let n = x.len() - 1;
    let f = |y: &[f64]| {
        let (d, s) = (y[n - 1], y[n]);
        let r = d.hypot(s);
        u0_of(d, s) / (2.0 * r) * t.eval_xr(&y[..n], r)
    };
    let mut lap = -2.0 * (n + 1) as f64 * f(x);
    for i in 0..=n {
        let mut p = x.to_vec();
        p[i] += h;
        lap += f(&p);
        p[i] -= 2.0 * h;
        lap += f(&p);
    }
    lap / (h * h)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn approximating_polynomials_are_exact_and_linear(
        n in 1usize..=3,
        k in 0u32..=2,
        pick in 0usize..64,
        c in small_rat(),
    ) {
        let jet = GammaJet::flat(n, k);
        let free: Vec<_> = multi_indices_up_to(n, k + 1).into_iter().filter(|m| m[n - 1] != 0).collect();
        let mu = free[pick % free.len()].clone();
        let zero = slitkit::XRPolynomial::zero(n);
        let p1 = solve_approximating(&jet, &zero, &single_free(mu.clone(), rat(1, 1)), k).unwrap();
        let pc = solve_approximating(&jet, &zero, &single_free(mu, c.clone()), k).unwrap();
        prop_assert!(laplacian_of_product(&pc, &jet, k).total().is_zero());
        prop_assert_eq!(p1.scale(&c), pc);
    }

    #[test]
    fn flat_family_is_harmonic_with_zero_normal_derivative(
        k in 0u32..=2,
        qc in proptest::collection::vec(small_rat(), 4),
        bc in proptest::collection::vec(small_rat(), 3),
        x in -0.4f64..0.4,
        a in 0.2f64..3.0,
    ) {
        let mut q = BTreeMap::new();
        for (j, c) in qc.iter().enumerate().take(k as usize + 3) {
            q.insert(vec![j as u32, 0], c.clone());
        }
        let mut b1 = BTreeMap::new();
        for (j, c) in bc.iter().enumerate().take(k as usize + 1) {
            b1.insert(vec![0, j as u32 + 1], c.clone());
        }
        let t = constant_t(2, k, &q, &b1).unwrap();
        prop_assert!(shifted_laplacian(&t).is_zero());
        prop_assert!(flat_normal_derivative(&t).is_zero());
        // Independent check of harmonicity by finite differences off the slit.
        let p = [x, 0.3 * a.cos(), 0.3 * a.sin()];
        let lap = fd_laplacian(&t.to_f64(), &p, 1e-3);
        let scale = t.to_f64().coeffs_sorted().iter().map(|(_, _, c)| c.abs()).sum::<f64>().max(1.0);
        prop_assert!(lap.abs() <= 1e-4 * scale, "lap {lap}");
    }

    #[test]
    fn flat_extension_reproduces_low_degree(
        k in 0u32..=2,
        coeffs in proptest::collection::vec(-2.0f64..2.0, 5),
        x in -0.5f64..0.5,
        y in -0.5f64..0.5,
    ) {
        let m = build_mollifier(2, k).unwrap();
        let mut q = Poly::zero(2);
        for (j, c) in coeffs.iter().enumerate().take(k as usize + 3) {
            q.add_term(vec![j as u32, 0], *c);
        }
        let e = whitney_extend(&YPolynomial::new(q.clone()).unwrap(), &SlitGeometry::flat(2), &m, &[vec![x, y]]).unwrap();
        let direct: f64 = coeffs.iter().take(k as usize + 3).enumerate().map(|(j, c)| c * x.powi(j as i32)).sum();
        prop_assert!((e[0] - direct).abs() <= 1e-8 * (1.0 + direct.abs()), "{} vs {direct}", e[0]);
    }

    #[test]
    fn closest_point_matches_brute_force(x1 in -0.5f64..0.5, x2 in -0.5f64..0.5) {
        let geom = SlitGeometry::parabola();
        let f = closest_point_frame(&geom, &[x1, x2, 0.0]).unwrap();
        let best = (-20000..=20000)
            .map(|j| {
                let s = j as f64 * 1e-4;
                (x1 - s).hypot(x2 - s * s / 4.0)
            })
            .fold(f64::INFINITY, f64::min);
        prop_assert!((f.d.abs() - best).abs() <= 1e-6, "{} vs {best}", f.d);
        prop_assert!((f.z[1] - f.z[0] * f.z[0] / 4.0).abs() <= 1e-12);
    }

    #[test]
    fn tip_coefficient_is_linear_in_data(
        gamma in -0.7f64..0.7,
        c1 in -3.0f64..3.0,
        c2 in -3.0f64..3.0,
    ) {
        let phi1 = |t: f64| (t / 2.0).cos();
        let phi2 = |t: f64| (1.5 * t).cos();
        let a1 = tip_coefficient(gamma, &phi1).unwrap();
        let a2 = tip_coefficient(gamma, &phi2).unwrap();
        let mix = tip_coefficient(gamma, &|t| c1 * phi1(t) + c2 * phi2(t)).unwrap();
        prop_assert!((mix - c1 * a1 - c2 * a2).abs() <= 1e-10 * (1.0 + mix.abs()));
    }

    #[test]
    fn pullback_is_monotone_and_fixes_the_ends(gamma in -0.8f64..0.8, a in -3.1f64..3.1, b in -3.1f64..3.1) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-6);
        prop_assert!(pullback_angle(gamma, lo) < pullback_angle(gamma, hi));
        prop_assert!(pullback_angle(gamma, 0.0).abs() <= 1e-15);
        prop_assert!((pullback_angle(gamma, std::f64::consts::PI).abs() - std::f64::consts::PI).abs() <= 1e-12);
    }
}

#[test]
fn dilation_scales_curvature() {
    for (p, q) in [(1, 2), (1, 1), (3, 1)] {
        let lambda = rat(p, q);
        let g = SlitGeometry::parabola().dilate(&lambda).unwrap();
        assert_abs_diff_eq!(g.curvature_at(0.0).abs(), p as f64 / q as f64 / 2.0, epsilon = 1e-12);
    }
}

#[test]
fn polynomial_flux_is_horner() {
    let f = FluxSpec::Polynomial { coeffs: vec![1.0, -0.5, 0.25] };
    for g in [-0.9, 0.0, 0.4] {
        assert_abs_diff_eq!(f.eval(g), 1.0 - 0.5 * g + 0.25 * g * g, epsilon = 1e-15);
    }
}

#[test]
fn float_csv_lists_every_term() {
    let mut p = XrPoly::<f64>::zero(2);
    p.add_term(&[1, 0], 0, 0.5);
    p.add_term(&[0, 0], 2, -1.0);
    let csv = p.to_csv();
    assert!(csv.starts_with("mu_1,mu_2,m,coeff\n"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn harmonicity_oracle_detects_a_non_solution() {
    let mut t = XrPoly::<f64>::zero(2);
    t.add_term(&[2, 0], 0, 1.0);
    let lap = fd_laplacian(&t, &[0.1, 0.2, 0.2], 1e-3);
    assert!(lap.abs() > 0.1, "{lap}");
}
