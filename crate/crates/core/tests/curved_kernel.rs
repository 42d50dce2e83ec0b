//! Finite-difference check of the curved approximating polynomials, independent of the
//! symbolic Laplacian table.

use slitkit::expansion::loglog_fit;
use slitkit::xrpoly::single_free;
use slitkit::{closest_point_frame, gamma_jet, rat, solve_approximating, GeometrySpec, SlitGeometry, XRPolynomial, XrPoly};

/// `(r/U₀)·Δ(U₀P)` at `X` by a Richardson-extrapolated seven-point stencil.
fn scaled_laplacian(geom: &SlitGeometry, p: &XrPoly<f64>, x: &[f64], h: f64) -> f64 {
    let f = |y: &[f64]| {
        let fr = closest_point_frame(geom, y).unwrap();
        fr.u0 * p.eval_xr(&y[..2], fr.r)
    };
    let lap = |h: f64| {
        let mut s = -6.0 * f(x);
        for i in 0..3 {
            let mut q = x.to_vec();
            q[i] += h;
            s += f(&q);
            q[i] -= 2.0 * h;
            s += f(&q);
        }
        s / (h * h)
    };
    let fr = closest_point_frame(geom, x).unwrap();
    (4.0 * lap(h / 2.0) - lap(h)) / 3.0 * fr.r / fr.u0
}

/// Decay exponent of `sup (r/U₀)|Δ(U₀P)|` over a few directions at radii `ρ → 0`.
fn decay(geom: &SlitGeometry, p: &XRPolynomial) -> f64 {
    let pf = p.to_f64();
    let radii: Vec<f64> = (0..4).map(|j| 0.2 / 2f64.powi(j)).collect();
    let dirs = [[0.3, 0.4, 0.866], [-0.5, 0.2, 0.84], [0.1, -0.6, 0.79]];
    let sups: Vec<f64> = radii
        .iter()
        .map(|&rho| {
            dirs.iter()
                .map(|d| {
                    let x: Vec<f64> = d.iter().map(|c| c * rho).collect();
                    scaled_laplacian(geom, &pf, &x, rho / 100.0).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    loglog_fit(&radii, &sups).0
}

#[test]
fn curved_kernel_has_full_order_and_the_right_sign() {
    let geom = SlitGeometry::parabola();
    let mirrored = GeometrySpec { g_coeffs: vec!["0".into(), "0".into(), "-1/4".into()], ..GeometrySpec::parabola() }
        .build()
        .unwrap();
    for k in 1..=2u32 {
        let free = single_free(vec![0, 1], rat(1, 1));
        let right = solve_approximating(&gamma_jet(&geom, &[rat(0, 1)], k + 1).unwrap(), &XRPolynomial::zero(2), &free, k).unwrap();
        let wrong =
            solve_approximating(&gamma_jet(&mirrored, &[rat(0, 1)], k + 1).unwrap(), &XRPolynomial::zero(2), &free, k).unwrap();
        let (good, bad) = (decay(&geom, &right), decay(&geom, &wrong));
        println!("k = {k}: exponent {good:.3}, mirrored jet {bad:.3}");
        assert!(good >= k as f64 + 1.0 - 0.2, "k = {k}: {good}");
        assert!(bad < good - 0.5, "k = {k}: mirrored jet decays at {bad}");
    }
}
